"""Command-line front end: ``pnn <verb> [--flags]``.

Every artifact embeds the run configuration and its sha256, and is a pure
function of that configuration and the input files.  Exit codes: 0 ok,
2 construction failure, 3 schedule failure, 4 malformed input, 5 precision
failure.  PNN_THREADS is accepted for compatibility; the pipeline runs in a
single thread.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import random
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import jsonschema

from . import __version__
from .analysis import (check_cover, connector_bound, dimension_estimate, dimension_ledger,
                       frequency_trace, length_ratios, limit_point_scan, random_cover)
from .beta import (beta_expand, beta_value, count_language, enumerate_language, is_admissible,
                   load_system, to_fraction)
from .construction import (ConstructionConfig, ConstructionState, EpsilonPolicy, gamma_family,
                           sample_pnn_prefix)
from .errors import DomainError, PNNError
from .measures import measure_pair, parry_measure
from .specification import GluingTable, glue
from .words import as_word, format_word

DEFAULT_SYSTEM = {"kind": "integer", "N": 3}

TRACE_SCHEMA = {
    "type": "object",
    "required": ["config", "configHash", "construction", "checkpoints", "dimension", "lemmaHolds"],
    "properties": {
        "configHash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "lemmaHolds": {"type": "boolean"},
        "checkpoints": {"type": "array", "items": {
            "type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3}},
        "construction": {"type": "object", "required": ["stages", "C", "trackedDigits"], "properties": {
            "stages": {"type": "array", "items": {
                "type": "object",
                "required": ["j", "n", "rho", "eta", "lengths", "lemma"],
                "properties": {"j": {"type": "integer", "minimum": 1},
                               "n": {"type": "integer", "minimum": 1},
                               "rho": {"type": "number", "minimum": 0},
                               "eta": {"type": "number", "minimum": 0}}}}}},
        "dimension": {"type": "object", "required": ["sStar", "target", "trend"]},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "configHash", "input", "digits"],
    "properties": {
        "configHash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "digits": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["verdict", "estimates", "oscillation", "final"],
            "properties": {"verdict": {"enum": ["convergent", "divergent", "inconclusive"]}}}},
    },
}


class ArgumentError(DomainError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str):  # malformed input is exit 4, not argparse's 2
        raise ArgumentError(message)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_text(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)  # RFC 4180: CRLF line endings, minimal quoting
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def system_from(args) -> tuple[Any, dict]:
    if args.system is None:
        descriptor = dict(DEFAULT_SYSTEM)
    else:
        try:
            descriptor = json.loads(Path(args.system).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read system descriptor {args.system}: {exc}") from exc
    return load_system(descriptor), descriptor


def _threads() -> int:
    raw = os.environ.get("PNN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise DomainError(f"PNN_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise DomainError("PNN_THREADS must be >= 1")
    return n


# verbs ------------------------------------------------------------------------


def cmd_expand(args) -> int:
    system, descriptor = system_from(args)
    x = to_fraction(args.x)
    digits = beta_expand(x, system, args.n)
    config = {"command": "expand", "system": descriptor, "x": str(x), "n": args.n}
    residual = float(x) - float(beta_value(digits, system))
    text = format_word(digits, system.alphabet_size) + "\n"
    text += f"residual {residual:.6e}\n"
    text += f"config {config_hash(config)}\n"
    write_text(args.out, text)
    return 0


def cmd_admissible(args) -> int:
    system, _ = system_from(args)
    w = as_word(args.word)
    write_text(args.out, ("true" if is_admissible(w, system) else "false") + "\n")
    return 0


def cmd_language(args) -> int:
    system, _ = system_from(args)
    if args.count_only:
        write_text(args.out, f"{count_language(system.automaton, args.n)}\n")
        return 0
    words = enumerate_language(system.automaton, args.n)
    write_text(args.out, "".join(format_word(w, system.alphabet_size) + "\n" for w in words))
    return 0


def cmd_measure(args) -> int:
    system, _ = system_from(args)
    nu = parry_measure(system)
    m = measure_pair(system, nu).mu if args.which == "mu" else nu
    rows = []
    for n in range(1, args.max_len + 1):
        for w in enumerate_language(system.automaton, n):
            v = m(w)
            rows.append([format_word(w, system.alphabet_size), str(v) if isinstance(v, Fraction) else repr(v)])
    write_text(args.out, csv_text(["word", "value"], rows))
    return 0


def cmd_glue(args) -> int:
    system, _ = system_from(args)
    table = GluingTable(system.automaton)
    if args.table:
        rows = [[q, t, format_word(v, system.alphabet_size)] for q, t, v in table.rows()]
        write_text(args.out, csv_text(["stateFrom", "stateTo", "connector"], rows))
        return 0
    if args.left is None or args.right is None:
        raise DomainError("glue needs --left and --right (or --table)")
    out = glue(args.left, args.right, table)
    write_text(args.out, format_word(out, system.alphabet_size) + "\n")
    return 0


def _policy(args) -> EpsilonPolicy:
    if getattr(args, "epsilon", None) is not None:
        return EpsilonPolicy(fixed=to_fraction(args.epsilon))
    return EpsilonPolicy(K=to_fraction(args.epsilon_k))


def cmd_gamma(args) -> int:
    system, descriptor = system_from(args)
    pair = measure_pair(system)
    fam = gamma_family(system, pair.nu, args.n, _policy(args),
                       (pair.divergent_digit, pair.convergent_digit))
    config = {"command": "gamma", "system": descriptor, "n": args.n, "policy": fam.threshold}
    out = {"config": config, "configHash": config_hash(config), "n": fam.n, "size": fam.size,
           "epsilon": str(fam.epsilon_n) if isinstance(fam.epsilon_n, Fraction) else fam.epsilon_n,
           "eta": fam.eta_n, "words": [format_word(w, system.alphabet_size) for w in fam.words]}
    write_text(args.out, dump_json(out))
    return 0


def _construction_config(args, descriptor: dict) -> tuple[dict, ConstructionConfig]:
    cc = ConstructionConfig(p=args.p, stages=args.stages, policy=_policy(args),
                            growth=args.growth, omega=args.omega)
    config = {"command": "construct", "system": descriptor, **cc.describe(),
              "selector": args.selector, "seed": args.seed}
    return config, cc


def _construction_payload(state: ConstructionState, config: dict, sample) -> dict:
    est = dimension_estimate(state)
    ledger = dimension_ledger(state)
    return {
        "config": config,
        "configHash": config_hash(config),
        "construction": state.trace(),
        "checkpoints": [list(c) for c in sample.checkpoints],
        "lengthRatios": [{"j": j, "fixedOverEnd": a, "gammaOverEnd": b} for j, a, b in length_ratios(state)],
        "dimension": {"sStar": est.s_star, "target": est.target,
                      "trend": [{"j": j, "n": n, "sStar": s} for j, n, s in est.trend]},
        "ledger": ledger.rows(),
        "lemmaHolds": state.lemma_holds,
        "connectorBound": connector_bound(sample, state),
        "wordLength": len(sample.word),
        "wordSha256": hashlib.sha256(bytes(sample.word)).hexdigest(),
    }


def cmd_construct(args) -> int:
    system, descriptor = system_from(args)
    config, cc = _construction_config(args, descriptor)
    state = ConstructionState(system, cc).build()
    sample = sample_pnn_prefix(state, selector=args.selector, seed=args.seed)
    payload = _construction_payload(state, config, sample)
    jsonschema.validate(payload, TRACE_SCHEMA)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "word.txt").write_text(format_word(sample.word, system.alphabet_size) + "\n", encoding="utf-8")
    rows = [[a.offset, a.length, a.kind, a.stage, a.index] for a in sample.annotations]
    (out / "annotations.csv").write_text(
        csv_text(["offset", "length", "kind", "stage", "index"], rows), encoding="utf-8", newline="")
    (out / "trace.json").write_text(dump_json(payload), encoding="utf-8")
    write_manifest(out, config, ["word.txt", "annotations.csv", "trace.json"])
    if not state.lemma_holds:
        print("construction: cardinality lemma violated, see trace.json", file=sys.stderr)
        return 2
    return 0


def _read_word(path: Path) -> tuple:
    try:
        text = path.read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise DomainError(f"cannot read word file: {exc}") from exc
    if not text:
        raise DomainError("word file is empty")
    return as_word(text)


def checkpoints_from_annotations(path: Path) -> list[tuple[int, int, int]]:
    """(j, 0, end of last fixed block) and (j, 1, end of stage j) from an annotation CSV."""
    fixed: dict[int, int] = {}
    ends: dict[int, int] = {}
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                j, end = int(row["stage"]), int(row["offset"]) + int(row["length"])
                if row["kind"] == "fixed":
                    fixed[j] = end
                if row["kind"] != "glue":
                    ends[j] = end
    except (OSError, KeyError, ValueError) as exc:
        raise DomainError(f"malformed annotation file {path}: {exc}") from exc
    out = [(j, 0, m) for j, m in fixed.items()] + [(j, 1, m) for j, m in ends.items()]
    return sorted(out)


def write_manifest(out: Path, config: dict, names: list[str]) -> None:
    files = {n: hashlib.sha256((out / n).read_bytes()).hexdigest() for n in sorted(names)}
    (out / "manifest.json").write_text(
        dump_json({"config": config, "configHash": config_hash(config), "files": files}), encoding="utf-8")


def cmd_analyze(args) -> int:
    annotations = None
    if args.input is not None:
        src = Path(args.input)
        word_path = src / "word.txt"
        trace_path = src / "trace.json"
        annotations = src / "annotations.csv"
    else:
        if args.word is None:
            raise DomainError("analyze needs --input DIR or --word FILE")
        word_path = Path(args.word)
        trace_path = Path(args.trace) if args.trace else None
        annotations = Path(args.annotations) if args.annotations else None
    word = _read_word(word_path)
    trace = None
    if trace_path is not None and trace_path.exists():
        try:
            trace = json.loads(trace_path.read_text(encoding="utf-8"))
            jsonschema.validate(trace, TRACE_SCHEMA)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            raise DomainError(f"malformed construction trace: {exc}") from exc
    if trace:
        checkpoints = [tuple(c) for c in trace["checkpoints"]]
    elif annotations is not None and annotations.exists():
        checkpoints = checkpoints_from_annotations(annotations)
    else:
        checkpoints = []
    if checkpoints and checkpoints[-1][2] > len(word):
        raise DomainError("annotations run past the end of the word")
    alphabet = max(word) + 1
    if trace:
        alphabet = load_system(trace["config"]["system"]).alphabet_size
    config = {"command": "analyze", "tolerance": args.tol, "finalFraction": args.final_fraction,
              "coverSeed": args.seed, "covers": args.covers,
              "source": trace["configHash"] if trace else hashlib.sha256(bytes(word)).hexdigest(),
              "checkpoints": len(checkpoints)}
    report: dict[str, Any] = {"config": config, "configHash": config_hash(config),
                              "input": {"wordLength": len(word), "annotated": bool(checkpoints)},
                              "digits": {}}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in range(alphabet):
        tr = frequency_trace(word, d, checkpoints)
        res = limit_point_scan(tr, tol=args.tol, final_fraction=args.final_fraction)
        report["digits"][str(d)] = {"verdict": res.status, "estimates": res.estimates,
                                    "oscillation": res.oscillation, "final": res.final_value,
                                    "stage": res.stage}
        vals = tr.values()
        rows = ([m, repr(float(vals[m - 1]))] for m in range(1, len(vals) + 1, args.stride))
        (out / f"trace_digit{d}.csv").write_text(csv_text(["m", "frequency"], rows),
                                                 encoding="utf-8", newline="")
    if trace:
        report["dimension"] = trace["dimension"]
        report["lengthRatios"] = trace["lengthRatios"]
        report["cardinalityLemma"] = trace["lemmaHolds"]
        report["coverLemma"] = _cover_checks(trace, args)
    jsonschema.validate(report, REPORT_SCHEMA)
    (out / "report.json").write_text(dump_json(report), encoding="utf-8")
    write_manifest(out, config, ["report.json"] + [f"trace_digit{d}.csv" for d in range(alphabet)])
    return 0


def _cover_checks(trace: dict, args) -> dict:
    cfg = trace["config"]
    system = load_system(cfg["system"])
    pol = cfg["epsilonPolicy"]
    policy = EpsilonPolicy(fixed=Fraction(pol["epsilon"])) if pol["rule"] == "fixed" else EpsilonPolicy(K=Fraction(pol["K"]))
    cc = ConstructionConfig(p=cfg["p"], stages=cfg["stages"], policy=policy,
                            growth=cfg["growth"], omega=cfg["omega"])
    state = ConstructionState(system, cc).build()
    rng = random.Random(args.seed)
    out = {}
    for s in (0.3, 0.45):
        results = [check_cover(state, random_cover(state, rng), s) for _ in range(args.covers)]
        out[str(s)] = {"covers": len(results), "violations": sum(not r.holds for r in results),
                       "minMargin": min(r.margin for r in results)}
    return out


def cmd_dimension(args) -> int:
    system, descriptor = system_from(args)
    cc = ConstructionConfig(p=args.p, stages=args.stages, policy=_policy(args), growth=args.growth,
                            omega=args.omega)
    state = ConstructionState(system, cc).build()
    est = dimension_estimate(state)
    config = {"command": "dimension", "system": descriptor, **cc.describe()}
    out = {"config": config, "configHash": config_hash(config), "sStar": est.s_star,
           "target": est.target, "trend": [{"j": j, "n": n, "sStar": s} for j, n, s in est.trend],
           "ledger": dimension_ledger(state).rows()}
    write_text(args.out, dump_json(out))
    return 0


# parser -----------------------------------------------------------------------


def _construction_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--stages", type=int, default=4)
    p.add_argument("--epsilon-k", default="5/4", help="K in epsilon(n) = max(min, K/sqrt(n))")
    p.add_argument("--epsilon", default=None, help="fixed epsilon (overrides --epsilon-k)")
    p.add_argument("--growth", choices=["linear", "exponential"], default="linear")
    p.add_argument("--omega", choices=["balanced", "generic"], default="balanced")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="pnn", description="Beta-shift toolkit for building particularly non-normal sequences.")
    parser.add_argument("--version", action="version", version=f"pnn {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=Parser)

    def verb(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--system", default=None, help="system descriptor JSON (default: integer base 3)")
        p.add_argument("--out", default=None)
        p.set_defaults(func=func)
        return p

    p = verb("expand", cmd_expand, "greedy beta-expansion digits")
    p.add_argument("--x", required=True)
    p.add_argument("--n", type=int, required=True)

    p = verb("admissible", cmd_admissible, "Parry admissibility of a word")
    p.add_argument("--word", required=True)

    p = verb("language", cmd_language, "admissible words of a length")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count-only", action="store_true")

    p = verb("measure", cmd_measure, "CSV dump of nu or mu on cylinders")
    p.add_argument("--which", choices=["nu", "mu"], default="nu")
    p.add_argument("--max-len", type=int, default=3)

    p = verb("glue", cmd_glue, "glue two words, or dump the connector table")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--table", action="store_true")

    p = verb("gamma", cmd_gamma, "a Gamma(nu, n) family")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon-k", default="5/4")
    p.add_argument("--epsilon", default=None)

    p = verb("construct", cmd_construct, "build stages and emit an annotated prefix")
    _construction_flags(p)
    p.add_argument("--selector", choices=["deterministic", "random"], default="deterministic")
    p.add_argument("--seed", type=int, default=0)

    p = verb("analyze", cmd_analyze, "frequency verdicts, dimension and cover checks")
    p.add_argument("--input", default=None, help="directory written by construct")
    p.add_argument("--word", default=None, help="raw digit file")
    p.add_argument("--trace", default=None, help="trace.json for a raw word file")
    p.add_argument("--annotations", default=None, help="annotation CSV for a raw word file")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--final-fraction", type=float, default=0.2)
    p.add_argument("--stride", type=int, default=1, help="row step of the CSV traces")
    p.add_argument("--covers", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = verb("dimension", cmd_dimension, "dimension ledger and s* trend")
    _construction_flags(p)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        _threads()
        args = build_parser().parse_args(argv)
        if getattr(args, "out", None) is None and args.verb in ("construct", "analyze"):
            raise DomainError(f"{args.verb} needs --out DIR")
        return args.func(args)
    except PNNError as exc:
        print(f"pnn: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"pnn: malformed input: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
