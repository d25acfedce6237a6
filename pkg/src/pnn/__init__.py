"""Beta-shift toolkit for building particularly non-normal sequences."""

__version__ = "0.1.0"

from .beta import (BetaSystem, ExpansionOfOne, LanguageAutomaton, NumberField, algebraic_system,
                   beta_expand, build_automaton, count_language, enumerate_language, expansion_of_one,
                   integer_system, is_admissible, load_system)
from .construction import (ConstructionConfig, ConstructionState, EpsilonPolicy, build_construction,
                           gamma_family, sample_pnn_prefix)
from .errors import (ConstructionError, DomainError, GluingError, ModelError, PNNError, PolicyError,
                     PrecisionError, ScheduleError, UnsupportedSystemError)
from .measures import entropy, information_function, measure_pair, parry_measure, parry_measure_eigen
from .specification import GluingTable, glue, glue_chain
from .words import empirical, measure_distance

__all__ = [name for name in dir() if not name.startswith("_")]
