import pytest

from pnn import build_construction, integer_system, load_system, sample_pnn_prefix

SILVER = {"kind": "algebraic", "minpoly": [-1, -2, 1], "interval": ["2.41", "2.42"]}
GOLDEN = {"kind": "algebraic", "minpoly": [-1, -1, 1], "interval": ["1.61", "1.62"]}
PHI_SQUARED = {"kind": "algebraic", "minpoly": [1, -3, 1], "interval": ["2.6", "2.7"]}
TRIBONACCI = {"kind": "algebraic", "minpoly": [-1, -1, -1, 1], "interval": ["1.8", "1.9"]}


@pytest.fixture(scope="session")
def n3():
    return integer_system(3)


@pytest.fixture(scope="session")
def silver():
    return load_system(SILVER)


@pytest.fixture(scope="session")
def golden():
    return load_system(GOLDEN)


@pytest.fixture(scope="session")
def tribonacci():
    return load_system(TRIBONACCI)


@pytest.fixture(scope="session")
def n3_p1():
    return build_construction(integer_system(3), p=1, stages=6)


@pytest.fixture(scope="session")
def n3_p1_sample(n3_p1):
    return sample_pnn_prefix(n3_p1)


@pytest.fixture(scope="session")
def silver_p1():
    return build_construction(load_system(SILVER), p=1, stages=4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
