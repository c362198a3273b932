import pytest

from toralnodal.curve import CurveSpec, build_unit_speed
from toralnodal.lattice import enumerate_level


@pytest.fixture(scope="session")
def circle():
    return build_unit_speed(CurveSpec("circle", radius=0.2))


@pytest.fixture(scope="session")
def ellipse():
    return build_unit_speed(CurveSpec("ellipse", a=0.25, b=0.15))


@pytest.fixture(scope="session")
def flower3():
    return build_unit_speed(CurveSpec("flower", r0=0.2, eps=0.05, k=3))


@pytest.fixture(scope="session")
def levels():
    return {n: enumerate_level(n) for n in (1, 2, 5, 25, 65, 325, 1105)}


_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line, then return the boolean for asserting."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
