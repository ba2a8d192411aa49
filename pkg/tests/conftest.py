import numpy as np
import pytest
from hypothesis import settings

from triwell.potential import PolynomialPotential, SquareWellSpec

settings.register_profile("triwell", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("triwell")

_ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture(scope="session")
def poly():
    return PolynomialPotential(1.5, 0.6)


@pytest.fixture(scope="session")
def square():
    return SquareWellSpec(0.55, 1.25, 1.75, 1.0, -1.82)


@pytest.fixture(scope="session")
def poly_sweep(poly):
    """Doublet sweep over 1/hbar in [5, 12] at step 0.05, shared across modules."""
    from triwell.spectral import sweep_hbar

    grid = np.round(np.linspace(5.0, 12.0, 141), 10)
    return sweep_hbar(poly, grid, n_levels=20, tol=1e-9, n=0, threads=4)


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    number, title = marker
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        if report.failed:
            entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.acceptance = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")
