import numpy as np
import pytest

from streamfact.model import DictionaryState

_ACCEPTANCE = []


def record_criterion(number, name, passed, detail=""):
    _ACCEPTANCE.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE, key=lambda t: t[0]):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, r, scale=1.0):
    A = rng.standard_normal((r, r))
    return scale * (A @ A.T / r + 0.5 * np.eye(r))


def random_state(rng, m, r, lam=1.0):
    return DictionaryState(C=rng.standard_normal((m, r)), V=random_spd(rng, r), lam=lam)
