import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pd(n, rng, spread=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = 10.0 ** rng.uniform(-spread, spread, size=n)
    k = (q * lam) @ q.T
    return 0.5 * (k + k.T)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Records ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
