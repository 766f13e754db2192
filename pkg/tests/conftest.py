import numpy as np
import pytest

from mcmimo.geometry import build_hex_network, make_drop
from mcmimo.scenario import standard_scenario


@pytest.fixture(scope="session")
def net():
    return build_hex_network()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scenario(net):
    """K=3 users per cell, beta=3 reuse: B=9 pilot directions."""
    drop = make_drop(net, 3, np.random.default_rng([5, 0]))
    return standard_scenario(net, 3, 3, np.random.default_rng([5, 1]), drop=drop)


def tiny_scenario(gains, index, B, p=None, tau=None, sigma2=1.0):
    """Hand-built scenario: ``gains`` (L, L, K), ``index`` (L, K)."""
    from mcmimo.pilots import PilotAllocation
    from mcmimo.power import PowerProfile
    from mcmimo.scenario import build_scenario

    gains = np.asarray(gains, dtype=float)
    index = np.asarray(index, dtype=int)
    L, _, K = gains.shape
    p = np.ones((L, K)) if p is None else np.asarray(p, dtype=float)
    tau = p.copy() if tau is None else np.asarray(tau, dtype=float)
    alloc = PilotAllocation(B, 1, 0.0, K, np.zeros(L, dtype=int), index)
    powers = PowerProfile(p=p, tau=tau, rho_dl=np.ones((L, K)), sigma2=sigma2, rho_ul=1.0, p_max=1.0)
    return build_scenario(gains, alloc, powers)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
