import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcslab.curves import Affine
from mcslab.market import DeterministicMarket, VasicekMarket
from mcslab.strategies import rate_strategy

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def one_stock():
    return DeterministicMarket.from_lambda(20.0, 0.02, 0.2, 0.25)


@pytest.fixture
def vasicek():
    return VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=20.0, lambda1=0.1, lambda2=0.3, sigma22=0.2)


@pytest.fixture
def hedge_market():
    return VasicekMarket(kappa=0.5, theta=0.03, sigma_r=0.01, r0=0.03, T=20.0, lambda1=0.1)


@pytest.fixture
def glide_path():
    return rate_strategy(0.2, Affine.between(0.0, 0.6, 20.0, 0.1))


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for mod in list(sys.modules.values()):
        lines += getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
