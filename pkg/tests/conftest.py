import numpy as np
import pytest
from hypothesis import settings

from otadp.channel import RngStream, sample_rayleigh
from otadp.market import MarketConfig, default_bid_bound, gne_oracle, table_one_prosumers

settings.register_profile("otadp", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("otadp")


@pytest.fixture
def prosumers():
    return table_one_prosumers()


@pytest.fixture
def market(prosumers):
    return MarketConfig(a=100.0, I=3, L=default_bid_bound(prosumers, 100.0))


@pytest.fixture
def equilibrium(prosumers, market):
    return gne_oracle(prosumers, market)


def random_channel(Nr, I, seed, index=0):
    return sample_rayleigh(Nr, I, RngStream(seed, index))


def random_unit(rng, Nr):
    u = rng.standard_normal(Nr) + 1j * rng.standard_normal(Nr)
    return u / np.linalg.norm(u)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
