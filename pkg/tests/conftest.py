import numpy as np
import pytest

from tfscat.audio import AudioBuffer
from tfscat.filterbank import Filter, FilterBank
from tfscat.scattering import ScatteringConfig, get_network

SMALL_RATE = 8192.0


@pytest.fixture(scope="session")
def small_cfg():
    """Desk-scale configuration: Q=4, 3 octaves, T=512 samples at 8192 Hz."""
    return ScatteringConfig(sample_rate=SMALL_RATE, Q=4, octaves=3, T=512 / SMALL_RATE)


@pytest.fixture(scope="session")
def small_net(small_cfg):
    return get_network(small_cfg, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise(n, sample_rate=SMALL_RATE, seed=0):
    return AudioBuffer(np.random.default_rng(seed).standard_normal(n), sample_rate)


def mirrored(f: Filter) -> Filter:
    """``h(-w)``: the transfer of the time-reversed filter."""
    n = f.values.size
    start = (-(f.start + n - 1)) % f.length
    return Filter(f.values[::-1].copy(), start, f.length, f.sample_rate,
                  -f.center_frequency, f.bandwidth, f.corrective_kappa, f.quality_factor)


def single(bank: FilterBank, f: Filter) -> FilterBank:
    return FilterBank([f], bank.lowpass, bank.axis, [f.center_frequency],
                      bank.normalization_gain, bank.length, bank.sample_rate)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
