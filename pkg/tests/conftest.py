import sys

import numpy as np
import pytest

from qpnet.dilation import NetConfig
from qpnet.net import init_params


@pytest.fixture
def tiny_config():
    """Two fixed and two adaptive layers, 8 channels, low sample rate."""
    return NetConfig(fixed_layers=2, fixed_repeats=1, adaptive_layers=2, adaptive_repeats=1,
                     residual_channels=8, skip_channels=8, aux_dim=3, sample_rate=4000, a=8,
                     f0_floor=40.0, f0_ceil=800.0)


def randomize_biases(params, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    for v in params.arrays.values():
        if v.ndim == 1:
            v[:] = rng.uniform(-scale, scale, v.shape)
    return params


@pytest.fixture
def tiny_params64(tiny_config):
    return randomize_biases(init_params(tiny_config, seed=1, dtype=np.float64))


def sweep_conditioning(T, f0_start, f0_end, extra_dims, seed=0):
    rng = np.random.default_rng(seed)
    f0 = np.exp(np.linspace(np.log(f0_start), np.log(f0_end), T))
    return np.column_stack([np.log(f0), np.ones(T), 0.5 * rng.standard_normal((T, extra_dims))])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []), key=lambda s: int(s.split()[2].rstrip(":")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
