import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpnet.dilation import (
    PRESETS, NetConfig, adaptive_schedule, build_plan, constant_plan, dilation_factor, fixed_schedule, preset,
    receptive_field,
)
from qpnet.errors import ConfigError, DomainError

WIDE = (1e-3, 1e9)


def test_factor_examples():
    assert dilation_factor(50, 22050, 8) == 56
    assert dilation_factor(500, 22050, 8) == 6
    assert dilation_factor(22050 / 8, 22050, 8, WIDE) == 1
    assert dilation_factor(1e5, 22050, 8, WIDE) == 1


def test_factor_exact_integer_ratio_not_bumped():
    # 16000 / (125 * 8) = 16 exactly
    assert dilation_factor(125.0, 16000, 8) == 16


def test_factor_clips_f0():
    assert dilation_factor(10.0, 22050, 8) == dilation_factor(40.0, 22050, 8)
    assert dilation_factor(5000.0, 22050, 8) == dilation_factor(800.0, 22050, 8)


def test_factor_rejects_nonpositive():
    with pytest.raises(DomainError):
        dilation_factor(0.0, 16000, 8)
    with pytest.raises(DomainError):
        dilation_factor(np.array([100.0, np.nan]), 16000, 8)


@given(st.floats(1.0, 4000.0), st.floats(1.0, 4000.0))
def test_factor_monotone_nonincreasing(f1, f2):
    lo, hi = sorted((f1, f2))
    assert dilation_factor(lo, 16000, 8, WIDE) >= dilation_factor(hi, 16000, 8, WIDE)


@given(st.floats(20.0, 4000.0), st.sampled_from([8000, 16000, 22050]), st.integers(1, 16))
def test_factor_matches_ceil_oracle(f0, fs, a):
    from fractions import Fraction

    exact = Fraction(fs) / (Fraction(f0) * a)
    expected = max(1, math.ceil(exact))
    got = dilation_factor(f0, fs, a, WIDE)
    # the guard rounds to 9 decimals, so only ratios within 1e-9 of an integer may differ
    if abs(exact - round(exact)) > Fraction(1, 10 ** 8):
        assert got == expected


def test_factor_array():
    out = dilation_factor(np.array([50.0, 500.0]), 22050, 8)
    assert out.dtype == np.int64 and out.tolist() == [56, 6]


def test_fixed_schedules():
    s = fixed_schedule(10, 3)
    assert len(s) == 30 and sum(s[:10]) == 1023 and sum(s) == 3069
    assert sum(fixed_schedule(4, 4)) == 60
    assert fixed_schedule(3, 2) == [1, 2, 4, 1, 2, 4]
    with pytest.raises(ConfigError):
        fixed_schedule(0, 2)


def test_adaptive_schedule():
    out = adaptive_schedule(np.array([1, 3]), 4, 1)
    assert out.tolist() == [[1, 2, 4, 8], [3, 6, 12, 24]]
    with pytest.raises(DomainError):
        adaptive_schedule(np.array([0]), 4, 1)


@given(st.integers(1, 200))
def test_adaptive_sum_is_15E(E):
    cfg = preset("qpnet")
    assert adaptive_schedule(E, cfg.adaptive_layers, cfg.adaptive_repeats).sum() == 15 * E


def test_receptive_fields():
    assert receptive_field(preset("wnf")) == 3070
    assert receptive_field(preset("wnc")) == 61
    q = preset("qpnet")
    assert receptive_field(q, 56) == 886
    assert receptive_field(q, 6) == 136
    assert receptive_field(q, 1) == 61
    with pytest.raises(DomainError):
        receptive_field(q, 0)


@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 4), st.integers(0, 2), st.integers(1, 50))
def test_receptive_field_is_one_plus_dilation_sum(fl, fr, al, ar, E):
    if al * ar == 0:
        al = ar = 0
    cfg = NetConfig(fixed_layers=fl, fixed_repeats=fr, adaptive_layers=al, adaptive_repeats=ar,
                    residual_channels=4, skip_channels=4)
    total = sum(cfg.fixed_dilations())
    if cfg.n_adaptive:
        total += int(adaptive_schedule(E, al, ar).sum())
    assert receptive_field(cfg, E) == 1 + total


def test_presets():
    assert set(PRESETS) == {"wnf", "wnc", "qpnet", "tiny-wnc", "tiny-qpnet"}
    tq, tw = preset("tiny-qpnet"), preset("tiny-wnc")
    assert tq.n_blocks == tw.n_blocks == 16
    assert (tq.residual_channels, tq.skip_channels) == (tw.residual_channels, tw.skip_channels)
    assert preset("qpnet").n_fixed == 12 and preset("qpnet").n_adaptive == 4
    with pytest.raises(ConfigError, match="tiny-qpnet"):
        preset("nope")


def test_config_round_trip():
    cfg = preset("tiny-qpnet", residual_channels=12)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        NetConfig.from_dict({"bogus": 1})


def test_capacities():
    cfg = preset("qpnet")
    caps = cfg.layer_capacities()
    assert caps[:12] == [1, 2, 4, 8] * 3
    assert cfg.max_factor == dilation_factor(40.0, 22050, 8) == 69
    assert caps[12:] == [69, 138, 276, 552]


def test_plans():
    cfg = preset("tiny-qpnet")
    cond = np.zeros((3, cfg.aux_dim))
    cond[:, 0] = np.log([100.0, 200.0, 1000.0])
    plan = build_plan(cfg, cond)
    assert plan.E.tolist() == [20, 10, 3]
    assert plan.adaptive_dilations[1].tolist() == [10, 20, 40, 80]
    assert len(plan.crop(1, 3)) == 2 and plan.crop(1, 3).E.tolist() == [10, 3]
    c = constant_plan(cfg, 5, 4)
    assert c.adaptive_dilations.shape == (5, 4) and np.all(c.adaptive_dilations[:, 0] == 4)
    w = build_plan(preset("tiny-wnc"), cond)
    assert w.adaptive_dilations.shape == (3, 0)
