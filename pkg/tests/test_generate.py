import numpy as np
import pytest

from conftest import randomize_biases, sweep_conditioning
from qpnet.dilation import build_plan, constant_plan, preset
from qpnet.generate import CacheOverflow, GenState, generate, generate_codes, pick_class, step
from qpnet.net import ModelParams, forward, init_params, softmax
from qpnet.signal import class_center


def test_incremental_matches_teacher_forced(tiny_params64):
    p = tiny_params64
    cond = sweep_conditioning(300, 60, 400, extra_dims=1, seed=2)
    plan = build_plan(p.config, cond)
    codes, logits, inputs = generate_codes(p, cond, plan, "sample", seed=4, keep_logits=True)
    assert inputs[0] == 0.0
    assert np.allclose(inputs[1:], class_center(codes[:-1]))
    assert np.abs(forward(p, inputs, cond, plan) - logits).max() < 1e-10


def test_step_api(tiny_params64):
    p = tiny_params64
    cond = sweep_conditioning(20, 100, 200, extra_dims=1)
    plan = build_plan(p.config, cond)
    ref = forward(p, np.zeros(20), cond, plan)
    state = GenState.initial(p)
    for t in range(20):
        probs, state = step(state, p, 0.0, cond[t], plan.adaptive_dilations[t])
        assert np.allclose(probs, softmax(ref[t]), atol=1e-12)
    assert state.t == 20


def test_unit_factor_matches_fixed_network():
    q, w = preset("tiny-qpnet", residual_channels=8, skip_channels=6), preset("tiny-wnc", residual_channels=8,
                                                                             skip_channels=6)
    pq = randomize_biases(init_params(q, seed=3, dtype=np.float64))
    pw = ModelParams(w, {k: v.copy() for k, v in pq.arrays.items()})
    cond = sweep_conditioning(200, 120, 240, extra_dims=16)
    x = np.random.default_rng(0).uniform(-1, 1, 200)
    lq = forward(pq, x, cond, constant_plan(q, 200, 1))
    lw = forward(pw, x, cond, build_plan(w, cond))
    assert np.allclose(lq, lw, atol=1e-12)
    gq, _, _ = generate_codes(pq, cond, constant_plan(q, 200, 1), "argmax")
    gw, _, _ = generate_codes(pw, cond, build_plan(w, cond), "argmax")
    assert np.array_equal(gq, gw)


def test_cache_overflow(tiny_params64):
    cfg = tiny_params64.config
    T = 4
    too_big = cfg.max_factor + 1
    plan = constant_plan(cfg, T, too_big)
    with pytest.raises(CacheOverflow):
        generate_codes(tiny_params64, np.zeros((T, cfg.aux_dim)) + np.log(100.0), plan)


def test_capacity_covers_lowest_f0(tiny_params64):
    cfg = tiny_params64.config
    cond = sweep_conditioning(50, 1.0, 1.0, extra_dims=1)  # clipped up to f0_floor
    plan = build_plan(cfg, cond)
    assert plan.E.max() == cfg.max_factor
    generate_codes(tiny_params64, cond, plan)


def test_pick_class():
    rng = np.random.default_rng(0)
    probs = np.zeros(256)
    probs[[7, 9]] = 0.5
    assert pick_class(probs, "argmax", rng) == 7
    draws = {pick_class(probs, "sample", rng) for _ in range(50)}
    assert draws == {7, 9}
    with pytest.raises(ValueError):
        pick_class(probs, "beam", rng)


def test_sampling_is_seeded(tiny_params64):
    cond = sweep_conditioning(100, 100, 200, extra_dims=1)
    plan = build_plan(tiny_params64.config, cond)
    a = generate(tiny_params64, cond, plan, "sample", seed=5)
    b = generate(tiny_params64, cond, plan, "sample", seed=5)
    c = generate(tiny_params64, cond, plan, "sample", seed=6)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.sample_rate == tiny_params64.config.sample_rate
    assert np.all(np.abs(a.samples) <= 1)


def test_plan_length_mismatch(tiny_params64):
    from qpnet.errors import ShapeError

    cond = sweep_conditioning(10, 100, 200, extra_dims=1)
    with pytest.raises(ShapeError):
        generate_codes(tiny_params64, cond, build_plan(tiny_params64.config, cond[:9]))
