import math

import numpy as np
import pytest

from rdnn import network, sim, trainer
from rdnn.loss import LossSpec
from rdnn.sim import FunctionalSample
from rdnn.trainer import AdamState, TrainConfig


def reference_adam(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam on a plain float vector, one step per gradient."""
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return theta


def constant_sample(n, m, value, d=2):
    grid = sim.make_grid(d, m)
    return FunctionalSample(grid, np.full((n, grid.N), float(value)), np.full(grid.N, float(value)))


# config ---------------------------------------------------------------------


def test_defaults():
    c = TrainConfig()
    assert (c.learning_rate, c.batch_size, c.epochs) == (0.001, 256, 200)
    assert (c.beta1, c.beta2, c.epsilon) == (0.9, 0.999, 1e-8)


@pytest.mark.parametrize(
    "kw", [dict(learning_rate=0), dict(batch_size=0), dict(epochs=0), dict(dropout_keep=0.0),
           dict(dropout_keep=1.5), dict(dropout_scheme="layer"), dict(step_budget=0)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_step_budget_resolves_epochs():
    c = TrainConfig(step_budget=1000)
    assert c.resolved_epochs(5000) == 50  # 20 steps per epoch at B=256
    assert c.resolved_epochs(20000) == 13  # 79 steps per epoch
    assert c.resolved_epochs(100) == 1000  # B clamps to 100: one step per epoch
    assert TrainConfig(epochs=7).resolved_epochs(10**6) == 7


# Adam -----------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = network.init((2, 3, 1), seed=0)
    q, state = trainer.adam_step(p, p.zeros_like(), AdamState.fresh(p), TrainConfig())
    assert q.equals(p)
    assert state.t == 1


def test_adam_first_step_closed_form():
    p = network.constant((1, 1, 1), 0.0)
    g = p.zeros_like()
    for a in g.arrays():
        a[...] = 1.0
    q, _ = trainer.adam_step(p, g, AdamState.fresh(p), TrainConfig())
    # bias correction gives mhat = 1, vhat = 1
    for a in q.arrays():
        np.testing.assert_allclose(a, -0.001 / (1 + 1e-8), rtol=1e-12)


def test_adam_two_steps_monotone_and_bounded():
    p = network.constant((1, 1, 1), 0.0)
    g = p.zeros_like()
    for a in g.arrays():
        a[...] = 1.0
    cfg = TrainConfig()
    p1, s1 = trainer.adam_step(p, g, AdamState.fresh(p), cfg)
    p2, s2 = trainer.adam_step(p1, g, s1, cfg)
    out0, out1, out2 = p.shifts[-1][0], p1.shifts[-1][0], p2.shifts[-1][0]
    assert out0 > out1 > out2
    assert abs(out2) < 0.002
    assert out2 == pytest.approx(2 * -0.001 / (1 + 1e-8), rel=1e-9)
    assert s2.t == 2 and all(np.all(v >= 0) for v in s2.v)


def test_adam_matches_reference_on_random_gradients(rng):
    dims = (2, 4, 3, 1)
    p = network.init(dims, seed=1)
    state = AdamState.fresh(p)
    cfg = TrainConfig(learning_rate=0.01)
    grads = [rng.normal(size=p.n_parameters()) for _ in range(6)]
    cur = p
    for g in grads:
        cur, state = trainer.adam_step(cur, network.NetworkParams.from_flat(dims, g.copy()), state, cfg)
    expect = reference_adam(p.flat(), grads, lr=0.01)
    np.testing.assert_allclose(cur.flat(), expect, rtol=1e-12, atol=1e-15)


def test_adam_step_does_not_mutate_inputs(rng):
    p = network.init((2, 3, 1), seed=2)
    g = network.NetworkParams.from_flat(p.dims, rng.normal(size=p.n_parameters()))
    state = AdamState.fresh(p)
    before, gbefore = p.copy(), g.copy()
    trainer.adam_step(p, g, state, TrainConfig())
    assert p.equals(before) and g.equals(gbefore) and state.t == 0


def test_adam_shape_mismatch():
    p = network.init((2, 3, 1), seed=0)
    with pytest.raises(ValueError):
        trainer.adam_step(p, network.init((2, 4, 1), seed=0), AdamState.fresh(p), TrainConfig())
    with pytest.raises(ValueError):
        trainer.adam_step(p, p.zeros_like(), AdamState.fresh(network.init((2, 4, 1), 0)), TrainConfig())


# batches and training -------------------------------------------------------


def test_each_pair_once_per_epoch():
    rng = np.random.default_rng(0)
    for _ in range(3):
        batches = list(trainer.iter_batches(1037, 256, rng))
        assert [len(b) for b in batches] == [256, 256, 256, 256, 13]
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(1037))


def test_constant_fit_recovers_level():
    sample = constant_sample(n=50, m=10, value=3.0)
    params = network.init((2, 16, 16, 1), seed=3)
    fitted, trace = trainer.train(params, sample, LossSpec.l2(), TrainConfig(epochs=200, seed=4))
    surface = network.forward(fitted, sample.grid.points)
    assert np.max(np.abs(surface - 3.0)) < 0.05
    assert len(trace) == 200 and np.all(np.isfinite(trace))
    assert trace[-1] <= trace[0]


@pytest.mark.parametrize("scheme", trainer.DROPOUT_SCHEMES)
def test_training_deterministic(scheme):
    grid = sim.make_grid(2, 6)
    sample = sim.simulate(grid, "2d", sim.NoiseSpec(), 8, seed=5)
    params = network.init((2, 12, 12, 1), seed=6, keep=0.5)
    cfg = TrainConfig(epochs=3, batch_size=64, dropout_keep=0.5, dropout_scheme=scheme, seed=9)
    a, ta = trainer.train(params, sample, LossSpec.huber(1.0), cfg)
    b, tb = trainer.train(params, sample, LossSpec.huber(1.0), cfg)
    assert a.equals(b)
    np.testing.assert_array_equal(ta, tb)
    c, _ = trainer.train(params, sample, LossSpec.huber(1.0), cfg.with_(seed=10))
    assert not a.equals(c)


def test_train_does_not_mutate_initial_params():
    sample = constant_sample(n=3, m=4, value=1.0)
    params = network.init((2, 5, 1), seed=0)
    before = params.copy()
    trainer.train(params, sample, LossSpec.l2(), TrainConfig(epochs=2))
    assert params.equals(before)


def test_trace_is_full_objective():
    sample = sim.simulate(sim.make_grid(2, 5), "2d", sim.NoiseSpec(), 4, seed=1)
    params = network.init((2, 6, 1), seed=1)
    seen = []
    fitted, trace = trainer.train(params, sample, LossSpec.l2(), TrainConfig(epochs=4), progress=lambda e, v: seen.append(v))
    assert seen == list(trace)
    assert trace[-1] == trainer.full_objective(fitted, sample, LossSpec.l2())


def test_batch_clamped_to_data_size():
    # nN = 12 < 256: one full-batch step per epoch. With zero hidden weights
    # only the output shift c moves, with gradient -(2 - c), so five epochs
    # replay as five scalar Adam steps on that gradient.
    sample = constant_sample(n=3, m=2, value=2.0)
    params = network.constant((2, 3, 1), 0.0)
    fitted, _ = trainer.train(params, sample, LossSpec.l2(), TrainConfig(epochs=5))
    c, m, v = 0.0, 0.0, 0.0
    for t in range(1, 6):
        g = -(2.0 - c)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        c -= 0.001 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert fitted.shifts[-1][0] == pytest.approx(c, rel=1e-12)
    assert all(np.all(W == 0) for W in fitted.weights)


def test_train_rejects_dimension_mismatch():
    sample = constant_sample(n=2, m=3, value=0.0)
    with pytest.raises(ValueError):
        trainer.train(network.init((3, 4, 1), 0), sample, LossSpec.l2(), TrainConfig(epochs=1))


def test_quantile_training_targets_normal_quantile():
    rng = np.random.default_rng(7)
    grid = sim.make_grid(2, 10)
    sample = FunctionalSample(grid, rng.standard_normal((200, grid.N)), np.zeros(grid.N))
    params = network.init((2, 16, 16, 1), seed=8)
    fitted, _ = trainer.train(params, sample, LossSpec.quantile(0.9), TrainConfig(epochs=20, seed=9))
    level = network.forward(fitted, grid.points).mean()
    assert abs(level - 1.2815516) < 0.15
