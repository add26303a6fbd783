"""Mini-batch Adam with dropout for the empirical risk

    (1 / nN) sum_i sum_j loss(Y_ij - f(X_j)).

Each (subject, grid point) pair is one training example; an epoch visits
every pair exactly once in a fresh random order.
"""

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from rdnn import _rng
from rdnn import loss as _loss
from rdnn import network


DROPOUT_SCHEMES = ("point", "example", "batch")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 256
    epochs: int = 200
    dropout_keep: float = None  # None: take it from the architecture, or 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    # "point": one mask per distinct grid point in a mini-batch,
    # "example": one per example, "batch": one shared by the whole batch
    dropout_scheme: str = "point"
    # When set, overrides ``epochs`` with the fewest whole epochs that reach
    # this many optimizer steps, so compute stays flat as nN grows.
    step_budget: int = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.dropout_keep is not None and not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.dropout_scheme not in DROPOUT_SCHEMES:
            raise ValueError(f"dropout_scheme must be one of {DROPOUT_SCHEMES}")
        if self.step_budget is not None and self.step_budget < 1:
            raise ValueError("step_budget must be at least 1")

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "dropout_keep": self.dropout_keep,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "dropout_scheme": self.dropout_scheme,
            "step_budget": self.step_budget,
        }

    def resolved_epochs(self, total):
        """Epoch count for a data set of ``total`` examples."""
        if self.step_budget is None:
            return self.epochs
        steps = math.ceil(total / min(self.batch_size, total))
        return max(1, math.ceil(self.step_budget / steps))


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def fresh(cls, params):
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()], 0)

    def copy(self):
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t)


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, b2, c1, c2, lr, eps):
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def _adam_inplace(arrays, grads, state, config):
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        _adam_kernel(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), b1, b2, c1, c2,
                     config.learning_rate, config.epsilon)


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update; inputs are left untouched."""
    if params.dims != grads.dims:
        raise ValueError(f"gradient shapes {grads.dims} do not match parameters {params.dims}")
    if len(state.m) != len(params.arrays()) or any(
        a.shape != m.shape for a, m in zip(params.arrays(), state.m)
    ):
        raise ValueError("Adam state does not match parameter shapes")
    new_params = params.copy()
    new_state = state.copy()
    _adam_inplace(new_params.arrays(), grads.arrays(), new_state, config)
    return new_params, new_state


def full_objective(params, sample, loss):
    """Objective over every (subject, grid point) pair, no dropout."""
    f = network.forward(params, sample.grid.points)
    return float(np.mean(_loss.value(loss, sample.responses - f[None, :])))


def _batch_gradient(out, params, points, point_idx, y, loss, keep, scheme, rng):
    if keep >= 1.0:
        network.accumulate_grouped_gradient(out, params, points, point_idx, y, loss)
    elif scheme == "point":
        rows = len(np.unique(point_idx))
        mask = network.draw_mask(params.dims, keep, rng, rows=rows)
        network.accumulate_grouped_gradient(out, params, points, point_idx, y, loss, mask)
    elif scheme == "batch":
        mask = network.draw_mask(params.dims, keep, rng)
        network.accumulate_grouped_gradient(out, params, points, point_idx, y, loss, mask)
    else:
        mask = network.draw_mask(params.dims, keep, rng, rows=len(y))
        grads = network.backward(params, points[point_idx], y, loss, mask)
        for a, g in zip(out.arrays(), grads.arrays()):
            a += g


def iter_batches(total, batch_size, rng):
    """One epoch: a fresh permutation of ``range(total)`` cut into batches."""
    order = rng.permutation(total)
    for start in range(0, total, batch_size):
        yield order[start : start + batch_size]


def train(params, sample, loss, config, progress=None):
    """Fit ``params`` to ``sample``; returns (fitted params, per-epoch objective).

    The batch size is clamped to ``nN``. Dropout masks are redrawn for every
    mini-batch according to ``config.dropout_scheme``.
    """
    if sample.n == 0:
        raise ValueError("empty sample")
    if params.dims[0] != sample.grid.d:
        raise ValueError(f"network input size {params.dims[0]} does not match grid dimension {sample.grid.d}")
    dims = params.dims
    flat = params.flat()
    params = network.NetworkParams.from_flat(dims, flat)
    gflat = np.zeros_like(flat)
    grads = network.NetworkParams.from_flat(dims, gflat)
    state = AdamState([np.zeros_like(flat)], [np.zeros_like(flat)], 0)

    points = sample.grid.points
    Y = sample.responses.ravel()
    N = sample.grid.N
    total = Y.size
    B = min(config.batch_size, total)
    keep = 1.0 if config.dropout_keep is None else config.dropout_keep
    rng = _rng.stream(config.seed, _rng.TRAIN)
    epochs = config.resolved_epochs(total)
    trace = np.empty(epochs)
    for epoch in range(epochs):
        for batch in iter_batches(total, B, rng):
            gflat.fill(0.0)
            _batch_gradient(grads, params, points, batch % N, Y[batch], loss, keep, config.dropout_scheme, rng)
            _adam_inplace([flat], [gflat], state, config)
        trace[epoch] = full_objective(params, sample, loss)
        if progress is not None:
            progress(epoch, trace[epoch])
    return params.copy(), trace
