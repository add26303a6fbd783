"""Observation grids and synthetic multi-dimensional functional data.

Responses follow ``Y_ij = f0(X_j) + eta_i(X_j) + e_ij`` where ``eta_i`` is a
zero-mean Gaussian process with kernel ``sum_k cos(2 pi (x_k - x'_k))`` and
``e_ij`` is Gaussian or a Normal/heavy-tail mixture.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from rdnn import _rng

ERROR_KINDS = ("gaussian", "mixture_cauchy", "mixture_slash")
HEAVY_SCALE = 0.5


@dataclass(frozen=True)
class GridSpec:
    """Equally spaced lattice on (0, 1]^d; axis ``k`` holds ``j / shape[k]``,
    ``j = 1..shape[k]``. Points are ordered lexicographically, last index
    fastest."""

    shape: tuple
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) == 0:
            raise ValueError("grid dimension must be positive")
        if any(s < 1 for s in shape):
            raise ValueError(f"points per axis must be positive, got {shape}")
        object.__setattr__(self, "shape", shape)
        axes = [np.arange(1, s + 1) / s for s in shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self):
        return len(self.shape)

    @property
    def N(self):
        return int(np.prod(self.shape))

    @property
    def m(self):
        if len(set(self.shape)) != 1:
            raise ValueError(f"grid {self.shape} has unequal axis sizes")
        return self.shape[0]

    def axis(self, k):
        return np.arange(1, self.shape[k] + 1) / self.shape[k]

    def lattice_index(self):
        """Integer coordinates ``j`` (1-based) of every point."""
        mesh = np.meshgrid(*[np.arange(1, s + 1) for s in self.shape], indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


def make_grid(d, m):
    if d < 1:
        raise ValueError(f"grid dimension must be positive, got {d}")
    if m < 1:
        raise ValueError(f"points per axis must be positive, got {m}")
    return GridSpec((m,) * d)


@dataclass(frozen=True)
class NoiseSpec:
    """Error process: optional GP deviation plus measurement error.

    ``error_scale`` scales the Gaussian component; the Cauchy/Slash component
    of a mixture has fixed scale 0.5.
    """

    gp_enabled: bool = True
    error_kind: str = "gaussian"
    weight: float = 0.0
    error_scale: float = 1.0

    def __post_init__(self):
        if self.error_kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.error_kind!r}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"mixture weight must be in [0, 1], got {self.weight}")
        if self.error_scale < 0:
            raise ValueError("error_scale must be nonnegative")

    def to_dict(self):
        return {
            "gp_enabled": self.gp_enabled,
            "error_kind": self.error_kind,
            "weight": self.weight,
            "error_scale": self.error_scale,
        }


@dataclass
class FunctionalSample:
    grid: GridSpec
    responses: np.ndarray
    truth: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.responses = np.asarray(self.responses, dtype=float)
        if self.responses.ndim != 2 or self.responses.shape[1] != self.grid.N:
            raise ValueError(
                f"responses must be n x {self.grid.N}, got {self.responses.shape}"
            )
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != (self.grid.N,):
                raise ValueError(f"truth must have length {self.grid.N}")

    @property
    def n(self):
        return self.responses.shape[0]

    def copy(self):
        return FunctionalSample(
            self.grid,
            self.responses.copy(),
            None if self.truth is None else self.truth.copy(),
            dict(self.meta),
        )


def mean_2d(x):
    """-8 / (1 + exp(cot(x1^2) cos(2 pi x2)))."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    s = np.sin(x1 * x1)
    if np.any(s == 0):
        raise ValueError("cot(x1^2) undefined: sin(x1^2) = 0")
    z = np.cos(x1 * x1) / s * np.cos(2 * np.pi * x2)
    return -8.0 * expit(-z)


def mean_3d(x):
    """exp(x1/3 + x2/3 + sqrt(x3 + 0.1))."""
    x = np.asarray(x, dtype=float)
    return np.exp(x[..., 0] / 3 + x[..., 1] / 3 + np.sqrt(x[..., 2] + 0.1))


MEAN_FUNCTIONS = {"2d": (2, mean_2d), "3d": (3, mean_3d)}


def gp_coefficients(d, rng):
    """Standard normal coefficients (2, d) of the rank-2d trigonometric GP."""
    return rng.standard_normal((2, d))


def eval_gp(coef, points):
    """eta(x) = sum_k zeta_1k cos(2 pi x_k) + zeta_2k sin(2 pi x_k)."""
    t = 2 * np.pi * np.asarray(points, dtype=float)
    return np.cos(t) @ coef[0] + np.sin(t) @ coef[1]


def gp_covariance(x, y):
    """Kernel sum_k cos(2 pi (x_k - y_k))."""
    return np.sum(np.cos(2 * np.pi * (np.asarray(x, float) - np.asarray(y, float))), axis=-1)


def sample_gp(grid, seed):
    """One draw of the GP on ``grid`` (``seed`` may be an int or a Generator)."""
    rng = _rng.stream(seed) if not isinstance(seed, np.random.Generator) else seed
    return eval_gp(gp_coefficients(grid.d, rng), grid.points)


def draw_errors(noise, size, rng):
    if noise.error_kind == "gaussian":
        return noise.error_scale * rng.standard_normal(size)
    normal = noise.error_scale * rng.standard_normal(size)
    if noise.error_kind == "mixture_cauchy":
        heavy = HEAVY_SCALE * rng.standard_cauchy(size)
    else:
        heavy = HEAVY_SCALE * rng.standard_normal(size) / rng.uniform(size=size)
    pick = rng.uniform(size=size) < noise.weight
    return np.where(pick, heavy, normal)


def resolve_mean(grid, mean_id, truth=None):
    if mean_id == "custom":
        if truth is None:
            raise ValueError("custom mean requires a tabulated truth surface")
        truth = np.asarray(truth, dtype=float)
        if truth.shape != (grid.N,):
            raise ValueError(f"custom truth must have length {grid.N}")
        return truth.copy()
    if mean_id not in MEAN_FUNCTIONS:
        raise ValueError(f"unknown mean function {mean_id!r}")
    dim, f = MEAN_FUNCTIONS[mean_id]
    if dim != grid.d:
        raise ValueError(f"mean function {mean_id!r} needs d={dim}, grid has d={grid.d}")
    return f(grid.points)


def simulate_subject(grid, f0, noise, seed, i):
    """Row ``i`` of a sample; depends only on (seed, i)."""
    rng = _rng.stream(seed, _rng.DATA, i)
    row = f0.copy()
    if noise.gp_enabled:
        row += eval_gp(gp_coefficients(grid.d, rng), grid.points)
    row += draw_errors(noise, grid.N, rng)
    return row


def simulate(grid, mean_id, noise, n, seed, truth=None):
    f0 = resolve_mean(grid, mean_id, truth)
    rows = np.empty((n, grid.N))
    for i in range(n):
        rows[i] = simulate_subject(grid, f0, noise, seed, i)
    meta = {"mean_id": mean_id, "noise": noise.to_dict(), "seed": int(seed), "n": int(n)}
    return FunctionalSample(grid, rows, f0, meta)
