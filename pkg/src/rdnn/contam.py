"""Outlier injection: stripe and block patterns added to a random subset of
subjects."""

import math
from dataclasses import dataclass

import numpy as np

from rdnn import _rng

_EPS = 1e-9


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_right: bool = False

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        upper = x <= self.hi + _EPS if self.closed_right else x < self.hi - _EPS
        return (x >= self.lo - _EPS) & upper


# Case 1(i): union_{k=1..5} [(2k-2)/10, (2k-1)/10)
ALTERNATING = tuple(Interval((2 * k - 2) / 10, (2 * k - 1) / 10) for k in range(1, 6))
# Case 1(ii): [0, 1]
FULL = (Interval(0.0, 1.0, closed_right=True),)


@dataclass(frozen=True)
class ContaminationSpec:
    kind: str
    r: float
    a0: float
    a1: float = None
    intervals: tuple = FULL
    lo: float = 10.0
    hi: float = 20.0

    def __post_init__(self):
        if self.kind not in ("stripe", "block"):
            raise ValueError(f"unknown contamination kind {self.kind!r}")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"contamination proportion must be in [0, 1], got {self.r}")
        if not self.lo < self.hi:
            raise ValueError("magnitude bounds need lo < hi")
        if self.kind == "block":
            if self.a1 is None or not 0.0 <= self.a0 <= self.a1 <= 1.0:
                raise ValueError(f"block needs 0 <= a0 <= a1 <= 1, got [{self.a0}, {self.a1}]")

    def mask(self, grid):
        if self.kind == "stripe":
            return stripe_mask(grid, self.a0, self.intervals)
        return block_mask(grid, self.a0, self.a1)


def n_contaminated(n, r):
    return int(math.floor(r * n + _EPS))


def select_contaminated(n, r, seed):
    """floor(r n) distinct subject indices, uniformly without replacement."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"contamination proportion must be in [0, 1], got {r}")
    rng = _rng.stream(seed)
    k = n_contaminated(n, r)
    return np.sort(rng.choice(n, size=k, replace=False))


def stripe_mask(grid, a0, intervals):
    """Grid indices with first coordinate exactly ``a0`` and second in the
    union of ``intervals``."""
    if grid.d != 2:
        raise ValueError("stripe contamination is defined for 2D grids only")
    m1 = grid.shape[0]
    j1 = a0 * m1
    if abs(j1 - round(j1)) > 1e-9 or not 1 <= round(j1) <= m1:
        raise ValueError(f"stripe level {a0} is not on the grid lattice j/{m1}")
    idx = grid.lattice_index()
    on_line = idx[:, 0] == round(j1)
    x2 = grid.points[:, 1]
    inside = np.zeros(grid.N, dtype=bool)
    for iv in intervals:
        inside |= iv.contains(x2)
    return np.flatnonzero(on_line & inside)


def block_mask(grid, a0, a1):
    """Grid indices with every coordinate in the closed interval [a0, a1]."""
    if not 0.0 <= a0 <= a1 <= 1.0:
        raise ValueError(f"need 0 <= a0 <= a1 <= 1, got [{a0}, {a1}]")
    pts = grid.points
    inside = np.all((pts >= a0 - _EPS) & (pts <= a1 + _EPS), axis=1)
    return np.flatnonzero(inside)


def apply(sample, spec, seed):
    """Copy of ``sample`` with Uniform(lo, hi) outliers added on the mask for
    a random subset of subjects. The truth surface is left untouched."""
    mask = spec.mask(sample.grid)
    rng = _rng.stream(seed, _rng.CONTAM)
    subjects = np.sort(rng.choice(sample.n, size=n_contaminated(sample.n, spec.r), replace=False))
    out = sample.copy()
    if len(subjects) and len(mask):
        bumps = rng.uniform(spec.lo, spec.hi, size=(len(subjects), len(mask)))
        out.responses[np.ix_(subjects, mask)] += bumps
    out.meta["contamination"] = {
        "kind": spec.kind,
        "r": spec.r,
        "a0": spec.a0,
        "a1": spec.a1,
        "subjects": subjects.tolist(),
        "mask_size": int(len(mask)),
    }
    return out
