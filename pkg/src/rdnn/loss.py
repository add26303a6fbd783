"""Convex M-estimation losses and their score functions.

All three losses are nonnegative with ``value(0) == 0``. ``l2`` is the halved
square so that its score is the identity.
"""

from dataclasses import dataclass

import numpy as np

KINDS = ("l2", "huber", "quantile")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "huber"
    k: float = 1.0
    tau: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "huber" and not self.k > 0:
            raise ValueError(f"huber threshold must be positive, got {self.k}")
        if self.kind == "quantile" and not 0 < self.tau < 1:
            raise ValueError(f"quantile level must lie in (0, 1), got {self.tau}")

    @classmethod
    def l2(cls):
        return cls("l2")

    @classmethod
    def huber(cls, k=1.0):
        return cls("huber", k=k)

    @classmethod
    def quantile(cls, tau):
        return cls("quantile", tau=tau)

    def value(self, x):
        return value(self, x)

    def score(self, x):
        return score(self, x)

    def label(self):
        if self.kind == "huber":
            return f"huber(k={self.k:g})"
        if self.kind == "quantile":
            return f"quantile(tau={self.tau:g})"
        return "l2"

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "huber":
            d["k"] = self.k
        elif self.kind == "quantile":
            d["tau"] = self.tau
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], k=d.get("k", 1.0), tau=d.get("tau", 0.5))


def value(spec, x):
    """Loss evaluated elementwise at residual(s) ``x``."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "l2":
        out = 0.5 * x * x
    elif spec.kind == "huber":
        k = spec.k
        ax = np.abs(x)
        out = np.where(ax <= k, 0.5 * x * x, k * (ax - 0.5 * k))
    else:
        out = x * (spec.tau - (x < 0))
    return out[()] if out.ndim == 0 else out


def score(spec, x):
    """Derivative of the loss; at the quantile kink ``score(0) = tau``."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "l2":
        out = x.copy()
    elif spec.kind == "huber":
        out = np.clip(x, -spec.k, spec.k)
    else:
        out = spec.tau - (x < 0).astype(float)
    return out[()] if out.ndim == 0 else out
