"""End-to-end robust estimator: data-driven architecture, training and
prediction at any grid resolution."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from rdnn import _rng, network, trainer
from rdnn.loss import LossSpec
from rdnn.sim import GridSpec


def _ceil(x):
    # guards against x = 80.00000000000001 when the exact value is an integer
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class ArchitectureConfig:
    L: int
    width: int
    s: int
    dropout_keep: float
    theta: float = 0.5
    nu: float = 0.5

    def __post_init__(self):
        if self.L < 1 or self.width < 1 or self.s < 1:
            raise ValueError(f"invalid architecture L={self.L}, width={self.width}, s={self.s}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")

    def dims(self, d):
        return (d,) + (self.width,) * self.L + (1,)

    def to_dict(self):
        return {
            "L": self.L,
            "width": self.width,
            "s": self.s,
            "dropout_keep": self.dropout_keep,
            "theta": self.theta,
            "nu": self.nu,
        }


def select_architecture(n, N, theta=0.5, nu=0.5):
    """Depth ceil(0.5 log2(n N^nu)), width ceil(10 sqrt(n N^nu)),
    sparsity ceil(5 sqrt(n N^nu)) * depth and keep rate half-width / width.

    ``theta`` is recorded but does not enter the closed-form choices.
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be positive")
    scale = math.sqrt(n) * N ** (nu / 2)
    L = max(1, _ceil(0.5 * math.log2(n * N**nu)))
    width = _ceil(10 * scale)
    half = _ceil(5 * scale)
    return ArchitectureConfig(L=L, width=width, s=half * L, dropout_keep=half / width, theta=theta, nu=nu)


@dataclass
class FitResult:
    params: network.NetworkParams
    arch: ArchitectureConfig
    loss: LossSpec
    trace: np.ndarray
    fitted_surface: np.ndarray
    config: trainer.TrainConfig
    seed: int
    grid_shape: tuple = None
    extra: dict = field(default_factory=dict)

    def manifest(self):
        return {
            "format": "RDNN-fit",
            "version": 1,
            "dims": list(self.params.dims),
            "arch": self.arch.to_dict(),
            "loss": self.loss.to_dict(),
            "train": self.config.to_dict(),
            "seed": self.seed,
            "grid_shape": None if self.grid_shape is None else list(self.grid_shape),
            "trace": [float(v) for v in self.trace],
            "fitted_surface": [float(v) for v in self.fitted_surface],
        }

    @classmethod
    def from_manifest(cls, doc, params):
        return cls(
            params=params,
            arch=ArchitectureConfig(**doc["arch"]),
            loss=LossSpec.from_dict(doc["loss"]),
            trace=np.array(doc["trace"], dtype=float),
            fitted_surface=np.array(doc["fitted_surface"], dtype=float),
            config=trainer.TrainConfig(**doc["train"]),
            seed=doc["seed"],
            grid_shape=None if doc.get("grid_shape") is None else tuple(doc["grid_shape"]),
        )


def fit(sample, loss, train=None, arch=None, seed=0, progress=None):
    """Select an architecture (unless given), initialise and train.

    ``train.dropout_keep = None`` means "use the architecture's keep rate".
    """
    arch = arch or select_architecture(sample.n, sample.grid.N)
    train = train or trainer.TrainConfig()
    if train.dropout_keep is None:
        train = replace(train, dropout_keep=arch.dropout_keep)
    train = replace(train, seed=_rng.derive_seed(seed, _rng.FIT, 1))
    params = network.init(arch.dims(sample.grid.d), _rng.derive_seed(seed, _rng.FIT, 0), keep=train.dropout_keep)
    params, trace = trainer.train(params, sample, loss, train, progress=progress)
    surface = network.forward(params, sample.grid.points)
    return FitResult(params, arch, loss, trace, surface, train, int(seed), sample.grid.shape)


def predict(result, target):
    """Network evaluated (no dropout) at every point of ``target``."""
    if target.d != result.params.dims[0]:
        raise ValueError(f"target grid has d={target.d}, fit expects d={result.params.dims[0]}")
    return network.forward(result.params, target.points)


def fit_quantiles(sample, taus, train=None, arch=None, seed=0):
    """One pinball-loss fit per level in ``taus``, sharing one architecture."""
    taus = list(taus)
    for tau in taus:
        if not 0 < tau < 1:
            raise ValueError(f"quantile level must lie in (0, 1), got {tau}")
    if not taus:
        return []
    arch = arch or select_architecture(sample.n, sample.grid.N)
    return [
        fit(sample, LossSpec.quantile(tau), train=train, arch=arch, seed=_rng.derive_seed(seed, _rng.FIT, 100 + i))
        for i, tau in enumerate(taus)
    ]
