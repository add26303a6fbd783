"""Empirical-norm risk and the Monte Carlo benchmark harness.

One replicate simulates a sample, optionally contaminates it, fits every
requested estimator on the *same* data and scores each fit against the clean
truth with ``mean_j (fhat(X_j) - f0(X_j))^2``.
"""

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from rdnn import _rng, contam, estimator, sim
from rdnn.contam import ALTERNATING, FULL, ContaminationSpec
from rdnn.loss import LossSpec
from rdnn.trainer import TrainConfig

log = logging.getLogger(__name__)

CSV_FIELDS = ("scenario", "n", "level", "estimator", "mean_risk", "sd_risk", "replicates", "seconds")

# scenario -> (dimension, default points per axis, error kind, contamination kind)
SCENARIOS = {
    "clean2d": (2, 10, "gaussian", None),
    "stripe": (2, 10, "gaussian", "stripe"),
    "square2d": (2, 10, "gaussian", "block"),
    "mix_cauchy2d": (2, 10, "mixture_cauchy", None),
    "mix_slash2d": (2, 10, "mixture_slash", None),
    "clean3d": (3, 5, "gaussian", None),
    "cube3d": (3, 5, "gaussian", "block"),
    "mix_cauchy3d": (3, 5, "mixture_cauchy", None),
    "mix_slash3d": (3, 5, "mixture_slash", None),
}

STRIPE_REGIONS = {"alternating": ALTERNATING, "full": FULL}
STRIPE_LEVEL = 0.2

# Desk budget for benchmarks: a fixed 1000 Adam steps at the largest batch
# size the training protocol allows, without dropout (at this budget dropout
# fits are still far from converged). Full scale is TrainConfig(): 200
# epochs, batch 256, keep rate from the architecture.
DESK_TRAIN = TrainConfig(batch_size=512, step_budget=1000, dropout_keep=1.0)


class NumericalFailure(RuntimeError):
    """A replicate produced a non-finite risk."""


def empirical_risk(estimate, truth):
    """Squared empirical norm ``(1/N) sum_j (estimate_j - truth_j)^2``."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.mean((estimate - truth) ** 2))


def estimator_loss(name):
    """Map an estimator label to its loss: ``rdnn_huber``, ``dnn_l2`` or
    ``quantile:<tau>``."""
    if name == "rdnn_huber":
        return LossSpec.huber(1.0)
    if name == "dnn_l2":
        return LossSpec.l2()
    if name.startswith("quantile:"):
        return LossSpec.quantile(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown estimator {name!r}")


@dataclass(frozen=True)
class BenchConfig:
    scenario: str
    ns: tuple = (50,)
    levels: tuple = (0.0,)
    region: object = None
    replicates: int = 10
    estimators: tuple = ("rdnn_huber", "dnn_l2")
    base_seed: int = 0
    train: TrainConfig = DESK_TRAIN
    arch: estimator.ArchitectureConfig = None
    m: int = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.ns or any(n < 1 for n in self.ns):
            raise ValueError("ns must be nonempty positive sample sizes")
        for name in self.estimators:
            estimator_loss(name)
        _, _, error_kind, ckind = SCENARIOS[self.scenario]
        for level in self.levels:
            if not 0.0 <= level <= 1.0:
                raise ValueError(f"level {level} outside [0, 1]")
        if ckind == "stripe" and self.region_key not in STRIPE_REGIONS:
            raise ValueError(f"stripe region must be one of {sorted(STRIPE_REGIONS)}")
        if ckind == "block":
            a0, a1 = self.block
            if not 0.0 <= a0 <= a1 <= 1.0:
                raise ValueError(f"invalid block region [{a0}, {a1}]")

    @property
    def dim(self):
        return SCENARIOS[self.scenario][0]

    @property
    def grid(self):
        d, m_default, _, _ = SCENARIOS[self.scenario]
        return sim.make_grid(d, self.m or m_default)

    @property
    def region_key(self):
        return self.region or "full"

    @property
    def block(self):
        a0, a1 = self.region if self.region is not None else (0.1, 0.3)
        return float(a0), float(a1)

    @property
    def label(self):
        ckind = SCENARIOS[self.scenario][3]
        if ckind == "stripe":
            return f"{self.scenario}:{self.region_key}"
        if ckind == "block":
            a0, a1 = self.block
            return f"{self.scenario}:{a0:g}-{a1:g}"
        return self.scenario

    def noise(self, level):
        kind = SCENARIOS[self.scenario][2]
        weight = level if kind != "gaussian" else 0.0
        return sim.NoiseSpec(gp_enabled=True, error_kind=kind, weight=weight)

    def contamination(self, level):
        ckind = SCENARIOS[self.scenario][3]
        if ckind == "stripe":
            return ContaminationSpec("stripe", level, STRIPE_LEVEL, intervals=STRIPE_REGIONS[self.region_key])
        if ckind == "block":
            a0, a1 = self.block
            return ContaminationSpec("block", level, a0, a1)
        return None


@dataclass
class BenchRow:
    scenario: str
    n: int
    level: float
    estimator: str
    mean_risk: float
    sd_risk: float
    replicates: int
    seconds: float
    risks: list = field(default_factory=list)


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def row(self, scenario, n, level, estimator):
        for r in self.rows:
            if (r.scenario, r.n, r.level, r.estimator) == (scenario, n, level, estimator):
                return r
        raise KeyError((scenario, n, level, estimator))

    def extend(self, other):
        self.rows.extend(other.rows)
        return self


def aggregate(risks):
    """Mean and sample standard deviation (denominator R - 1)."""
    risks = np.asarray(risks, dtype=float)
    mean = float(np.mean(risks))
    sd = float(np.std(risks, ddof=1)) if len(risks) > 1 else float("nan")
    return mean, sd


def run_replicate(config, n, level, rep):
    """All estimators on one simulated data set; returns {estimator: (risk, seconds)}."""
    data_seed = config.base_seed + rep
    grid = config.grid
    clean = sim.simulate(grid, "2d" if config.dim == 2 else "3d", config.noise(level), n, data_seed)
    spec = config.contamination(level)
    sample = contam.apply(clean, spec, data_seed) if spec is not None else clean
    fit_seed = _rng.derive_seed(data_seed, _rng.FIT, 7)
    out = {}
    for name in config.estimators:
        t0 = time.perf_counter()
        result = estimator.fit(sample, estimator_loss(name), train=config.train, arch=config.arch, seed=fit_seed)
        elapsed = time.perf_counter() - t0
        risk = empirical_risk(result.fitted_surface, clean.truth)
        if not np.isfinite(risk):
            raise NumericalFailure(
                f"{config.label} n={n} level={level} replicate={rep} {name}: non-finite risk "
                f"(final objective {result.trace[-1]!r})"
            )
        out[name] = (risk, elapsed)
    return out


def _task(args):
    return args[:3], run_replicate(*args)


def worker_count():
    env = os.environ.get("RDNN_THREADS")
    cpus = os.cpu_count() or 1
    return max(1, min(int(env), cpus) if env else cpus)


def run_bench(config, workers=None, progress=None):
    """Run every (n, level) cell of ``config`` (or a list of configs)."""
    configs = config if isinstance(config, (list, tuple)) else [config]
    tasks = [
        (cfg, n, level, rep)
        for cfg in configs
        for n in cfg.ns
        for level in cfg.levels
        for rep in range(cfg.replicates)
    ]
    workers = worker_count() if workers is None else workers
    results = {}
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            key, res = _task(t)
            results[(id(t[0]),) + key[1:] + (t[3],)] = res
            if progress:
                progress(t, res)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for t, (key, res) in zip(tasks, pool.map(_task, tasks)):
                results[(id(t[0]),) + key[1:] + (t[3],)] = res
                if progress:
                    progress(t, res)
    report = BenchReport()
    for cfg in configs:
        for n in cfg.ns:
            for level in cfg.levels:
                for name in cfg.estimators:
                    per_rep = [results[(id(cfg), n, level, rep)][name] for rep in range(cfg.replicates)]
                    risks = [r for r, _ in per_rep]
                    mean, sd = aggregate(risks)
                    report.rows.append(
                        BenchRow(cfg.label, n, level, name, mean, sd, cfg.replicates, sum(s for _, s in per_rep), risks)
                    )
    return report


def _fmt(x):
    return f"{x:.6g}"


def report_csv(report, timing=True):
    """CSV text, one row per (cell, estimator); numbers at 6 significant
    digits. ``timing=False`` writes 0 seconds so output is byte-stable."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.rows:
        w.writerow([r.scenario, r.n, _fmt(r.level), r.estimator, _fmt(r.mean_risk), _fmt(r.sd_risk),
                    r.replicates, _fmt(r.seconds if timing else 0.0)])
    return buf.getvalue()


def parse_csv(text):
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    for rec in reader:
        rows.append(
            BenchRow(
                rec["scenario"], int(rec["n"]), float(rec["level"]), rec["estimator"],
                float(rec["mean_risk"]), float(rec["sd_risk"]), int(rec["replicates"]), float(rec["seconds"]),
            )
        )
    return BenchReport(rows)


def simulation_table(number, replicates=10, ns=(50, 100, 200), train=DESK_TRAIN, estimators=("rdnn_huber", "dnn_l2"), base_seed=0):
    """Scenario grid of one of the simulation tables (1-6) as BenchConfigs."""
    common = dict(ns=tuple(ns), replicates=replicates, train=train, estimators=tuple(estimators), base_seed=base_seed)
    if number == 1:
        return [BenchConfig("clean2d", **common)]
    if number == 2:
        return [
            BenchConfig("stripe", levels=(0.1, 0.2), region="alternating", **common),
            BenchConfig("stripe", levels=(0.1, 0.2), region="full", **common),
            BenchConfig("square2d", levels=(0.1, 0.2), region=(0.1, 0.3), **common),
            BenchConfig("square2d", levels=(0.1, 0.2), region=(0.1, 0.5), **common),
        ]
    if number == 3:
        return [
            BenchConfig("mix_cauchy2d", levels=(0.3, 0.5), **common),
            BenchConfig("mix_slash2d", levels=(0.3, 0.5), **common),
        ]
    if number == 4:
        return [BenchConfig("clean3d", **common)]
    if number == 5:
        return [
            BenchConfig("cube3d", levels=(0.1, 0.2), region=(0.1, 0.2), **common),
            BenchConfig("cube3d", levels=(0.1, 0.2), region=(0.1, 0.3), **common),
        ]
    if number == 6:
        return [
            BenchConfig("mix_cauchy3d", levels=(0.3, 0.5), **common),
            BenchConfig("mix_slash3d", levels=(0.3, 0.5), **common),
        ]
    raise ValueError(f"no simulation table {number}")
