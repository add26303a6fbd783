"""Command-line interface: ``rdnn {simulate,fit,bench,ingest}``.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric failure, 5 data inconsistency.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from rdnn import contam, estimator, evaluation, fileio, sim
from rdnn.contam import ContaminationSpec
from rdnn.estimator import ArchitectureConfig
from rdnn.loss import LossSpec
from rdnn.trainer import TrainConfig

log = logging.getLogger("rdnn")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


# RunConfig ------------------------------------------------------------------

# Sections of a RunConfig document and the dataclass each one overrides.
RUN_SECTIONS = {
    "train": TrainConfig,
    "loss": LossSpec,
    "arch": ArchitectureConfig,
}
BENCH_KEYS = {"scenario", "ns", "levels", "region", "replicates", "estimators", "base_seed", "m"}


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise UsageError(f"{where}: expected a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise UsageError(f"{where}: unknown keys {unknown}")


def load_run_config(path):
    """Parse and validate a RunConfig JSON document.

    Top-level keys: ``seed`` (int), ``bench`` (BenchConfig fields minus
    ``train``/``arch``), ``train`` (TrainConfig fields), ``loss`` (``kind``,
    ``k``, ``tau``), ``arch`` (``L``, ``width``, ``s``, ``dropout_keep``).
    Unknown keys anywhere are rejected. Missing keys keep their defaults.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    _check_keys(doc, {"seed", "bench"} | set(RUN_SECTIONS), "run config")
    for name, cls in RUN_SECTIONS.items():
        if name in doc:
            _check_keys(doc[name], {f.name for f in dataclasses.fields(cls)}, name)
    if "bench" in doc:
        _check_keys(doc["bench"], BENCH_KEYS, "bench")
    if "seed" in doc and not isinstance(doc["seed"], int):
        raise UsageError("seed must be an integer")
    return doc


def _train_from(doc, args, base):
    kw = dict(doc.get("train", {}))
    for flag, key in (("epochs", "epochs"), ("step_budget", "step_budget"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("dropout_keep", "dropout_keep")):
        value = getattr(args, flag, None)
        if value is not None:
            kw[key] = value
    if "epochs" in kw and "step_budget" not in kw:
        kw["step_budget"] = None
    return dataclasses.replace(base, **kw)


def _arch_from(doc):
    if "arch" not in doc:
        return None
    return ArchitectureConfig(**doc["arch"])


# simulate -------------------------------------------------------------------


def cmd_simulate(args, doc):
    mean_id = f"{args.dim}d"
    if mean_id not in sim.MEAN_FUNCTIONS:
        raise UsageError(f"no preset mean function for dimension {args.dim} (choose 2 or 3)")
    if args.m < 1 or args.n < 1:
        raise UsageError("--m and --n must be positive")
    seed = doc.get("seed", args.seed)
    noise = sim.NoiseSpec(gp_enabled=not args.no_gp, error_kind=args.noise, weight=args.weight)
    sample = sim.simulate(sim.make_grid(args.dim, args.m), mean_id, noise, args.n, seed)
    if args.contam:
        if args.contam == "stripe":
            spec = ContaminationSpec("stripe", args.r, args.a0, intervals=evaluation.STRIPE_REGIONS[args.region])
        else:
            spec = ContaminationSpec("block", args.r, args.a0, args.a1)
        sample = contam.apply(sample, spec, seed)
    fileio.write_grid(args.out, sample)
    print(f"wrote {args.out}: d={args.dim} n={sample.n} N={sample.grid.N} seed={seed}")


# fit ------------------------------------------------------------------------


def _loss_from(args, doc):
    kw = dict(doc.get("loss", {}))
    if args.loss is not None:
        kw = {"kind": args.loss}
    if args.k is not None:
        kw["k"] = args.k
    if args.tau is not None:
        kw["tau"] = args.tau
    return LossSpec(**kw) if kw else LossSpec.huber(1.0)


def cmd_fit(args, doc):
    loss = _loss_from(args, doc)
    train = _train_from(doc, args, TrainConfig())
    if args.predict_m is not None and args.predict_m < 1:
        raise UsageError("--predict-m must be positive")
    try:
        sample = fileio.read_grid(args.input)
    except ValueError as exc:
        raise OSError(f"{args.input}: {exc}") from exc
    seed = doc.get("seed", args.seed)

    def progress(epoch, value):
        log.info("epoch %d objective %.6g", epoch + 1, value)

    result = estimator.fit(sample, loss, train=train, arch=_arch_from(doc), seed=seed, progress=progress)
    if not (np.all(np.isfinite(result.trace)) and np.all(np.isfinite(result.fitted_surface))):
        raise NumericError(f"training objective became non-finite (last value {result.trace[-1]!r})")
    model_path, manifest_path = fileio.write_model(args.out, result, text=args.text_model)
    trace_path = f"{args.out}.trace.csv"
    fileio.atomic_write(trace_path, "epoch,objective\n" + "".join(
        f"{e + 1},{v!r}\n" for e, v in enumerate(result.trace.tolist())))
    print(f"wrote {model_path}, {manifest_path} and {trace_path}: {loss.label()} objective {result.trace[-1]:.6g}")

    surface, shape = result.fitted_surface, sample.grid.shape
    if args.predict_m is not None:
        target = sim.make_grid(sample.grid.d, args.predict_m)
        surface, shape = estimator.predict(result, target), target.shape
        pred = sim.FunctionalSample(target, surface[None, :], None, {"source": "prediction", "m": args.predict_m})
        pred_path = f"{args.out}.pred.fgrd"
        fileio.write_grid(pred_path, pred)
        print(f"wrote {pred_path}: {'x'.join(map(str, shape))} surface")
    if args.heatmap:
        outdir = Path(args.heatmap)
        outdir.mkdir(parents=True, exist_ok=True)
        slices = fileio.surface_slices(surface, shape)
        for k, sl in enumerate(slices):
            fileio.emit_heatmap(sl, outdir / f"slice_{k:03d}.pgm")
        print(f"wrote {len(slices)} heatmap(s) to {outdir}")


# bench ----------------------------------------------------------------------


def _bench_configs(args, doc):
    replicates = args.replicates
    if replicates is None:
        replicates = doc.get("bench", {}).get("replicates", 100 if args.paper_scale else 10)
    if replicates < 1:
        raise UsageError("--replicates must be at least 1")
    base_train = TrainConfig() if args.paper_scale else evaluation.DESK_TRAIN
    train = _train_from(doc, args, base_train)
    seed = doc.get("seed", args.seed)
    arch = _arch_from(doc)
    if args.paper_table is not None:
        ns = tuple(args.n) if args.n else (50, 100, 200)
        configs = evaluation.simulation_table(args.paper_table, replicates=replicates, ns=ns, train=train, base_seed=seed)
        return [dataclasses.replace(c, arch=arch) for c in configs]
    kw = dict(doc.get("bench", {}))
    if args.scenario:
        kw["scenario"] = args.scenario
    if "scenario" not in kw:
        raise UsageError("bench needs --scenario, --paper-table or a bench.scenario config entry")
    if args.n:
        kw["ns"] = args.n
    if args.levels:
        kw["levels"] = args.levels
    if args.region:
        kw["region"] = args.region
    if args.estimators:
        kw["estimators"] = args.estimators
    for key in ("ns", "levels", "estimators"):
        if key in kw:
            kw[key] = tuple(kw[key])
    if isinstance(kw.get("region"), list):
        kw["region"] = tuple(kw["region"])
    kw.update(replicates=replicates, base_seed=seed, train=train, arch=arch)
    return [evaluation.BenchConfig(**kw)]


def _parse_region(text):
    if text in evaluation.STRIPE_REGIONS:
        return text
    try:
        a0, a1 = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"region must be 'alternating', 'full' or 'a0,a1', got {text!r}") from exc
    return (a0, a1)


def cmd_bench(args, doc):
    configs = _bench_configs(args, doc)

    def progress(task, res):
        cfg, n, level, rep = task
        log.info("%s n=%d level=%g replicate %d: %s", cfg.label, n, level, rep,
                 " ".join(f"{k}={v[0]:.4g}" for k, v in res.items()))

    try:
        report = evaluation.run_bench(configs, workers=args.workers, progress=progress)
    except evaluation.NumericalFailure as exc:
        raise NumericError(str(exc)) from exc
    text = evaluation.report_csv(report, timing=not args.no_timing)
    if args.out:
        fileio.atomic_write(args.out, text)
        print(f"wrote {args.out}: {len(report.rows)} rows")
    else:
        sys.stdout.write(text)


# ingest ---------------------------------------------------------------------


def cmd_ingest(args, doc):
    if bool(args.csv_dir) == bool(args.raw):
        raise UsageError("ingest needs exactly one of --csv-dir or --raw")
    if args.csv_dir:
        if not Path(args.csv_dir).is_dir():
            raise FileNotFoundError(f"{args.csv_dir}: not a directory")
        sample = fileio.ingest_csv_dir(args.csv_dir)
    else:
        sample = fileio.ingest_raw(args.raw, args.header)
    fileio.write_grid(args.out, sample)
    print(f"wrote {args.out}: d={sample.grid.d} n={sample.n} N={sample.grid.N}")


# parser ---------------------------------------------------------------------


def _train_flags(p):
    p.add_argument("--epochs", type=int, help="training epochs (clears any step budget)")
    p.add_argument("--step-budget", type=int, help="optimizer steps; epochs are derived from it")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--dropout-keep", type=float, help="keep rate; default comes from the architecture")


def build_parser():
    parser = argparse.ArgumentParser(prog="rdnn", description="Robust deep-network estimation for functional data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate functional data to a grid file")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--m", type=int, default=10, help="grid points per axis")
    p.add_argument("--n", type=int, default=50, help="subjects")
    p.add_argument("--noise", choices=sim.ERROR_KINDS, default="gaussian")
    p.add_argument("--weight", type=float, default=0.0, help="mixture weight of the heavy-tailed component")
    p.add_argument("--no-gp", action="store_true", help="drop the Gaussian-process term")
    p.add_argument("--contam", choices=("stripe", "block"))
    p.add_argument("--r", type=float, default=0.1, help="fraction of contaminated subjects")
    p.add_argument("--a0", type=float, default=0.2)
    p.add_argument("--a1", type=float, default=None)
    p.add_argument("--region", choices=sorted(evaluation.STRIPE_REGIONS), default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a mean or quantile surface")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output prefix for <prefix>.rdnn and <prefix>.json")
    p.add_argument("--loss", choices=("huber", "l2", "quantile"))
    p.add_argument("--k", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--predict-m", type=int, help="also write the surface on an M-per-axis grid")
    p.add_argument("--heatmap", help="directory for P5 heatmaps of each 2D slice")
    p.add_argument("--text-model", action="store_true", help="store weights as JSON instead of binary")
    _train_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="Monte Carlo benchmark to CSV")
    p.add_argument("--paper-table", type=int, choices=(1, 2, 3, 4, 5, 6), help="preset scenario grid of simulation table 1-6")
    p.add_argument("--scenario", choices=sorted(evaluation.SCENARIOS))
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--levels", type=float, nargs="+", help="contamination fraction or mixture weight")
    p.add_argument("--region", type=_parse_region, help="'alternating', 'full' or 'a0,a1'")
    p.add_argument("--estimators", nargs="+")
    p.add_argument("--replicates", type=int)
    p.add_argument("--paper-scale", action="store_true", help="full training budget (200 epochs, batch 256, architecture dropout) and 100 replicates")
    p.add_argument("--workers", type=int, help="worker processes (default: RDNN_THREADS or CPU count)")
    p.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column")
    p.add_argument("--seed", type=int, default=0, help="base seed; replicate i uses seed + i")
    p.add_argument("--config")
    p.add_argument("--out")
    _train_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ingest", help="convert CSV or raw lattices to a grid file")
    p.add_argument("--csv-dir")
    p.add_argument("--raw")
    p.add_argument("--header", help="JSON sidecar for --raw (default <raw>.json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        doc = load_run_config(args.config) if getattr(args, "config", None) else {}
        args.func(args, doc)
    except UsageError as exc:
        print(f"rdnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except fileio.DataInconsistency as exc:
        print(f"rdnn: inconsistent data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"rdnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"rdnn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"rdnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
