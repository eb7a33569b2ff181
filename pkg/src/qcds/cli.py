"""
Command-line front end.

    qcds train   --design bench_ry_cx --dataset data/iris.libsvm --epochs 300
    qcds eval    --design best.design --dataset data/glass.libsvm --tile --split 0.75,0,0.25
    qcds search random|rl|bo ...
    qcds plot    run_a/history.csv run_b/history.csv --out figs
    qcds run     --config previous_run/config.json --out rerun

Every command writes ``config.json`` (enough to re-run it with ``qcds run``)
and ``manifest.json`` (timings and versions) next to its CSVs and design
files.  The master seed falls back to ``$QCDS_SEED`` when ``--seed`` is
omitted.
"""

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import _kernels as K
from . import design as design_mod
from .circuit import BENCHMARKS, make_benchmark
from .data import load_libsvm, scale_features, split as split_rows
from .errors import (
    ConfigurationError,
    DatasetParseError,
    DesignParseError,
    IngestionError,
    PlotError,
    QCDSError,
    TilingError,
    WiringError,
)
from .trainer import TrainConfig, train

log = logging.getLogger("qcds")

COMMANDS = ("TRAIN", "EVAL", "SEARCH_RANDOM", "SEARCH_RL", "SEARCH_BO", "PLOT")
EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_DATASET = 0, 1, 2, 3


class DatasetMissing(QCDSError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    out: str
    dataset: Optional[str] = None
    split: tuple = (0.4, 0.3, 0.3)
    split_seed: int = 0
    layers: int = 6
    seed: int = 0
    train: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command}")
        if self.command != "PLOT":
            if not self.dataset:
                raise ConfigurationError("--dataset is required")
            if len(self.split) != 3 or abs(sum(self.split) - 1) > 1e-9 or min(self.split) < 0:
                raise ConfigurationError(f"split fractions must be three values summing to 1: {self.split}")
            if self.layers < 1:
                raise ConfigurationError("--layers must be >= 1")
            TrainConfig(**self.train)
        return self

    def to_json(self):
        d = asdict(self)
        d["split"] = list(self.split)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["split"] = tuple(d.get("split", (0.4, 0.3, 0.3)))
        return cls(**d)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _save_design(d, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    design_mod.save(d, path)


def _load_dataset(cfg):
    if not os.path.isfile(cfg.dataset):
        raise DatasetMissing(f"dataset not found: {cfg.dataset}")
    ds = scale_features(load_libsvm(cfg.dataset))
    return ds, split_rows(ds, cfg.split, cfg.split_seed)


def _resolve_design(spec, n_qubits, n_layers, tile_to=None):
    key = spec.upper().replace("BENCH_", "")
    if key in BENCHMARKS:
        return make_benchmark(key, n_qubits, n_layers)
    if not os.path.isfile(spec):
        raise ConfigurationError(
            f"design {spec!r} is neither a file nor one of "
            + ", ".join("bench_" + k.lower() for k in BENCHMARKS)
        )
    d = design_mod.load(spec)
    if tile_to is not None and d.n_qubits < tile_to:
        d = design_mod.tile(d, tile_to)
    return d


def _fmt(v):
    return "" if v is None else repr(float(v))


def _ranked_csv(records, paths):
    lines = ["rank,design,val_loss,val_acc,test_loss,test_acc"]
    for r, p in zip(records, paths):
        lines.append(",".join([str(r.rank), p, _fmt(r.val_loss), _fmt(r.val_acc),
                               _fmt(r.test_loss), _fmt(r.test_acc)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command runners
# ---------------------------------------------------------------------------


def _run_train(cfg):
    ds, sp = _load_dataset(cfg)
    tile_to = ds.n_features if cfg.params.get("tile") else None
    d = _resolve_design(cfg.params["design"], ds.n_features, cfg.layers, tile_to)
    tc = TrainConfig(**{**cfg.train, "seed": cfg.seed})
    result = train(d, ds, sp, tc)
    _write(os.path.join(cfg.out, "history.csv"), result.history.to_csv())
    _save_design(d, os.path.join(cfg.out, "design.design"))
    f = result.history.final
    metrics = {k: v for k, v in asdict(f).items()}
    metrics.update(design_qubits=d.n_qubits, design_layers=d.n_layers, dataset=ds.name,
                   split_sizes=list(sp.sizes()), split_seed=sp.seed, seed=cfg.seed)
    _write(os.path.join(cfg.out, "metrics.json"), json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(f"final: train_acc={f.train_acc:.4f} test_acc={_show(f.test_acc)} test_loss={_show(f.test_loss)}")
    return metrics


def _show(v):
    return "n/a" if v is None else f"{v:.4f}"


def _run_search_random(cfg):
    from .search_random import generate_pool, halving_search

    ds, sp = _load_dataset(cfg)
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    pool = generate_pool(p["pool"], p["max_similarity"], rng, ds.n_features, cfg.layers)
    tc = TrainConfig(**cfg.train)
    res = halving_search(pool, [tuple(s) for s in p["schedule"]], p["final_epochs"], ds, sp, tc,
                         master_seed=cfg.seed, target_survivors=p.get("target_survivors"),
                         max_epoch_budget=p.get("max_epoch_budget"),
                         rank_corr_threshold=p.get("rank_corr_threshold"),
                         resume=p.get("resume", False), workers=p.get("workers", 1))
    paths = []
    for r in res.records:
        rel = os.path.join("designs", f"rank_{r.rank:04d}.design")
        _save_design(r.design, os.path.join(cfg.out, rel))
        paths.append(rel)
    _write(os.path.join(cfg.out, "ranked.csv"), _ranked_csv(res.records, paths))
    stages = ["epochs,n_in,n_kept,rank_correlation"] + [
        f"{s.epochs},{s.n_in},{s.n_kept},{_fmt(s.rank_correlation)}" for s in res.stages]
    _write(os.path.join(cfg.out, "stages.csv"), "\n".join(stages) + "\n")
    best = res.records[0]
    print(f"{len(res.records)} survivors ({res.stop_reason}); best val_loss={best.val_loss:.4f}")
    return {"best_val_loss": best.val_loss, "stop_reason": res.stop_reason}


def _run_search_rl(cfg):
    from .search_rl import run_rl_search

    ds, sp = _load_dataset(cfg)
    p = cfg.params
    res = run_rl_search(ds, sp, cfg.layers, mode=p["mode"], metric=p["metric"],
                        controller=p["controller"], inner_epochs=p["inner_epochs"],
                        max_loops=p["max_loops"], controller_lr=p["controller_lr"],
                        entropy_coeff=p["entropy_coeff"], train_config=TrainConfig(**cfg.train),
                        seed=cfg.seed)
    _write(os.path.join(cfg.out, "controller_curve.csv"), res.curve_csv())
    _save_design(res.suggested.design, os.path.join(cfg.out, "suggested.design"))
    _save_design(res.best.design, os.path.join(cfg.out, "best.design"))
    rows = ["role,design,val_loss,val_acc,test_loss,test_acc"]
    for role, fname, r in (("suggested", "suggested.design", res.suggested),
                           ("best_sampled", "best.design", res.best)):
        rows.append(",".join([role, fname, _fmt(r.val_loss),
                              _fmt(r.val_acc), _fmt(r.test_loss), _fmt(r.test_acc)]))
    _write(os.path.join(cfg.out, "designs.csv"), "\n".join(rows) + "\n")
    print(f"{len(res.curve)} loops, converged={res.converged}; "
          f"suggested val_acc={res.suggested.val_acc:.4f} val_loss={res.suggested.val_loss:.4f}")
    return {"loops": len(res.curve), "converged": res.converged}


def _run_search_bo(cfg):
    from .search_bo import run_bo

    ds, sp = _load_dataset(cfg)
    p = cfg.params
    res = run_bo(ds, sp, cfg.layers, budget=p["budget"], inner_epochs=p["inner_epochs"],
                 n_init=p["n_init"], candidates_per_step=p["candidates"], seed=cfg.seed,
                 mode=p["mode"], train_config=TrainConfig(**cfg.train))
    paths = []
    for s in res.trace:
        rel = os.path.join("designs", f"eval_{s.iteration:04d}.design")
        _save_design(s.design, os.path.join(cfg.out, rel))
        paths.append(rel)
    _write(os.path.join(cfg.out, "bo_trace.csv"), res.trace_csv(paths))
    _save_design(res.best.design, os.path.join(cfg.out, "best.design"))
    print(f"{len(res.trace)} evaluations; incumbent val_loss={res.best.val_loss:.4f}")
    return {"incumbent": res.best.val_loss}


def _run_plot(cfg):
    from .report import plot

    written = plot(cfg.params["csv"], cfg.out, cfg.params.get("labels"))
    for w in written:
        print(w)
    return {"figures": written}


RUNNERS = {
    "TRAIN": _run_train,
    "EVAL": _run_train,
    "SEARCH_RANDOM": _run_search_random,
    "SEARCH_RL": _run_search_rl,
    "SEARCH_BO": _run_search_bo,
    "PLOT": _run_plot,
}


def run(cfg: ExperimentConfig) -> int:
    cfg.validate()
    if cfg.dataset and not os.path.isfile(cfg.dataset):
        raise DatasetMissing(f"dataset not found: {cfg.dataset}")
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "config.json"), cfg.to_json())
    t0 = time.time()
    summary = RUNNERS[cfg.command](cfg)
    manifest = {
        "command": cfg.command,
        "wall_clock_s": round(time.time() - t0, 3),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "qcds": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "backend": K.backend_name(),
        "summary": summary,
    }
    _write(os.path.join(cfg.out, "manifest.json"), json.dumps(manifest, indent=2, default=str) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _fractions(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("split needs three comma-separated fractions")
    return vals


def _schedule(text):
    out = []
    try:
        for part in text.split(","):
            e, k = part.split(":")
            out.append((int(e), float(k)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}; expected e.g. 2:0.5,5:0.5")
    return out


def _optional_float(text):
    return None if text.lower() in ("none", "off") else float(text)


def _common(p, dataset=True):
    if dataset:
        p.add_argument("--dataset", required=True)
        p.add_argument("--split", type=_fractions, default=(0.4, 0.3, 0.3))
        p.add_argument("--split-seed", type=int, default=0)
        p.add_argument("--layers", type=int, default=6)
        p.add_argument("--epochs", type=int, default=300)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=0.05)
        p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
        p.add_argument("--init-scale", type=float, default=float(np.pi / 8))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="qcds", description="PQC design search")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("train", "eval"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--design", required=True,
                       help="design file or one of bench_ry_cx, bench_ry_cz, bench_ry_cx_reupload")
        p.add_argument("--tile", action="store_true",
                       help="repeat a narrower design's qubit pattern to the dataset width")

    search = sub.add_parser("search").add_subparsers(dest="strategy", required=True)
    p = search.add_parser("random")
    _common(p)
    p.add_argument("--pool", type=int, default=200)
    p.add_argument("--max-similarity", type=float, default=0.75)
    p.add_argument("--schedule", type=_schedule, default=[(2, 0.5), (5, 0.5), (10, 0.4)])
    p.add_argument("--final-epochs", type=int, default=150)
    p.add_argument("--target-survivors", type=int, default=None)
    p.add_argument("--max-epoch-budget", type=int, default=None)
    p.add_argument("--rank-corr-threshold", type=_optional_float, default=0.9)
    p.add_argument("--resume", action="store_true")

    p = search.add_parser("rl")
    _common(p)
    p.add_argument("--mode", choices=("layer", "whole"), default="layer")
    p.add_argument("--metric", choices=("val_loss", "val_acc"), default="val_loss")
    p.add_argument("--controller", choices=("classical", "hybrid"), default="classical")
    p.add_argument("--inner-epochs", type=int, default=20)
    p.add_argument("--max-loops", type=int, default=100)
    p.add_argument("--controller-lr", type=float, default=0.1)
    p.add_argument("--entropy-coeff", type=float, default=0.01)

    p = search.add_parser("bo")
    _common(p)
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--inner-epochs", type=int, default=100)
    p.add_argument("--candidates", type=int, default=2048)
    p.add_argument("--mode", choices=("layer", "whole"), default="whole")

    p = sub.add_parser("plot")
    _common(p, dataset=False)
    p.add_argument("csv", nargs="+")
    p.add_argument("--labels", nargs="+", default=None)

    p = sub.add_parser("run", help="re-execute a persisted config.json")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> ExperimentConfig:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("QCDS_SEED", "0"))
    if args.command == "plot":
        return ExperimentConfig("PLOT", args.out or "figures", seed=seed,
                                params={"csv": args.csv, "labels": args.labels})
    command = args.command.upper() if args.command != "search" else "SEARCH_" + args.strategy.upper()
    train_cfg = {"epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr,
                 "optimizer": args.optimizer.upper(), "init_scale": args.init_scale, "seed": seed}
    if command in ("TRAIN", "EVAL"):
        params = {"design": args.design, "tile": args.tile}
    elif command == "SEARCH_RANDOM":
        params = {"pool": args.pool, "max_similarity": args.max_similarity,
                  "schedule": [list(s) for s in args.schedule], "final_epochs": args.final_epochs,
                  "target_survivors": args.target_survivors,
                  "max_epoch_budget": args.max_epoch_budget,
                  "rank_corr_threshold": args.rank_corr_threshold, "resume": args.resume,
                  "workers": args.workers}
    elif command == "SEARCH_RL":
        params = {"mode": args.mode.upper(), "metric": args.metric.upper(),
                  "controller": args.controller.upper(), "inner_epochs": args.inner_epochs,
                  "max_loops": args.max_loops, "controller_lr": args.controller_lr,
                  "entropy_coeff": args.entropy_coeff}
    else:
        params = {"budget": args.budget, "n_init": args.n_init, "inner_epochs": args.inner_epochs,
                  "candidates": args.candidates, "mode": args.mode.upper()}
    out = args.out or os.path.join("runs", f"{command.lower()}_seed{seed}")
    return ExperimentConfig(command, out, dataset=args.dataset, split=args.split,
                            split_seed=args.split_seed, layers=args.layers, seed=seed,
                            train=train_cfg, params=params)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            with open(args.config, encoding="utf-8") as fh:
                cfg = ExperimentConfig.from_json(fh.read())
            if args.out:
                cfg.out = args.out
        else:
            cfg = config_from_args(args)
        cfg.validate()
    except (ConfigurationError, OSError, ValueError, TypeError) as exc:
        print(f"qcds: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except DatasetMissing as exc:
        print(f"qcds: error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (DatasetParseError, IngestionError) as exc:
        print(f"qcds: error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (ConfigurationError, DesignParseError, TilingError, WiringError) as exc:
        print(f"qcds: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlotError as exc:
        print(f"qcds: plot error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.exception("internal failure")
        print(f"qcds: internal error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
