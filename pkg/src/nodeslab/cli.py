"""Command-line entry point: hyper, simulate, train, eval, export.

Run configs are flat ``key = value`` files (blank lines and ``#`` comments
allowed). Every key maps to one RunConfig field; a preset fills architecture
and optimizer defaults which explicit keys then override. Exit codes: 0 on
success, 2 for configuration problems, 3 for data problems, 4 when training
diverges numerically.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import data as datamod
from . import evaluate, priors, trainer
from .model import (
    INIT_SCHEMES,
    MODES,
    TASKS,
    ACTIVATIONS,
    Architecture,
    PriorConfig,
    init_state,
)
from .numerics import RandomStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class ConfigError(Exception):
    """One or more configuration violations; carries the full list."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    """Flat, file-serializable description of one training run."""

    preset: str | None = None
    mode: str = "ssig"
    seed: int = 0
    out_dir: str = "run-out"
    # dataset source: a generator name or a CSV pair, never both
    dataset: str | None = None
    data_seed: int = 0
    n_train: int = 3000
    n_test: int = 1000
    train_csv: str | None = None
    test_csv: str | None = None
    target_column: str | None = None
    split_fraction: float | None = None
    standardize: bool = False
    # architecture
    task: str = "regression"
    hidden: tuple = ()
    activation: str = "sigmoid"
    n_classes: int | None = None
    init_scheme: str | None = None
    gamma_init: float = 0.99
    # optimizer
    learning_rate: float = 1e-3
    batch_size: int = 0
    max_epochs: int = 100
    S: int = 1
    tau: float = 0.5
    elbo_tol: float | None = None
    elbo_window: int = 50
    checkpoint_every: int = 10
    snapshot_every: int = 0
    eval_S: int = 30
    # prior
    sigma0_2: float = 1.0
    sigma_e2: float = 1.0
    xi: float = 0.0
    floor: float = 1e-50
    lambda_override: tuple | None = None
    C_override: tuple | None = None


# key name in config files -> (field name, parser)
def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_batch(text: str) -> int:
    if text.strip().lower() == "full":
        return 0
    return int(text)


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _parse_ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


CONFIG_KEYS = {
    "preset": ("preset", str),
    "mode": ("mode", str),
    "seed": ("seed", int),
    "out_dir": ("out_dir", str),
    "dataset": ("dataset", str),
    "data_seed": ("data_seed", int),
    "n_train": ("n_train", int),
    "n_test": ("n_test", int),
    "train_csv": ("train_csv", str),
    "test_csv": ("test_csv", str),
    "target_column": ("target_column", str),
    "split_fraction": ("split_fraction", float),
    "standardize": ("standardize", _parse_bool),
    "task": ("task", str),
    "hidden": ("hidden", _parse_ints),
    "activation": ("activation", str),
    "n_classes": ("n_classes", int),
    "init_scheme": ("init_scheme", str),
    "gamma_init": ("gamma_init", float),
    "learning_rate": ("learning_rate", float),
    "batch_size": ("batch_size", _parse_batch),
    "max_epochs": ("max_epochs", int),
    "S": ("S", int),
    "tau": ("tau", float),
    "elbo_tol": ("elbo_tol", float),
    "elbo_window": ("elbo_window", int),
    "checkpoint_every": ("checkpoint_every", int),
    "snapshot_every": ("snapshot_every", int),
    "eval_S": ("eval_S", int),
    "sigma0_2": ("sigma0_2", float),
    "sigma_e2": ("sigma_e2", float),
    "xi": ("xi", float),
    "floor": ("floor", float),
    "lambda": ("lambda_override", _parse_floats),
    "C": ("C_override", _parse_floats),
}

_FIELD_TO_KEY = {fname: key for key, (fname, _) in CONFIG_KEYS.items()}


def parse_config_file(path) -> dict:
    """Read a flat key = value file into an ordered string mapping."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in mapping:
                raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
            mapping[key] = value.strip()
    return mapping


def config_from_mapping(mapping: dict) -> RunConfig:
    """Build and validate a RunConfig, collecting every violation."""
    problems = []
    unknown = [k for k in mapping if k not in CONFIG_KEYS]
    for k in unknown:
        problems.append(f"unknown config key {k!r}")

    values = {}
    for key, raw in mapping.items():
        if key in unknown:
            continue
        fname, parse = CONFIG_KEYS[key]
        try:
            values[fname] = parse(raw)
        except ValueError as exc:
            problems.append(f"bad value for {key!r}: {exc}")

    preset_defaults = {}
    mode_from_preset = None
    preset = values.get("preset")
    if preset is not None:
        try:
            preset_defaults, mode_from_preset = trainer.resolve_preset(preset)
        except KeyError as exc:
            problems.append(str(exc.args[0]))
            preset_defaults = {}
    if problems:
        raise ConfigError(problems)

    cfg = RunConfig()
    for fname, val in preset_defaults.items():
        setattr(cfg, fname, val)
    if mode_from_preset is not None:
        cfg.mode = mode_from_preset
    for fname, val in values.items():
        setattr(cfg, fname, val)
    cfg.hidden = tuple(cfg.hidden)

    # cross-field validation
    if cfg.mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.task not in TASKS:
        problems.append(f"task must be one of {TASKS}, got {cfg.task!r}")
    if cfg.activation not in ACTIVATIONS:
        problems.append(f"unknown activation {cfg.activation!r}")
    if cfg.init_scheme is not None and cfg.init_scheme not in INIT_SCHEMES:
        problems.append(f"init_scheme must be one of {INIT_SCHEMES}")
    sources = [cfg.dataset is not None, cfg.train_csv is not None]
    if sum(sources) != 1:
        problems.append("exactly one dataset source required: dataset or train_csv")
    if cfg.dataset is not None and cfg.dataset not in ("sim1", "sim2"):
        problems.append(f"dataset must be sim1 or sim2, got {cfg.dataset!r}")
    if cfg.test_csv is not None and cfg.train_csv is None:
        problems.append("test_csv requires train_csv")
    if cfg.split_fraction is not None and not 0.0 < cfg.split_fraction < 1.0:
        problems.append("split_fraction must lie in (0, 1)")
    if cfg.split_fraction is not None and cfg.test_csv is not None:
        problems.append("split_fraction and test_csv are mutually exclusive")
    if cfg.lambda_override is not None and cfg.C_override is not None:
        problems.append("lambda and C overrides are mutually exclusive")
    if not cfg.hidden and cfg.preset is None:
        problems.append("hidden widths required (directly or via a preset)")
    if any(w < 1 for w in cfg.hidden):
        problems.append("hidden widths must be >= 1")
    if problems:
        raise ConfigError(problems)
    return cfg


def config_to_text(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to the flat file format (canonical order)."""
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if val is None or val == f.default:
            continue
        key = _FIELD_TO_KEY[f.name]
        if isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, tuple):
            text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, float):
            text = repr(val)
        else:
            text = str(val)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _load_run_data(cfg: RunConfig):
    """Materialize (train, test-or-None, standardization-or-None) for a run."""
    if cfg.dataset is not None:
        gen = datamod.gen_sim1 if cfg.dataset == "sim1" else datamod.gen_sim2
        full = gen(cfg.n_train + cfg.n_test, cfg.data_seed)
        train = datamod.Dataset(
            full.features[: cfg.n_train],
            full.targets[: cfg.n_train],
            feature_names=full.feature_names,
            task=full.task,
            meta=full.meta,
        )
        test = None
        if cfg.n_test > 0:
            test = datamod.Dataset(
                full.features[cfg.n_train :],
                full.targets[cfg.n_train :],
                feature_names=full.feature_names,
                task=full.task,
                meta=full.meta,
            )
    else:
        train = datamod.load_csv(cfg.train_csv, cfg.target_column, cfg.task)
        test = None
        if cfg.test_csv is not None:
            test = datamod.load_csv(cfg.test_csv, cfg.target_column, cfg.task)
        elif cfg.split_fraction is not None:
            train, test = datamod.split(train, cfg.split_fraction, cfg.data_seed)
    stats = None
    if cfg.standardize:
        train, test, stats = datamod.standardize(train, test)
    return train, test, stats


def _build_prior(cfg: RunConfig, k: tuple):
    """Prior inclusion probabilities from an override or the calculator."""
    L = len(k) - 2
    if cfg.lambda_override is not None:
        lam = list(cfg.lambda_override)
        if len(lam) == L:
            lam.append(1.0)
        if len(lam) != L + 1:
            raise ConfigError(f"lambda override needs {L} or {L + 1} entries")
        return PriorConfig(np.asarray(lam), cfg.sigma0_2, cfg.sigma_e2), None
    C = cfg.C_override
    if C is not None and len(C) not in (L, L + 1):
        raise ConfigError(f"C override needs {L} or {L + 1} entries")
    report = priors.build_prior_report(
        np.asarray(k), n=cfg.n_train, xi=cfg.xi, floor=cfg.floor, C=C
    )
    return PriorConfig(report.lam, cfg.sigma0_2, cfg.sigma_e2), report


def run_train(cfg: RunConfig, resume_path: str | None = None) -> int:
    # Load data before touching the filesystem so a bad source leaves no
    # half-made output directory behind.
    train_ds, test_ds, standardization = _load_run_data(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if standardization is not None:
        path = os.path.join(cfg.out_dir, "standardization.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(standardization.to_dict(), fh, indent=2)
            fh.write("\n")
    if cfg.task == "classification":
        n_classes = cfg.n_classes
        if n_classes is None:
            n_classes = int(train_ds.targets.max()) + 1
        k_out = n_classes
    else:
        k_out = 1
    k = (train_ds.p, *cfg.hidden, k_out)
    arch = Architecture(k, cfg.activation, cfg.task)
    cfg.n_train = train_ds.n
    prior, report = _build_prior(cfg, k)
    if report is not None:
        with open(os.path.join(cfg.out_dir, "prior.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")

    resume_section = None
    if resume_path is not None:
        state, resume_section = trainer.load_checkpoint(resume_path)
        if resume_section is None:
            raise ConfigError(f"{resume_path} has no trainer section; cannot resume")
        if state.arch.k != arch.k:
            raise ConfigError(
                f"checkpoint widths {state.arch.k} do not match config widths {arch.k}"
            )
    else:
        state = init_state(
            arch,
            prior,
            cfg.seed,
            init_scheme=cfg.init_scheme,
            gamma_init=cfg.gamma_init,
            mode=cfg.mode,
        )

    tconfig = trainer.TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        S=cfg.S,
        tau=cfg.tau,
        elbo_tol=cfg.elbo_tol,
        elbo_window=cfg.elbo_window,
        seed=cfg.seed,
        checkpoint_every=cfg.checkpoint_every,
        snapshot_every=cfg.snapshot_every,
        eval_S=cfg.eval_S,
    )
    state, trace = trainer.train(
        state, train_ds, tconfig, eval_ds=test_ds, out_dir=cfg.out_dir,
        resume=resume_section,
    )
    trace.to_csv(os.path.join(cfg.out_dir, "trace.csv"))
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))

    stats = trainer.metric_stats_over_window(
        trace, window=1000, stride=tconfig.checkpoint_every
    )
    metric_name = "rmse" if cfg.task == "regression" else "accuracy"
    picked = stats["test_metric"] or stats["train_metric"]
    # The trace carries hidden-layer sparsity; the output layer is always 1.
    sparsity = list(stats["median_sparsity"]) + [1.0]
    mreport = evaluate.MetricsReport(
        task=cfg.task,
        metric=metric_name,
        mean=picked["mean"] if picked else float("nan"),
        sd=picked["sd"] if picked else float("nan"),
        median=picked["median"] if picked else float("nan"),
        sparsity=sparsity,
        S=cfg.eval_S,
        seed=cfg.seed,
        window=stats["window"],
    )
    with open(os.path.join(cfg.out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(mreport.to_json() + "\n")
    print(mreport.to_json())
    return EXIT_OK


def cmd_hyper(args) -> int:
    k = _parse_ints(args.arch)
    if len(k) < 2:
        raise ConfigError("arch needs at least input and output widths")
    s = _parse_floats(args.s) if args.s else None
    B = _parse_floats(args.B) if args.B else None
    C = _parse_floats(args.C) if args.C else None
    report = priors.build_prior_report(
        np.asarray(k), n=args.n, s=s, B=B, xi=args.xi, floor=args.floor, C=C
    )
    print(report.to_json())
    return EXIT_OK


def cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    gen = datamod.gen_sim1 if args.which == "sim1" else datamod.gen_sim2
    full = gen(args.n + args.test_n, args.seed)
    train = datamod.Dataset(
        full.features[: args.n], full.targets[: args.n],
        feature_names=full.feature_names, meta=full.meta,
    )
    test = datamod.Dataset(
        full.features[args.n :], full.targets[args.n :],
        feature_names=full.feature_names, meta=full.meta,
    )
    train_path = os.path.join(args.out, "train.csv")
    test_path = os.path.join(args.out, "test.csv")
    datamod.save_csv(train, train_path)
    datamod.save_csv(test, test_path)
    manifest = {
        "source": args.which,
        "seed": int(args.seed),
        "n_train": int(args.n),
        "n_test": int(args.test_n),
        "p": int(full.p),
        "task": "regression",
        "files": {"train": "train.csv", "test": "test.csv"},
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if full.meta:
        for key in ("teacher", "noise_sigma"):
            if key in full.meta:
                manifest[key] = full.meta[key]
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {train_path} ({args.n} rows), {test_path} ({args.test_n} rows)")
    return EXIT_OK


def cmd_train(args) -> int:
    mapping = parse_config_file(args.config) if args.config else {}
    if args.preset is not None:
        mapping["preset"] = args.preset
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.out is not None:
        mapping["out_dir"] = args.out
    if args.s is not None:
        mapping["S"] = str(args.s)
    cfg = config_from_mapping(mapping)
    return run_train(cfg, resume_path=args.resume)


def cmd_eval(args) -> int:
    state, _ = trainer.load_checkpoint(args.checkpoint)
    task = state.arch.task
    if args.data is not None:
        ds = datamod.load_csv(args.data, args.target_column, task)
    else:
        gen = datamod.gen_sim1 if args.dataset == "sim1" else datamod.gen_sim2
        ds = gen(args.n, args.data_seed)
    # A run that standardized its training data leaves the statistics next to
    # its checkpoints; apply them so the metric is comparable and the RMSE
    # comes out on the original target scale.
    stats_path = os.path.join(
        os.path.dirname(os.path.abspath(args.checkpoint)), "standardization.json"
    )
    if os.path.exists(stats_path):
        with open(stats_path, "r", encoding="utf-8") as fh:
            stats = datamod.Standardization.from_dict(json.load(fh))
        if len(stats.feature_mean) != ds.p:
            raise datamod.DataFormatError(
                f"standardization stats cover {len(stats.feature_mean)} features "
                f"but the dataset has {ds.p}"
            )
        ds = stats.apply(ds)
    if ds.p != state.arch.k[0]:
        raise datamod.DataFormatError(
            f"dataset has {ds.p} features but the checkpoint expects {state.arch.k[0]}"
        )
    if task == "classification" and int(ds.targets.max()) >= state.arch.k[-1]:
        raise datamod.DataFormatError("class label outside the checkpoint's range")
    stream = RandomStream(args.seed, 20)
    value = evaluate.dataset_metric(state, ds, S=args.s, stream=stream)
    report = evaluate.MetricsReport(
        task=task,
        metric="rmse" if task == "regression" else "accuracy",
        mean=value,
        sd=0.0,
        median=value,
        sparsity=evaluate.sparsity_estimate(state).tolist(),
        S=args.s,
        seed=args.seed,
        window=1,
    )
    os.makedirs(args.out, exist_ok=True)
    evaluate.write_node_summary_csv(state, os.path.join(args.out, "node_summary.csv"))
    print(report.to_json())
    return EXIT_OK


def cmd_export(args) -> int:
    state, _ = trainer.load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "node_summary.csv")
    evaluate.write_node_summary_csv(state, path)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodeslab",
        description="Sparse variational Bayesian MLPs with spike-and-slab "
        "node selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hyper", help="print the layer-wise prior report as JSON")
    p.add_argument("--arch", required=True, help="comma widths, e.g. 5,20,20,1")
    p.add_argument("--n", type=int, required=True, help="training sample count")
    p.add_argument("--s", default=None, help="comma sparsity targets (len L+1)")
    p.add_argument("--B", default=None, help="comma norm bounds (len L+1)")
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--floor", type=float, default=1e-50)
    p.add_argument("--C", default=None, help="comma C values; default: grid search")
    p.set_defaults(func=cmd_hyper)

    p = sub.add_parser("simulate", help="write synthetic train/test CSVs")
    p.add_argument("which", choices=("sim1", "sim2"))
    p.add_argument("--n", type=int, default=3000, help="training rows")
    p.add_argument("--test-n", dest="test_n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="run one training job from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--s", type=int, default=None, help="MC samples per step")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help="CSV path")
    p.add_argument("--target-column", dest="target_column", default=None)
    p.add_argument("--dataset", choices=("sim1", "sim2"), default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--data-seed", dest="data_seed", type=int, default=0)
    p.add_argument("--s", type=int, default=30, help="MC samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write the per-node weight summary CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and (args.data is None) == (args.dataset is None):
        print("eval needs exactly one of --data or --dataset", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except trainer.TrainingDivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except datamod.DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
