"""Batch experiment driver.

Subcommands:
  train         config-driven (lambda, seed) sweep; one trace CSV per run plus
                a summary CSV with the min train loss and last-10-epoch stats
  sweep-lambda  train plus best-lambda extraction (ties toward smaller lambda)
  diagnose      teacher diagnostics: beta, rho, lambda*, reduction ratio, and
                per-epoch gap statistics for MLP configs
  verify        run the property suite; non-zero exit iff any property fails
  ingest        convert an IDX pair to the package CSV format

Exit codes: 0 ok, 1 property failure, 2 config error, 3 I/O error.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import core, data_io, distillation, objectives, oracle, telemetry, verification
from .errors import ConfigError, DataFormatError, DivergedError
from .optimizers import RunSchedule, run

DEFAULT_LAMBDA_GRID = [0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0]


def load_config(path):
    try:
        with open(path) as f:
            cfg = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", field="config") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", field="config") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping", field="config")
    return cfg


def save_config(cfg, path):
    """Serialize a config mapping; load_config(save_config(cfg)) == cfg."""
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)


def _require(cfg, field, section=None):
    src = cfg if section is None else cfg.get(section, {})
    if field not in src:
        name = field if section is None else f"{section}.{field}"
        raise ConfigError(f"missing config field {name}", field=name)
    return src[field]


def build_dataset(cfg):
    ds_cfg = cfg.get("dataset")
    if not isinstance(ds_cfg, dict):
        raise ConfigError("missing dataset section", field="dataset")
    source = ds_cfg.get("source", "synthetic")
    if source == "synthetic":
        kind = _require(cfg, "kind", "dataset")
        if kind == "blobs":
            dataset = data_io.synth_blobs(
                ds_cfg.get("n", 500), ds_cfg.get("d", 10), ds_cfg.get("k", 3),
                ds_cfg.get("spread", 1.0), ds_cfg.get("seed", 0))
        else:
            out = data_io.synth(kind, ds_cfg.get("n", 500), ds_cfg.get("d", 10),
                                ds_cfg.get("noise", 1.0), ds_cfg.get("seed", 0))
            dataset = out[0] if isinstance(out, tuple) else out
    elif source == "idx":
        dataset = data_io.load_idx(_require(cfg, "images", "dataset"),
                                   _require(cfg, "labels", "dataset"),
                                   ds_cfg.get("normalization", "scale_0_1"))
    elif source == "csv":
        dataset = data_io.load_csv(_require(cfg, "path", "dataset"),
                                   ds_cfg.get("label_column", -1),
                                   ds_cfg.get("has_header", False),
                                   ds_cfg.get("integer_labels", False))
    else:
        raise ConfigError(f"unknown dataset source {source!r}", field="dataset.source")
    sub = ds_cfg.get("subset")
    if sub:
        dataset = data_io.subset(dataset, sub["count"], sub.get("seed", 0))
    return dataset


def build_objective(cfg, dataset):
    obj_cfg = cfg.get("objective", {})
    kind = obj_cfg.get("kind")
    if kind is None:
        raise ConfigError("missing objective.kind", field="objective.kind")
    kwargs = {}
    if kind == "mlp_relu":
        kwargs["hidden"] = obj_cfg.get("hidden", 100)
    try:
        return objectives.make_objective(kind, dataset, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e), field="objective.kind") from e


def build_schedule(cfg, dataset, mode=None, lam=0.0):
    s = cfg.get("schedule", {})
    batch = s.get("batch_size", 1)
    epoch_length = -(-dataset.n_samples // batch)
    if "total_steps" in s:
        total = s["total_steps"]
    elif "epochs" in s:
        total = s["epochs"] * epoch_length
    else:
        raise ConfigError("schedule needs epochs or total_steps", field="schedule")
    return RunSchedule(
        total_steps=total,
        gamma=_require(cfg, "gamma", "schedule"),
        batch_size=batch,
        mode=mode or s.get("mode", "kd"),
        lam=lam,
        tau=s.get("tau"),
        sampling=s.get("sampling", "with_replacement"),
        track_variance=s.get("track_variance", False),
    )


def _initial_point(obj, cfg, seed):
    init_cfg = cfg.get("init", "zeros")
    if init_cfg == "zeros":
        if obj.kind == "mlp_relu":
            return obj.init_params(core.make_rng(seed))
        return np.zeros(obj.param_dim)
    if init_cfg == "random":
        return core.make_rng(seed).standard_normal(obj.param_dim) * 0.1
    raise ConfigError(f"unknown init {init_cfg!r}", field="init")


def resolve_teacher(cfg, obj, dataset):
    """Teacher parameter vector (or "self") per the config's teacher section."""
    t_cfg = cfg.get("teacher", {"type": "sgd"})
    ttype = t_cfg.get("type", "sgd")
    if ttype == "self":
        return "self"
    if ttype == "file":
        return np.load(_require(cfg, "path", "teacher"))
    if ttype == "oracle":
        if obj.kind != "linear_regression":
            raise ConfigError("oracle teacher needs a linear_regression objective",
                              field="teacher.type")
        constants = oracle.solve_linear_regression(obj)
        quality = t_cfg.get("quality", 0.0)
        rng = core.make_rng(t_cfg.get("seed", 0))
        return oracle.make_teacher(obj, constants, quality, rng.standard_normal(obj.param_dim))
    if ttype in ("sgd", "reference"):
        sched = build_schedule(cfg, dataset, mode="sgd")
        if ttype == "reference":
            # near-converged reference: longer run at a reduced step size
            sched = RunSchedule(
                total_steps=sched.total_steps * t_cfg.get("epoch_multiplier", 5),
                gamma=sched.gamma * t_cfg.get("gamma_multiplier", 1.0),
                batch_size=sched.batch_size, mode="sgd", sampling=sched.sampling)
        seed = t_cfg.get("seed", 10_000)
        result = run(obj, sched, _initial_point(obj, cfg, seed), seed=seed)
        return result.x_final
    raise ConfigError(f"unknown teacher type {ttype!r}", field="teacher.type")


def _run_one(obj, cfg, dataset, lam, seed, teacher, eval_fn=None):
    mode = cfg.get("schedule", {}).get("mode", "kd")
    if lam == 0.0 and mode == "kd":
        mode = "sgd"
    sched = build_schedule(cfg, dataset, mode=mode, lam=lam)
    init = _initial_point(obj, cfg, seed)
    diverged = False
    try:
        result = run(obj, sched, init, teacher=None if mode == "sgd" else teacher,
                     seed=seed, eval_fn=eval_fn)
        trace = result.trace
    except DivergedError as e:
        trace = e.trace
        diverged = True
    records = [telemetry.EpochStats(
        epoch=r.epoch, run_id=f"lam{lam:g}_seed{seed}", seed=seed, mode=mode,
        lam=lam, gamma=sched.gamma, loss_running=r.running_avg_loss,
        loss_full=r.full_loss, grad_variance=r.grad_variance,
        test_acc=r.test_accuracy) for r in trace]
    return records, diverged


def cmd_train(cfg, out_dir, seeds=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    obj = build_objective(cfg, dataset)
    lambda_grid = cfg.get("lambda_grid", DEFAULT_LAMBDA_GRID)
    if not lambda_grid:
        raise ConfigError("lambda_grid must be nonempty", field="lambda_grid")
    for lam in lambda_grid:
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"lambda {lam} outside [0, 1]", field="lambda_grid")
    seeds = seeds or cfg.get("seeds", [0])
    if not seeds:
        raise ConfigError("seeds must be nonempty", field="seeds")
    teacher = resolve_teacher(cfg, obj, dataset)

    summary_rows = []
    for lam in lambda_grid:
        mins, last10 = [], []
        any_diverged = False
        for seed in seeds:
            records, diverged = _run_one(obj, cfg, dataset, lam, seed, teacher)
            any_diverged |= diverged
            telemetry.write_trace(records, out_dir / f"trace_lam{lam:g}_seed{seed}.csv")
            if records:
                losses = [r.loss_running for r in records]
                mins.append(min(losses))
                last10.extend(losses[-10:])
        summary_rows.append({
            "lambda": lam,
            "min_train_loss": float(np.mean(mins)) if mins else float("nan"),
            "last10_mean": float(np.mean(last10)) if last10 else float("nan"),
            "last10_std": float(np.std(last10)) if last10 else float("nan"),
            "n_seeds": len(seeds),
            "diverged": int(any_diverged),
        })

    with open(out_dir / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(summary_rows[0].keys()))
        writer.writeheader()
        for row in summary_rows:
            writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                             for k, v in row.items()})
    return summary_rows


def cmd_sweep_lambda(cfg, out_dir, seeds=None):
    rows = cmd_train(cfg, out_dir, seeds)
    valid = [r for r in rows if np.isfinite(r["min_train_loss"])]
    # ties broken toward smaller lambda: stable min over sorted-by-lambda rows
    best = min(sorted(valid, key=lambda r: r["lambda"]), key=lambda r: r["min_train_loss"])
    with open(out_dir / "best_lambda.txt", "w") as f:
        f.write(f"best_lambda={best['lambda']:g}\n")
        f.write(f"min_train_loss={best['min_train_loss']:.17g}\n")
    print(f"best lambda: {best['lambda']:g} (min train loss {best['min_train_loss']:.6g})")
    return best


def cmd_diagnose(cfg, out_dir, seeds=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    obj = build_objective(cfg, dataset)
    gamma = _require(cfg, "gamma", "schedule")
    c = cfg.get("diagnose", {}).get("c", 1.0)
    teacher = resolve_teacher(cfg, obj, dataset)
    if isinstance(teacher, str):
        raise ConfigError("diagnose needs a concrete teacher, not self-refresh",
                          field="teacher.type")

    if obj.kind == "linear_regression":
        constants = oracle.solve_linear_regression(obj)
        x_star, proxy = constants.x_star, False
    else:
        # long-run reference model as a proxy for the optimum
        sched = build_schedule(cfg, dataset, mode="sgd")
        ref_sched = RunSchedule(total_steps=sched.total_steps * 5, gamma=sched.gamma,
                                batch_size=sched.batch_size, mode="sgd")
        x_star = run(obj, ref_sched, _initial_point(obj, cfg, 0), seed=99).x_final
        proxy = True

    fields = ["quantity", "value", "reason", "proxy"]
    rows = []

    def emit(name, compute):
        try:
            rows.append({"quantity": name, "value": f"{compute():.17g}",
                         "reason": "", "proxy": int(proxy)})
        except Exception as e:  # undefined ratios reported, not fatal
            rows.append({"quantity": name, "value": "", "reason": str(e),
                         "proxy": int(proxy)})

    cfg_kd = distillation.KDConfig(lam=0.0, gamma=gamma, teacher=teacher, c=c)
    stats = distillation.teacher_stats(obj, x_star, teacher)
    emit("beta", lambda: distillation.beta_snr(obj, teacher))
    emit("rho", lambda: distillation.rho_correlation(obj, x_star, teacher))

    def lam_star():
        lam, clamped = distillation.optimal_lambda(cfg_kd, stats)
        rows.append({"quantity": "lambda_star_clamped", "value": str(int(clamped)),
                     "reason": "", "proxy": int(proxy)})
        return lam

    emit("lambda_star", lam_star)
    emit("reduction_ratio", lambda: distillation.reduction_ratio(cfg_kd, stats))

    with open(out_dir / "diagnostics.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    if obj.kind == "mlp_relu":
        _diagnose_mlp_gaps(cfg, obj, teacher, out_dir, seeds)
    return rows


def _diagnose_mlp_gaps(cfg, obj, teacher, out_dir, seeds=None):
    """Per-epoch (cosine, l2, snr) between exact and approximate distillation
    gradients along a training run, for each lambda in the grid."""
    lambda_grid = [lam for lam in cfg.get("lambda_grid", [0.1, 0.5, 0.9]) if lam > 0.0]
    seed = (seeds or cfg.get("seeds", [0]))[0]
    sched = build_schedule(cfg, dataset=obj.dataset, mode="kd", lam=0.0)
    records = []
    for lam in lambda_grid:
        sched_lam = RunSchedule(total_steps=sched.total_steps, gamma=sched.gamma,
                                batch_size=sched.batch_size, mode="kd", lam=lam)
        epoch_length = -(-obj.n_samples // sched.batch_size)
        x = _initial_point(obj, cfg, seed)
        rng = core.make_rng(seed)
        for epoch in range(sched_lam.total_steps // epoch_length):
            partial = RunSchedule(total_steps=epoch_length, gamma=sched.gamma,
                                  batch_size=sched.batch_size, mode="kd", lam=lam)
            x = run(obj, partial, x, teacher=teacher, seed=seed * 1000 + epoch).x_final
            batch = core.sample_minibatch(obj.n_samples, sched.batch_size, rng)
            cosine, l2, snr = telemetry.approx_gap_stats(obj, x, teacher, lam, batch)
            records.append(telemetry.EpochStats(
                epoch=epoch, run_id=f"gap_lam{lam:g}", seed=seed, mode="kd",
                lam=lam, gamma=sched.gamma, loss_running=float("nan"),
                loss_full=obj.full_loss(x), cosine=cosine, l2=l2, snr=snr))
    telemetry.write_trace(records, out_dir / "mlp_gap_stats.csv")


def cmd_verify():
    results, ok = verification.run_suite()
    for r in results:
        print(r.line())
    return 0 if ok else 1


def cmd_ingest(args):
    if args.images and args.labels:
        dataset = data_io.load_idx(args.images, args.labels,
                                   normalization=args.normalization)
    elif args.csv:
        dataset = data_io.load_csv(args.csv, integer_labels=args.integer_labels)
    else:
        raise ConfigError("ingest needs --images/--labels or --csv", field="ingest")
    data_io.write_csv(dataset, args.out)
    print(f"wrote {dataset.n_samples} x {dataset.input_dim} dataset to {args.out}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="kdopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "sweep-lambda", "diagnose"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seeds", default=None, help="comma-separated seed list")

    sub.add_parser("verify")

    p = sub.add_parser("ingest")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--csv")
    p.add_argument("--out", required=True)
    p.add_argument("--normalization", default="scale_0_1")
    p.add_argument("--integer-labels", action="store_true")

    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            return cmd_verify()
        if args.command == "ingest":
            cmd_ingest(args)
            return 0
        cfg = load_config(args.config)
        out_dir = Path(args.out or cfg.get("output_dir", "out"))
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
        if args.command == "train":
            cmd_train(cfg, out_dir, seeds)
        elif args.command == "sweep-lambda":
            cmd_sweep_lambda(cfg, out_dir, seeds)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, out_dir, seeds)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, DataFormatError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
