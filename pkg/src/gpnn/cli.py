"""Command-line front end: fit, predict, evaluate, simulate, whiten.

Experiment configs are declarative JSON; the effective config of every run is
echoed verbatim into the output directory so reruns are reproducible.  All
timings use the monotonic clock and are reported to 3 significant figures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import simulate as sim_mod
from .kernels import KernelSpec, Theta
from .train import TrainConfig


def _sig3(x: float) -> str:
    return f"{x:.3g}"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GPNN_THREADS", "1")))
    except ValueError:
        return 1


def _load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _echo_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_used.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    tr = cfg.get("train", {})
    kwargs = dict(
        subset_size=tr.get("subset_size", 3000),
        block_size=tr.get("block_size", 300),
        learning_rate=tr.get("learning_rate", 0.1),
        iterations=tr.get("iterations", 100),
        seed=seed,
    )
    if "init_theta" in tr:
        it = tr["init_theta"]
        kwargs["init_theta"] = Theta(it["lengthscale"], it["noise_var"], it["signal_var"])
    return TrainConfig(**kwargs)


def _fit_config(cfg: dict, seed: int) -> model_mod.FitConfig:
    return model_mod.FitConfig(
        train=_train_config(cfg, seed),
        spec=KernelSpec.from_string(cfg.get("kernel", "rbf")),
        m=cfg.get("m", 400),
        c=cfg.get("c", 1000),
        calibrate=cfg.get("calibrate", True),
        seed=seed,
        leaf_size=cfg.get("leaf_size", 40),
    )


def _load_dataset(cfg: dict) -> data_mod.Dataset:
    recipe_name = cfg.get("recipe")
    if recipe_name:
        recipes = data_mod.load_recipes(cfg.get("recipe_file"))
        if recipe_name not in recipes:
            raise ValueError(f"unknown recipe {recipe_name!r}; have {sorted(recipes)}")
        return data_mod.load_with_recipe(cfg["dataset"], recipes[recipe_name])
    return data_mod.load_csv(
        cfg["dataset"],
        cfg.get("target", -1),
        cfg.get("drop", ()),
        has_header=cfg.get("header", True),
    )


def _split_for_seed(ds: data_mod.Dataset, cfg: dict, seed: int):
    fraction = cfg.get("split_fraction", 7.0 / 9.0)
    return data_mod.split(ds, fraction, seed)


def _fit_one(cfg: dict, seed: int, out_dir: Path):
    ds = _load_dataset(cfg)
    train_ds, test_ds = _split_for_seed(ds, cfg, seed)
    timings: dict = {}
    t0 = time.monotonic()
    fitted = model_mod.fit(train_ds.X, train_ds.y, _fit_config(cfg, seed), timings=timings)
    timings["total_seconds"] = time.monotonic() - t0
    return fitted, train_ds, test_ds, timings


def _write_timing(timings: dict, path: Path) -> None:
    lines = [f"{key}: {_sig3(timings[key])}" for key in sorted(timings)]
    path.write_text("\n".join(lines) + "\n")


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.output_dir or cfg.get("output_dir", "."))
    _echo_config(cfg, out_dir)
    seeds = cfg.get("seeds", [0])
    seed = args.seed if args.seed is not None else seeds[0]
    if args.no_calibrate:
        cfg = cfg | {"calibrate": False}

    fitted, _, _, timings = _fit_one(cfg, seed, out_dir)
    model_path = out_dir / f"model_seed{seed}.gpnn"
    model_mod.save(fitted, model_path)
    _write_timing(timings, out_dir / f"timing_seed{seed}.txt")
    print(f"wrote {model_path}")
    print(f"estimation {_sig3(timings['estimate_seconds'])}s, index {_sig3(timings['index_seconds'])}s, "
          f"calibration {_sig3(timings['calibrate_seconds'])}s")
    return 0


def cmd_predict(args) -> int:
    fitted = model_mod.load(args.model)
    if args.target is not None:
        X = data_mod.load_csv(args.input, args.target, (), has_header=args.header).X
    else:
        X = np.loadtxt(args.input, delimiter=",", ndmin=2, skiprows=1 if args.header else 0)
    preds = model_mod.predict_batch(fitted, X, threads=args.threads)
    out = Path(args.output)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "mean", "variance"])
        for i, p in enumerate(preds):
            writer.writerow([i, repr(p.mean), repr(p.variance)])
    print(f"wrote {out} ({len(preds)} rows)")
    return 0


def _evaluate_model(fitted, test_ds: data_mod.Dataset, threads: int) -> metrics_mod.MetricsReport:
    # metrics are reported on the whitened-y scale
    preds = model_mod.predict_batch(fitted, test_ds.X, threads=threads, normalized=True)
    _, yw = data_mod.apply_whitening(fitted.whitening, test_ds.X, test_ds.y)
    return metrics_mod.evaluate(preds, yw)


def cmd_evaluate(args) -> int:
    threads = args.threads
    if args.model:
        fitted = model_mod.load(args.model)
        ds = data_mod.load_csv(args.test, args.target, (), has_header=args.header)
        if ds.d != fitted.d:
            raise ValueError(f"model expects {fitted.d} features, test data has {ds.d}")
        report = _evaluate_model(fitted, ds, threads)
        print(report.text_block(), end="")
        if args.output_dir:
            out = Path(args.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "metrics.txt").write_text(report.text_block())
        return 0

    cfg = _load_config(args.config)
    out_dir = Path(args.output_dir or cfg.get("output_dir", "."))
    _echo_config(cfg, out_dir)
    seeds = cfg.get("seeds", [0])
    reports = []
    for seed in seeds:
        fitted, _, test_ds, timings = _fit_one(cfg, seed, out_dir)
        report = _evaluate_model(fitted, test_ds, threads)
        reports.append(report)
        (out_dir / f"metrics_seed{seed}.txt").write_text(report.text_block())
        _write_timing(timings, out_dir / f"timing_seed{seed}.txt")

    rows = ["seed," + metrics_mod.MetricsReport.CSV_HEADER]
    rows += [f"{seed},{r.csv_row()}" for seed, r in zip(seeds, reports)]
    for name in ("mse", "rmse", "nll", "cal"):
        values = np.array([getattr(r, name) for r in reports])
        rows.append(f"{name}_mean,{float(np.mean(values))!r}")
        sd = repr(float(np.std(values, ddof=1))) if len(values) > 1 else ""
        rows.append(f"{name}_sd,{sd}")
    (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n")
    for seed, r in zip(seeds, reports):
        print(f"seed {seed}: rmse {r.rmse:.4f} nll {r.nll:.4f} cal {r.cal:.4f}")
    print(f"wrote {out_dir / 'metrics.csv'}")
    return 0


def _parse_assumed(cfg: dict) -> tuple:
    assumed = []
    for entry in cfg["assumed"]:
        spec = KernelSpec.from_string(entry.get("kernel", cfg.get("kernel", "rbf")))
        theta = Theta(entry["lengthscale"], entry["noise_var"], entry["signal_var"])
        assumed.append((spec, theta))
    return tuple(assumed)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.output_dir or cfg.get("output_dir", "."))
    _echo_config(cfg, out_dir)

    gen_theta = Theta(**cfg["theta"])
    gen_spec = KernelSpec.from_string(cfg.get("kernel", "rbf"))
    assumed = _parse_assumed(cfg)
    n_grid = cfg.get("n_grid", [cfg.get("n", 1000)])

    all_rows: list[dict] = []
    for n in n_grid:
        sim_cfg = sim_mod.SimConfig(
            n=n,
            n_star=cfg.get("n_star", 2000),
            m=cfg.get("m", 100),
            d=cfg.get("d", 2),
            gen_spec=gen_spec,
            gen_theta=gen_theta,
            assumed=assumed,
            noise_dist=cfg.get("noise", "gaussian"),
            seed=cfg.get("seed", 0),
        )
        all_rows += sim_mod.sweep_rows(sim_mod.run_marginal_sim(sim_cfg))
        if args.oracle:
            if n > sim_mod.FULL_JOINT_MAX_N:
                print(f"skipping full-joint oracle at n={n} (> {sim_mod.FULL_JOINT_MAX_N})", file=sys.stderr)
            else:
                all_rows += sim_mod.sweep_rows(sim_mod.run_full_joint_sim(sim_cfg))

    sweep_path = out_dir / "sweep.csv"
    fieldnames = list(all_rows[0].keys())
    with sweep_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(all_rows)
    print(f"wrote {sweep_path} ({len(all_rows)} rows)")

    if args.plot_data:
        for metric in ("mse", "nll", "cal"):
            lines = ["# n lengthscale_hat noise_var_hat value stderr limit"]
            for row in all_rows:
                if row["metric"] != metric or row["scheme"] != "marginal":
                    continue
                lines.append(
                    f"{row['n']} {row['lengthscale_hat']} {row['noise_var_hat']} "
                    f"{row['value']} {row['stderr']} {row['limit']}"
                )
            (out_dir / f"plot_{metric}.dat").write_text("\n".join(lines) + "\n")
        print(f"wrote plot data files under {out_dir}")
    return 0


def cmd_whiten(args) -> int:
    ds = data_mod.load_csv(args.input, args.target, args.drop or (), has_header=args.header)
    transform = data_mod.fit_whitening(ds)
    Xw, yw = data_mod.apply_whitening(transform, ds.X, ds.y)
    out = Path(args.output)
    header = ",".join(ds.columns + ["target"])
    np.savetxt(out, np.column_stack([Xw, yw]), delimiter=",", header=header, comments="")
    print(f"wrote {out} ({ds.n} rows, {ds.d} whitened features)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from a config file")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--output-dir", default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--no-calibrate", action="store_true")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="batch predictions from a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--input", required=True, help="CSV of query points")
    p_pred.add_argument("--output", required=True)
    p_pred.add_argument("--target", default=None, help="target column to strip, if present")
    p_pred.add_argument("--header", action="store_true")
    p_pred.add_argument("--threads", type=int, default=_default_threads())
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="metrics for a model or a multi-seed config")
    p_eval.add_argument("--model", default=None)
    p_eval.add_argument("--test", default=None, help="test CSV (with --model)")
    p_eval.add_argument("--target", default=-1)
    p_eval.add_argument("--header", action="store_true")
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--output-dir", default=None)
    p_eval.add_argument("--threads", type=int, default=_default_threads())
    p_eval.set_defaults(func=cmd_evaluate)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo limit sweeps")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--output-dir", default=None)
    p_sim.add_argument("--oracle", action="store_true", help="also run the full-joint oracle (n <= 500)")
    p_sim.add_argument("--plot-data", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_wh = sub.add_parser("whiten", help="whiten a CSV with training statistics")
    p_wh.add_argument("--input", required=True)
    p_wh.add_argument("--output", required=True)
    p_wh.add_argument("--target", default=-1)
    p_wh.add_argument("--drop", nargs="*", default=None)
    p_wh.add_argument("--header", action="store_true")
    p_wh.set_defaults(func=cmd_whiten)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.model and not args.config:
        parser.error("evaluate needs either --model/--test or --config")
    if args.command == "evaluate" and args.model and not args.test:
        parser.error("--model requires --test")
    try:
        return args.func(args)
    except Exception as exc:  # surface module errors with a nonzero exit code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
