"""Command-line entry point: ``peginsert <subcommand> [options]``.

Subcommands
-----------
demo      write a synthetic demonstration CSV
collect   run the data-collection trials and write the dataset CSV
train     fit the regression and sign models, write the model bundle
insert    run an insertion campaign with and without learned corrections
sweep     steady contact force of the accommodation controller over a grid
plotdata  turn a trace, dataset or report into tidy CSVs and PNG figures

Exit status is 0 on success, 1 for usage or configuration errors and 2
when a run fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import io, pipeline, plotting
from .gac import spring_wall_sweep
from .gp import GPFitError

logger = logging.getLogger("peginsert")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULT_GAMMAS = (0.3, 0.5, 0.65, 0.9)
DEFAULT_ACCOMMODATIONS = (5e-4, 1e-3, 2e-3)
DEFAULT_SPEEDS = (0.005, 0.01)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str):
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with dotted section keys")
    common.add_argument("--seed", type=int, help="root seed (default: config value, else fresh entropy)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", type=Path, help="output directory (default: config 'out')")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="peginsert", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("demo", parents=[common], help="write a synthetic demonstration")
    p.add_argument("--goal", type=float, nargs=3, metavar=("X", "Y", "Z"), help="demonstration end point, mm")
    p.add_argument("--duration", type=float, help="seconds (default from config)")

    p = sub.add_parser("collect", parents=[common], help="collect the wrench dataset")
    p.add_argument("-n", "--n", type=int, help="number of trials (default collect.n_trials)")
    p.add_argument("--demo", type=Path, help="demonstration CSV to learn the approach from")
    p.add_argument("--force-d", type=float, nargs=2, metavar=("DX", "DY"), help="use this misalignment for every trial")
    p.add_argument("--trace", type=int, metavar="TRIAL", help="also write the trace of this trial")

    p = sub.add_parser("train", parents=[common], help="fit the models on a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--demo", type=Path, help="demonstration CSV stored with the models")
    p.add_argument("--splits", type=int, help="train/test splits for the RMSE table (default gp.n_splits)")

    p = sub.add_parser("insert", parents=[common], help="run an insertion campaign")
    p.add_argument("models", type=Path)
    p.add_argument("-n", "--n", type=int, help="episodes (default campaign.n_episodes)")
    p.add_argument("--error-mode", choices=("uniform", "bias"), help="goal-estimate error model")

    p = sub.add_parser("sweep", parents=[common], help="accommodation controller sweep")
    p.add_argument("--gammas", type=_floats, default=list(DEFAULT_GAMMAS))
    p.add_argument("--accommodations", type=_floats, default=list(DEFAULT_ACCOMMODATIONS))
    p.add_argument("--speeds", type=_floats, default=list(DEFAULT_SPEEDS), help="mm per control step")
    p.add_argument("--steps", type=int, default=8400)

    p = sub.add_parser("plotdata", parents=[common], help="tidy CSVs and figures from a result file")
    p.add_argument("input", type=Path, help="trace CSV, dataset CSV, training report or campaign report")
    return parser


# ---------------------------------------------------------------- helpers ---


def _load_config(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.seed is None:
        cfg.seed = int(np.random.SeedSequence().entropy % 2**32)
        print(f"seed: {cfg.seed}")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out if args.out is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(cfg, demo_path=None, params=None):
    demo = io.read_demo(demo_path) if demo_path else None
    return pipeline.make_setup(cfg, demo=demo, params=params)


# --------------------------------------------------------------- commands ---


def cmd_demo(args, cfg):
    if args.goal is not None:
        cfg.demo.goal = tuple(args.goal)
    if args.duration is not None:
        if not args.duration > 0:
            raise UsageError("--duration must be positive")
        cfg.demo.duration = args.duration
    demo = pipeline.make_demo(cfg)
    path = _out_dir(args, cfg) / "demo.csv"
    io.write_demo(path, demo)
    print(f"demo: {len(demo)} samples over {demo.duration:.4f} s -> {path}")


def cmd_collect(args, cfg):
    n = cfg.collect.n_trials if args.n is None else args.n
    if n < 1:
        raise UsageError("-n must be at least 1")
    setup = _setup(cfg, args.demo)
    if args.force_d is not None:
        try:
            pipeline.check_misalignment(args.force_d, cfg.contact)
        except ValueError as exc:
            raise UsageError(str(exc))
    data = pipeline.collect_dataset(setup, n, cfg.seed, forced_d=args.force_d,
                                    chunk=cfg.collect.chunk, jobs=args.jobs)
    out = _out_dir(args, cfg)
    io.write_dataset(out / "dataset.csv", data)
    print(f"collect: {len(data)} rows, {int(data.converged.sum())} converged -> {out / 'dataset.csv'}")
    if args.trace is not None:
        if not 0 <= args.trace < n:
            raise UsageError("--trace must name a trial of this run")
        _, noise_ss = pipeline.episode_streams(cfg.seed, args.trace)
        row = np.flatnonzero(data.trial_id == args.trace)[0]
        res = pipeline.run_attempt(setup, setup.hole - data.d[row], [np.random.default_rng(noise_ss)], record=True)
        path = out / f"trace_{args.trace}.csv"
        io.write_trace(path, res.traces[0])
        print(f"trace: {len(res.traces[0])} steps -> {path}")


def cmd_train(args, cfg):
    data = io.read_dataset(args.dataset)
    setup = _setup(cfg, args.demo)
    try:
        bundle = pipeline.train_models(data, cfg, cfg.seed, jobs=args.jobs, dmp=setup.dmp)
    except ValueError as exc:
        raise GPFitError(str(exc)) from exc
    splits = cfg.gp.n_splits if args.splits is None else args.splits
    if splits < 1:
        raise UsageError("--splits must be at least 1")
    buckets = pipeline.rmse_by_bucket(data, bundle.gpr, cfg.contact, n_splits=splits,
                                      train_fraction=cfg.gp.train_fraction, seed=cfg.seed)
    bundle.metrics["rmse_by_bucket"] = buckets
    out = _out_dir(args, cfg)
    io.write_models(out / "models.json", bundle)
    io.write_json(out / "train_report.json", bundle.metrics)
    acc, rmse = bundle.metrics["sign_accuracy"], bundle.metrics["rmse_mm"]
    print(f"train: sign accuracy x={acc[0]:.4f} y={acc[1]:.4f}, RMSE x={rmse[0]:.4f} y={rmse[1]:.4f} mm")
    print(f"train: models -> {out / 'models.json'}, report -> {out / 'train_report.json'}")


def cmd_insert(args, cfg):
    bundle = io.read_models(args.models)
    if args.error_mode is not None:
        cfg.campaign.error_mode = args.error_mode
    n = cfg.campaign.n_episodes if args.n is None else args.n
    if n < 1:
        raise UsageError("-n must be at least 1")
    setup = _setup(cfg, params=bundle.dmp)
    result = pipeline.evaluate_campaign(setup, bundle, cfg, n, cfg.seed, jobs=args.jobs)
    summary = result.summary(cfg.policy.max_attempts)
    summary["seed"] = cfg.seed
    summary["error_mode"] = cfg.campaign.error_mode
    report, episodes = io.write_campaign(_out_dir(args, cfg), result, summary)
    for name in ("lfd_sl", "lfd"):
        s = summary[name]
        print(f"insert: {name} {s['successes']}/{s['n_episodes']} successes ({s['success_rate']:.2%})")
    print(f"insert: report -> {report}, episodes -> {episodes}")


def cmd_sweep(args, cfg):
    if not (args.gammas and args.accommodations and args.speeds):
        raise UsageError("sweep grid is empty")
    if args.steps < 2:
        raise UsageError("--steps must be at least 2")
    try:
        detector = cfg.detector.build()
        rows = spring_wall_sweep(cfg.gac, args.gammas, args.accommodations, args.speeds,
                                 n_steps=args.steps, detector=detector)
    except ValueError as exc:
        raise UsageError(str(exc))
    path = _out_dir(args, cfg) / "sweep.csv"
    io.write_sweep(path, rows)
    bad = [r for r in rows if r["converged"] and abs(r["rel_error"]) >= 0.02]
    print(f"sweep: {len(rows)} rows, {sum(r['converged'] for r in rows)} converged, "
          f"{len(bad)} outside 2%, {sum(r['oscillatory'] for r in rows)} oscillatory -> {path}")


def _plot_trace(path, out):
    trace = io.read_trace(path)
    csv_path = out / "wrench_vs_time.csv"
    rows = []
    for i in range(len(trace["k"])):
        for ch in ("fx", "fy", "fz", "mx", "my", "mz"):
            rows.append([trace["t_s"][i], ch, trace[ch][i]])
    io.write_rows(csv_path, ["t_s", "channel", "value"], rows)
    return [csv_path, plotting.plot_trace(trace, out / "wrench_vs_time.png")]


def _plot_dataset(path, out):
    data = io.read_dataset(path)
    used = data.subset(data.converged)
    csv_path = out / "wrench_vs_misalignment.csv"
    channels = ("fx", "fy", "fz", "mx", "my", "mz")
    rows = [[int(t), d[0], d[1], float(np.hypot(*d)), ch, w[c]]
            for t, d, w in zip(used.trial_id, used.d, used.wrench) for c, ch in enumerate(channels)]
    io.write_rows(csv_path, ["trial_id", "dx_mm", "dy_mm", "abs_d_mm", "channel", "value"], rows)
    return [csv_path, plotting.plot_wrench_vs_misalignment(used.d, used.wrench, out / "wrench_vs_misalignment.png")]


def _plot_report(path, out):
    report = io.read_json(path)
    if "rmse_by_bucket" in report:
        rows = report["rmse_by_bucket"]
        csv_path = out / "rmse_by_bucket.csv"
        io.write_rows(csv_path, ["bucket", "lo_mm", "hi_mm", "n_splits", "mean_rmse_mm", "std_rmse_mm"],
                      ([r["bucket"], r["lo_mm"], r["hi_mm"], r["n_splits"],
                        "" if r["mean"] is None else r["mean"], "" if r["std"] is None else r["std"]] for r in rows))
        return [csv_path, plotting.plot_rmse_buckets(rows, out / "rmse_by_bucket.png")]
    if "lfd_sl" in report and "lfd" in report:
        summary = {k: report[k] for k in ("lfd_sl", "lfd")}
        csv_path = out / "campaign_outcomes.csv"
        io.write_rows(csv_path, ["controller", "outcome", "count"],
                      ([name, o, c] for name in summary for o, c in summary[name]["outcomes"].items()))
        return [csv_path, plotting.plot_campaign(summary, out / "campaign_outcomes.png")]
    raise io.FormatError(f"{path}: neither a training report nor a campaign report")


def cmd_plotdata(args, cfg):
    out = _out_dir(args, cfg)
    path = args.input
    if path.suffix == ".json":
        written = _plot_report(path, out)
    else:
        try:
            with path.open() as fh:
                header = fh.readline().strip().split(",")
        except OSError as exc:
            raise io.FormatError(f"cannot read {path}: {exc}") from exc
        if header == io.TRACE_HEADER:
            written = _plot_trace(path, out)
        elif header == io.DATASET_HEADER:
            written = _plot_dataset(path, out)
        elif header == io.SWEEP_HEADER:
            rows = [dict(zip(io.SWEEP_HEADER, r)) for _, r in io.read_rows(path, io.SWEEP_HEADER)]
            for r in rows:
                for k in ("gamma", "predicted_f_N", "measured_f_N"):
                    r[k] = float(r[k])
                r["steps_to_converge"] = int(r["steps_to_converge"])
            written = [plotting.plot_sweep(rows, out / "sweep.png")]
        else:
            raise io.FormatError(f"{path}: row 1: unrecognised header")
    for w in written:
        print(f"plotdata: {w}")


COMMANDS = {
    "demo": cmd_demo,
    "collect": cmd_collect,
    "train": cmd_train,
    "insert": cmd_insert,
    "sweep": cmd_sweep,
    "plotdata": cmd_plotdata,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except (UsageError, config_mod.ConfigError) as exc:
        print(f"peginsert {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.FormatError, GPFitError, OSError, ValueError, RuntimeError) as exc:
        print(f"peginsert {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
