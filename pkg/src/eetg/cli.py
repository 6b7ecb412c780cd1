"""Command line entry point.

Subcommands: run (train + evaluate a variant from a JSON config), eval
(re-evaluate stored artifacts), plot (box plots / archive heatmap), inspect
(archive summary), trace (single-rollout CSV dump).

Exit codes: 0 ok, 1 runtime failure, 2 config/usage error. Relative output
directories are resolved under $EETG_OUT_ROOT when it is set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import artifacts as art
from . import bench, plots
from . import rng as rng_mod
from .config import ConfigError, RunConfig, load_config
from .sim import TRACE_COLUMNS, rollout
from .terrain import EnvCell, EnvType
from .tg import TGParams

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _resolve_out_dir(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get("EETG_OUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _effective_eval_seed(cfg: RunConfig) -> int:
    if cfg.eval.seed is not None:
        return cfg.eval.seed
    return rng_mod.derive_seed(cfg.master_seed, rng_mod.EVAL, 0)


def _workers(cfg_workers: int, override: int | None) -> int:
    w = override if override is not None else cfg_workers
    return w if w > 0 else (os.cpu_count() or 1)


def run_from_config(cfg: RunConfig, out_dir: Path, workers: int,
                    log=print) -> art.Manifest:
    """Train, evaluate and persist one variant run; returns the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = art.Manifest(variant=cfg.variant, master_seed=cfg.master_seed,
                            scale_factor=cfg.scale_factor,
                            config_hash=cfg.config_hash(), created_at=art.now_iso())
    art.save_manifest(out_dir, manifest)
    art.write_json(out_dir / "config.json", cfg.to_dict())
    files = ["config.json"]

    snap_dir = out_dir / "archive_snapshots"

    def snapshot_cb(archive, evals):
        name = f"archive_snapshots/archive_{evals:09d}.json"
        art.save_archive(out_dir / name, archive, seed=cfg.master_seed,
                         config_hash=cfg.config_hash())
        files.append(name)

    try:
        trained = bench.run_variant(cfg, workers=workers, snapshot_cb=snapshot_cb,
                                    log=lambda msg: log(f"[{cfg.variant}] {msg}"))
        files.extend(art.save_run_artifacts(out_dir, trained))

        report = bench.evaluate(trained, reps=cfg.eval.reps,
                                noise_std=cfg.eval.noise_std,
                                eval_seed=_effective_eval_seed(cfg),
                                sim_cfg=cfg.sim, reward_cfg=cfg.reward,
                                workers=workers)
        art.write_results_csv(out_dir / "results.csv", report)
        art.write_summary_csv(out_dir / "summary.csv", [report])
        files.extend(["results.csv", "summary.csv"])

        manifest.budget = {
            "tg_evals_used": trained.tg_evals_used,
            "policy_evals_used": trained.policy_evals_used,
            "tg_evals_planned": bench.BudgetPlan.for_variant(
                bench.AlgorithmVariant(cfg.variant), cfg.scale_factor).tg_evals,
            "policy_evals_planned": bench.BudgetPlan.for_variant(
                bench.AlgorithmVariant(cfg.variant), cfg.scale_factor).policy_evals,
        }
        manifest.files = sorted(files)
        manifest.complete = True
        manifest.completed_at = art.now_iso()
        art.save_manifest(out_dir, manifest)
        del snap_dir
        return manifest
    except Exception:
        manifest.files = sorted(files)
        manifest.complete = False
        manifest.completed_at = art.now_iso()
        art.save_manifest(out_dir, manifest)
        raise


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = _resolve_out_dir(args.out or cfg.out_dir)
    workers = _workers(cfg.workers, args.workers)
    try:
        manifest = run_from_config(cfg, out_dir, workers)
    except Exception as exc:  # manifest already marked incomplete
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run complete: {out_dir} ({len(manifest.files)} files)")
    return EXIT_OK


def _cmd_eval(args) -> int:
    run_dir = Path(args.artifact_dir)
    try:
        manifest = art.load_manifest(run_dir)
    except FileNotFoundError:
        print(f"no manifest.json under {run_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    if not manifest.complete:
        print(f"refusing to evaluate {run_dir}: manifest marks the run incomplete "
              f"(rerun `eetg run` to finish it)", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        trained = art.load_run_artifacts(run_dir)
        seed = args.seed if args.seed is not None else rng_mod.derive_seed(
            manifest.master_seed, rng_mod.EVAL, 0)
        report = bench.evaluate(trained, reps=args.reps, noise_std=args.noise,
                                eval_seed=seed, workers=_workers(0, args.workers))
    except Exception as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out) if args.out else run_dir
    art.write_results_csv(out_dir / "eval_results.csv", report)
    art.write_summary_csv(out_dir / "eval_summary.csv", [report])
    print(f"wrote {out_dir / 'eval_results.csv'} and {out_dir / 'eval_summary.csv'}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    wrote = []
    if args.archive:
        try:
            archive, _ = art.load_archive(args.archive)
        except (ValueError, KeyError) as exc:
            print(f"bad archive snapshot: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        out = args.out or "archive_heatmap.svg"
        plots.archive_heatmap(archive, out)
        wrote.append(out)
    if args.results:
        rows = []
        try:
            for path in args.results:
                rows.extend(art.read_results_csv(path))
        except (ValueError, KeyError) as exc:
            print(f"bad results csv: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        out = args.out or "results_boxplot.svg"
        if args.archive:
            out = str(Path(out).with_name("results_" + Path(out).name))
        for warning in plots.results_box_plot(rows, out):
            print(f"warning: {warning}", file=sys.stderr)
        wrote.append(out)
    if not wrote:
        print("nothing to plot: pass results CSVs and/or --archive", file=sys.stderr)
        return EXIT_CONFIG
    print("wrote " + ", ".join(str(w) for w in wrote))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    try:
        archive, meta = art.load_archive(args.archive)
    except (ValueError, KeyError) as exc:
        print(f"corrupt archive: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"coverage: {archive.coverage}/80  (evals recorded: {meta.get('evals')})")
    for stats in archive.per_type_stats():
        best = "-" if stats["best"] is None else f"{stats['best']:.2f}"
        med = "-" if stats["median"] is None else f"{stats['median']:.2f}"
        print(f"  {stats['env_type']:<7} coverage {stats['coverage']:>2}/20  "
              f"best {best:>9}  median {med:>9}")
    hist = archive.gait_histogram()
    print("gaits: " + "  ".join(f"{k}={v}" for k, v in hist.items()))
    return EXIT_OK


def _cmd_trace(args) -> int:
    try:
        cell = EnvCell.make(EnvType[args.env_type.upper()], args.variation)
    except KeyError:
        print(f"unknown env type: {args.env_type}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.tg:
            tg = TGParams.from_array(np.array([float(v) for v in args.tg.split(",")]))
        elif args.archive:
            archive, _ = art.load_archive(args.archive)
            elite = archive.get(cell.env_type, cell.variation_index)
            if elite is None:
                print(f"archive has no elite for {cell.env_type.name}/"
                      f"{cell.variation_index}", file=sys.stderr)
                return EXIT_RUNTIME
            tg = elite.tg
        else:
            print("pass --tg s,t,l,y,gait or --archive snapshot.json", file=sys.stderr)
            return EXIT_CONFIG
        policy = None
        if args.policy:
            pdef, rec, _ = art.load_policy(args.policy)
            policy = pdef.kernel_policy(rec.params, tg, cell, rec.normalizer)
        result, trace = rollout(tg, cell, policy=policy, noise_std=args.noise,
                                seed=args.seed, trace=True)
    except Exception as exc:
        print(f"trace failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    art.write_trace_csv(args.out, trace, TRACE_COLUMNS)
    print(f"wrote {args.out}: return {result.episode_return:.3f}, "
          f"steps {result.steps}, termination {result.termination.name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eetg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train + evaluate a variant from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides config out_dir)")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_eval = sub.add_parser("eval", help="re-run the evaluation protocol on stored artifacts")
    p_eval.add_argument("artifact_dir")
    p_eval.add_argument("--reps", type=int, default=20)
    p_eval.add_argument("--noise", type=float, default=0.05)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--workers", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(fn=_cmd_eval)

    p_plot = sub.add_parser("plot", help="emit SVG box plots / archive heatmap")
    p_plot.add_argument("results", nargs="*", help="results CSV files")
    p_plot.add_argument("--archive", help="archive snapshot JSON for a heatmap")
    p_plot.add_argument("-o", "--out", default=None)
    p_plot.set_defaults(fn=_cmd_plot)

    p_inspect = sub.add_parser("inspect", help="summarize an archive snapshot")
    p_inspect.add_argument("archive")
    p_inspect.set_defaults(fn=_cmd_inspect)

    p_trace = sub.add_parser("trace", help="dump a single rollout trace CSV")
    p_trace.add_argument("--env-type", required=True)
    p_trace.add_argument("--variation", type=int, required=True)
    p_trace.add_argument("--tg", help="comma-separated swing,turn,lift,y_offset,gait")
    p_trace.add_argument("--archive", help="take the TG from this archive snapshot")
    p_trace.add_argument("--policy", help="policy JSON to modulate the TG")
    p_trace.add_argument("--noise", type=float, default=0.0)
    p_trace.add_argument("--seed", type=int, default=0)
    p_trace.add_argument("-o", "--out", default="trace.csv")
    p_trace.set_defaults(fn=_cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
