#!/usr/bin/env python3
"""Run the desk-scale benchmark: every variant at scale 0.01 over several seeds.

Writes one artifact directory per (variant, seed) under the output root plus
a summary.json aggregating per-type medians. Completed runs are skipped, so
an interrupted sweep resumes where it stopped. The acceptance suite reads
the output root (default results/acceptance, or $EETG_ACCEPT_DIR).
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from eetg import artifacts as art
from eetg.cli import run_from_config
from eetg.config import config_from_dict

VARIANTS = ["EETG", "PMTG_Enc", "PMTG_Ind", "CMAES_PMTG_Enc", "CMAES_PMTG_Ind",
            "EETG_Itr", "EETG_ItrPolicy"]


def default_root() -> Path:
    env = os.environ.get("EETG_ACCEPT_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent.parent / "results" / "acceptance"


def run_one(root: Path, variant: str, seed: int, scale: float, workers: int) -> Path:
    out_dir = root / f"{variant}_seed{seed}"
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        try:
            if art.load_manifest(out_dir).complete:
                print(f"[skip] {out_dir.name} already complete")
                return out_dir
        except Exception:
            pass
    cfg = config_from_dict({
        "variant": variant,
        "master_seed": seed,
        "scale_factor": scale,
        "ablation_loops": 2,
        "out_dir": str(out_dir),
    })
    t0 = time.time()
    print(f"[run ] {out_dir.name} ...", flush=True)
    run_from_config(cfg, out_dir, workers,
                    log=lambda msg: print(f"       {msg}", flush=True))
    print(f"[done] {out_dir.name} in {time.time() - t0:.0f}s", flush=True)
    return out_dir


def summarize(root: Path, variants, seeds) -> dict:
    from eetg.bench import EvalReport  # noqa: F401  (doc pointer)
    import numpy as np

    summary = {"scale_factor": None, "runs": {}}
    for variant in variants:
        for seed in seeds:
            out_dir = root / f"{variant}_seed{seed}"
            if not (out_dir / "manifest.json").exists():
                continue
            manifest = art.load_manifest(out_dir)
            if not manifest.complete:
                continue
            rows = art.read_results_csv(out_dir / "results.csv")
            per_cell = {}
            for row in rows:
                key = (row["env_type"], row["variation_index"])
                per_cell.setdefault(key, []).append(row["return"])
            cell_means = {k: float(np.mean(v)) for k, v in per_cell.items()}
            per_type_median = {}
            for env_type in ("SLOPE", "STAIRS", "UNEVEN", "BEAM"):
                vals = [m for (t, _), m in cell_means.items() if t == env_type]
                per_type_median[env_type] = float(np.median(vals))
            summary["runs"][f"{variant}_seed{seed}"] = {
                "variant": variant,
                "seed": seed,
                "per_type_median": per_type_median,
                "aggregate_median": float(np.median(list(cell_means.values()))),
                "budget": manifest.budget,
            }
            summary["scale_factor"] = manifest.scale_factor
    return summary


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path, default=default_root())
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--scale", type=float, default=0.01)
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--variants", nargs="+", default=VARIANTS)
    args = parser.parse_args()

    args.root.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    for seed in args.seeds:
        for variant in args.variants:
            run_one(args.root, variant, seed, args.scale, args.workers)
    summary = summarize(args.root, args.variants, args.seeds)
    art.write_json(args.root / "summary.json", summary)
    print(f"benchmark finished in {(time.time() - t0) / 60:.1f} min; "
          f"summary at {args.root / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
