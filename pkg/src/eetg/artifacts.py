"""On-disk artifacts: archives, policies, result tables, run manifests.

Everything is a diffable text format (JSON / CSV / SVG). Writes go through
write-temp-then-rename so partially written files never appear under the
final name. None of the payload files embeds timestamps; rerunning a config
with the same seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ars import ObsNormalizer
from .bench import EvalReport, PolicyRecord, TrainedArtifacts
from .config import AlgorithmVariant
from .policy import PolicyDef
from .qd import Archive
from .tg import TGParams

RESULT_COLUMNS = ("variant", "env_type", "variation_index", "replication",
                  "seed", "return", "termination")
SUMMARY_COLUMNS = ("variant", "env_type", "median", "q1", "q3")


def atomic_write_text(path: Path | str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# --- archives ---

def save_archive(path, archive: Archive, seed: int | None = None,
                 config_hash: str | None = None) -> None:
    write_json(path, archive.to_dict(seed=seed, config_hash=config_hash))


def load_archive(path) -> tuple[Archive, dict]:
    data = read_json(path)
    if "cells" not in data:
        raise ValueError(f"{path}: not an archive snapshot (no 'cells' key)")
    return Archive.from_dict(data), data


# --- policies ---

def _layout_descriptor(policy_def: PolicyDef) -> list:
    return [["robot_obs", 33], ["phase_sin_cos", 8], ["total_freqs_scaled", 4],
            ["conditioning", policy_def.cond_dim]]


def save_policy(path, policy_def: PolicyDef, record: PolicyRecord, variant: str) -> None:
    write_json(path, {
        "variant": variant,
        "policy_def": policy_def.to_dict(),
        "input_layout": _layout_descriptor(policy_def),
        "trained_cell": record.trained_cell,
        "evals_used": record.evals_used,
        "updates": record.updates,
        "params": [float(x) for x in record.params],
        "normalizer": record.normalizer.to_dict(),
    })


def load_policy(path) -> tuple[PolicyDef, PolicyRecord, dict]:
    data = read_json(path)
    pdef = PolicyDef.from_dict(data["policy_def"])
    rec = PolicyRecord(params=np.array(data["params"], dtype=float),
                       normalizer=ObsNormalizer.from_dict(data["normalizer"]),
                       trained_cell=data["trained_cell"],
                       evals_used=data["evals_used"], updates=data["updates"])
    if rec.params.size != pdef.param_count:
        raise ValueError(f"{path}: parameter vector does not match layout")
    return pdef, rec, data


def save_tgs(path, fixed_tg: TGParams | None, cell_tgs: np.ndarray | None) -> None:
    write_json(path, {
        "fixed_tg": None if fixed_tg is None else [float(x) for x in fixed_tg.as_array()],
        "cell_tgs": None if cell_tgs is None else [[float(x) for x in row] for row in cell_tgs],
    })


def load_tgs(path) -> tuple[TGParams | None, np.ndarray | None]:
    data = read_json(path)
    fixed = data.get("fixed_tg")
    cells = data.get("cell_tgs")
    return (None if fixed is None else TGParams.from_array(np.array(fixed)),
            None if cells is None else np.array(cells, dtype=float))


# --- CSV tables ---

def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_results_csv(path, report: EvalReport) -> None:
    atomic_write_text(path, _csv_text(RESULT_COLUMNS, report.result_rows()))


def write_summary_csv(path, reports) -> None:
    rows = []
    for rep in reports:
        rows.extend(rep.summary_rows())
    atomic_write_text(path, _csv_text(SUMMARY_COLUMNS, rows))


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing result columns {missing}")
        rows = []
        for raw in reader:
            row = dict(raw)
            row["variation_index"] = int(raw["variation_index"])
            row["replication"] = int(raw["replication"])
            row["return"] = float(raw["return"])
            rows.append(row)
        return rows


def write_trace_csv(path, trace: np.ndarray, columns) -> None:
    rows = ({c: repr(float(v)) for c, v in zip(columns, row)} for row in trace)
    atomic_write_text(path, _csv_text(columns, rows))


# --- manifest ---

@dataclass
class Manifest:
    variant: str
    master_seed: int
    scale_factor: float
    config_hash: str
    code_version: str = __version__
    created_at: str = ""
    completed_at: str = ""
    complete: bool = False
    budget: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "variant", "master_seed", "scale_factor", "config_hash", "code_version",
            "created_at", "completed_at", "complete", "budget", "files")}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(**d)


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def save_manifest(out_dir, manifest: Manifest) -> None:
    write_json(Path(out_dir) / "manifest.json", manifest.to_dict())


def load_manifest(out_dir) -> Manifest:
    return Manifest.from_dict(read_json(Path(out_dir) / "manifest.json"))


# --- whole-run save / load ---

def save_run_artifacts(out_dir, artifacts: TrainedArtifacts) -> list[str]:
    """Write archive, TGs and policy files; returns relative paths written."""
    out_dir = Path(out_dir)
    files = []
    if artifacts.archive is not None:
        save_archive(out_dir / "archive_final.json", artifacts.archive,
                     seed=artifacts.master_seed)
        files.append("archive_final.json")
    if artifacts.fixed_tg is not None or artifacts.cell_tgs is not None:
        save_tgs(out_dir / "tgs.json", artifacts.fixed_tg, artifacts.cell_tgs)
        files.append("tgs.json")
    for key in sorted(artifacts.policies):
        name = f"policy_{key}.json"
        save_policy(out_dir / name, artifacts.policy_def, artifacts.policies[key],
                    artifacts.variant.value)
        files.append(name)
    return files


def load_run_artifacts(out_dir) -> TrainedArtifacts:
    out_dir = Path(out_dir)
    manifest = load_manifest(out_dir)
    variant = AlgorithmVariant(manifest.variant)

    archive = None
    if (out_dir / "archive_final.json").exists():
        archive, _ = load_archive(out_dir / "archive_final.json")
    fixed_tg = cell_tgs = None
    if (out_dir / "tgs.json").exists():
        fixed_tg, cell_tgs = load_tgs(out_dir / "tgs.json")

    policies = {}
    policy_def = None
    for path in sorted(out_dir.glob("policy_*.json")):
        pdef, rec, _ = load_policy(path)
        policy_def = pdef
        policies[path.stem.removeprefix("policy_")] = rec
    if policy_def is None:
        raise ValueError(f"{out_dir}: no policy files found")

    return TrainedArtifacts(
        variant=variant, master_seed=manifest.master_seed,
        scale_factor=manifest.scale_factor, policy_def=policy_def,
        archive=archive, fixed_tg=fixed_tg, cell_tgs=cell_tgs, policies=policies,
        tg_evals_used=manifest.budget.get("tg_evals_used", 0),
        policy_evals_used=manifest.budget.get("policy_evals_used", 0))
