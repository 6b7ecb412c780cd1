"""Multi-task MAP-Elites over the environment grid.

The archive is tessellated by environment cell, not by behavior: each of the
80 (type, variation) cells stores the best trajectory-generator parameters
found for that environment. Search alternates uniform parent selection,
goal-switching target choice (same type w.p. 0.7), iso-line directional
variation and strict-improvement insertion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .terrain import N_CELLS, N_TYPES, N_VARIATIONS, EnvCell, EnvType
from .tg import GAIT_NAMES, N_PARAMS, PARAM_HIGH, PARAM_LOW, PARAM_RANGE, TGParams, clamp_params


class InsertOutcome(enum.Enum):
    INSERTED = "inserted"
    REPLACED = "replaced"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Elite:
    tg: TGParams
    fitness: float
    added_at_eval: int


@dataclass(frozen=True)
class QDConfig:
    total_evals: int = 3840
    init_fraction: float = 0.10
    p_same_type: float = 0.7
    iso_sigma: float = 0.01
    line_sigma: float = 0.2
    batch_size: int = 64
    master_seed: int = 0

    def to_dict(self) -> dict:
        return {"total_evals": self.total_evals, "init_fraction": self.init_fraction,
                "p_same_type": self.p_same_type, "iso_sigma": self.iso_sigma,
                "line_sigma": self.line_sigma, "batch_size": self.batch_size,
                "master_seed": self.master_seed}


class Archive:
    """4 x 20 elite grid with strict-improvement elitism."""

    def __init__(self):
        self.params = np.zeros((N_TYPES, N_VARIATIONS, N_PARAMS))
        self.fitness = np.full((N_TYPES, N_VARIATIONS), np.nan)
        self.added_at = np.full((N_TYPES, N_VARIATIONS), -1, dtype=np.int64)
        self.filled = np.zeros((N_TYPES, N_VARIATIONS), dtype=bool)
        self.evaluations = 0

    @property
    def coverage(self) -> int:
        return int(self.filled.sum())

    def filled_cells(self) -> list[tuple[int, int]]:
        ts, vs = np.nonzero(self.filled)
        return list(zip(ts.tolist(), vs.tolist()))

    def get(self, env_type, variation_index: int) -> Elite | None:
        t = int(EnvType(env_type))
        if not self.filled[t, variation_index]:
            return None
        return Elite(tg=TGParams.from_array(self.params[t, variation_index]),
                     fitness=float(self.fitness[t, variation_index]),
                     added_at_eval=int(self.added_at[t, variation_index]))

    def try_insert(self, cell: EnvCell, tg_vec: np.ndarray, fitness: float,
                   eval_index: int) -> InsertOutcome:
        """Insert into an empty cell, replace on strictly better fitness,
        reject otherwise (ties keep the incumbent; non-finite always rejected)."""
        if not np.isfinite(fitness):
            return InsertOutcome.REJECTED
        t, v = int(cell.env_type), cell.variation_index
        if not self.filled[t, v]:
            outcome = InsertOutcome.INSERTED
        elif fitness > self.fitness[t, v]:
            outcome = InsertOutcome.REPLACED
        else:
            return InsertOutcome.REJECTED
        self.params[t, v] = clamp_params(tg_vec)
        self.fitness[t, v] = float(fitness)
        self.added_at[t, v] = int(eval_index)
        self.filled[t, v] = True
        return outcome

    def copy(self) -> "Archive":
        a = Archive()
        a.params = self.params.copy()
        a.fitness = self.fitness.copy()
        a.added_at = self.added_at.copy()
        a.filled = self.filled.copy()
        a.evaluations = self.evaluations
        return a

    # --- summaries (used by inspect) ---
    def per_type_stats(self) -> list[dict]:
        stats = []
        for t in range(N_TYPES):
            fits = self.fitness[t][self.filled[t]]
            stats.append({
                "env_type": EnvType(t).name,
                "coverage": int(self.filled[t].sum()),
                "best": float(fits.max()) if fits.size else None,
                "median": float(np.median(fits)) if fits.size else None,
            })
        return stats

    def gait_histogram(self) -> dict[str, int]:
        hist = {name: 0 for name in GAIT_NAMES}
        for t, v in self.filled_cells():
            hist[TGParams.from_array(self.params[t, v]).gait_name] += 1
        return hist

    def to_dict(self, seed: int | None = None, config_hash: str | None = None) -> dict:
        cells = []
        for t, v in self.filled_cells():
            cells.append({
                "env_type": EnvType(t).name,
                "variation_index": int(v),
                "tg": [float(x) for x in self.params[t, v]],
                "fitness": float(self.fitness[t, v]),
                "added_at_eval": int(self.added_at[t, v]),
            })
        return {"cells": cells, "evals": self.evaluations,
                "seed": seed, "config_hash": config_hash}

    @classmethod
    def from_dict(cls, d: dict) -> "Archive":
        a = cls()
        for rec in d["cells"]:
            t = int(EnvType[rec["env_type"]])
            v = int(rec["variation_index"])
            a.params[t, v] = clamp_params(np.array(rec["tg"], dtype=float))
            a.fitness[t, v] = float(rec["fitness"])
            a.added_at[t, v] = int(rec["added_at_eval"])
            a.filled[t, v] = True
        a.evaluations = int(d.get("evals", 0))
        return a


def select(archive: Archive, rng: np.random.Generator,
           p_same_type: float = 0.7) -> tuple[Elite, EnvCell]:
    """Uniform parent over filled cells; goal-switched target cell."""
    cells = archive.filled_cells()
    if not cells:
        raise ValueError("cannot select from an empty archive")
    t, v = cells[rng.integers(len(cells))]
    parent = archive.get(t, v)
    if rng.random() < p_same_type:
        target_type = t
    else:
        others = [u for u in range(N_TYPES) if u != t]
        target_type = others[rng.integers(len(others))]
    target_var = int(rng.integers(N_VARIATIONS))
    return parent, EnvCell.make(EnvType(target_type), target_var)


def select_direction_parent(archive: Archive, rng: np.random.Generator) -> np.ndarray:
    """Second (direction) parent for the iso-line operator, uniform over filled cells."""
    cells = archive.filled_cells()
    t, v = cells[rng.integers(len(cells))]
    return archive.params[t, v].copy()


def iso_line_variation(x1: np.ndarray, x2: np.ndarray, rng: np.random.Generator,
                       iso_sigma: float = 0.01, line_sigma: float = 0.2) -> np.ndarray:
    """x1 + iso_sigma * N(0,I) (x) range_widths + line_sigma * N(0,1) * (x2 - x1), clamped.

    The isotropic term is scaled per dimension by the parameter range so the
    meter-scale and gait-latent coordinates mutate comparably.
    """
    eps = rng.standard_normal(N_PARAMS)
    nu = rng.standard_normal()
    raw = np.asarray(x1, dtype=float) + iso_sigma * eps * PARAM_RANGE \
        + line_sigma * nu * (np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float))
    return clamp_params(raw)


def uniform_tg_vector(rng: np.random.Generator) -> np.ndarray:
    return clamp_params(rng.uniform(PARAM_LOW, PARAM_HIGH))


def run_phase1(cfg: QDConfig, evaluator, *, archive: Archive | None = None,
               map_fn=None, seed_fn=None, eval_offset: int = 0,
               snapshot_cb=None, snapshot_every: int | None = None) -> Archive:
    """MAP-Elites loop: init 10% of cells, then select/mutate/evaluate/insert
    in deterministic batches until the evaluation budget is spent.

    ``evaluator(TGParams, EnvCell, seed) -> fitness``. Batches may be
    evaluated concurrently via ``map_fn``; insertion order is batch order,
    so results are independent of worker scheduling.
    """
    archive = archive if archive is not None else Archive()
    map_fn = map_fn or (lambda f, items: [f(it) for it in items])
    if seed_fn is None:
        seed_fn = lambda i: rng_mod.derive_seed(cfg.master_seed, rng_mod.PHASE1, 0, i)
    rng = rng_mod.make_rng(cfg.master_seed, rng_mod.PHASE1, 1, eval_offset)

    if snapshot_every is None and cfg.total_evals >= 10:
        snapshot_every = cfg.total_evals // 10

    evals = 0
    last_snap = -1

    def maybe_snapshot(force=False):
        nonlocal last_snap
        if snapshot_cb is None or evals == last_snap:
            return
        if force or (snapshot_every and evals - max(last_snap, 0) >= snapshot_every):
            snapshot_cb(archive, eval_offset + evals)
            last_snap = evals

    def run_batch(jobs):
        nonlocal evals
        results = map_fn(lambda j: evaluator(TGParams.from_array(j[0]), j[1], j[2]), jobs)
        for (vec, cell, _seed), fit in zip(jobs, results):
            idx = eval_offset + evals
            archive.try_insert(cell, vec, fit, idx)
            evals += 1
            archive.evaluations = eval_offset + evals
        maybe_snapshot()

    # random init of 10% of the cells (skipped when resuming a filled archive)
    if archive.coverage == 0:
        n_init = min(int(round(cfg.init_fraction * N_CELLS)), cfg.total_evals)
        chosen = rng.choice(N_CELLS, size=n_init, replace=False)
        jobs = []
        for i, flat in enumerate(chosen):
            cell = EnvCell.from_flat_index(int(flat))
            jobs.append((uniform_tg_vector(rng), cell, seed_fn(eval_offset + i)))
        run_batch(jobs)

    while evals < cfg.total_evals:
        n = min(cfg.batch_size, cfg.total_evals - evals)
        jobs = []
        for i in range(n):
            parent, target = select(archive, rng, cfg.p_same_type)
            x2 = select_direction_parent(archive, rng)
            child = iso_line_variation(parent.tg.as_array(), x2, rng,
                                       cfg.iso_sigma, cfg.line_sigma)
            jobs.append((child, target, seed_fn(eval_offset + evals + i)))
        run_batch(jobs)

    maybe_snapshot(force=True)
    return archive
