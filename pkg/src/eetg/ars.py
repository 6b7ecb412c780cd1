"""Augmented random search (V2-t flavor).

Finite-difference search over flat policy parameters: evaluate antithetic
perturbations theta +/- nu*delta, keep the top-b directions by best-of-pair
reward, step along the reward-weighted sum scaled by the std of the used
rewards. A running observation normalizer is folded in from rollout
statistics after each update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import ObsStats


@dataclass(frozen=True)
class ArsConfig:
    n_directions: int = 32
    top_directions: int = 16
    step_size: float = 0.01
    noise: float = 0.05
    # how often the training task (env + TG) is redrawn: per_update follows
    # the protocol of sampling once per optimizer iteration
    env_resample: str = "per_update"

    def __post_init__(self):
        if self.top_directions > self.n_directions:
            raise ValueError("top_directions must be <= n_directions")
        if self.env_resample not in ("per_update", "per_direction", "per_rollout"):
            raise ValueError(f"unknown env_resample: {self.env_resample}")

    def to_dict(self) -> dict:
        return {"n_directions": self.n_directions, "top_directions": self.top_directions,
                "step_size": self.step_size, "noise": self.noise,
                "env_resample": self.env_resample}


class ObsNormalizer:
    """Running per-dimension mean/std from aggregated rollout statistics."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0.0
        self.total = np.zeros(dim)
        self.total_sq = np.zeros(dim)

    def update(self, stats: ObsStats) -> None:
        if stats is None or stats.count <= 0:
            return
        self.count += stats.count
        self.total += stats.total
        self.total_sq += stats.total_sq

    def update_vectors(self, vectors: np.ndarray) -> None:
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        self.update(ObsStats(float(v.shape[0]), v.sum(axis=0), (v ** 2).sum(axis=0)))

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.dim)
        return self.total / self.count

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.dim)
        var = np.maximum(self.total_sq / self.count - self.mean ** 2, 0.0)
        return np.sqrt(np.maximum(var, 1e-8))

    def to_dict(self) -> dict:
        return {"count": self.count, "total": self.total.tolist(),
                "total_sq": self.total_sq.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ObsNormalizer":
        n = cls(len(d["total"]))
        n.count = float(d["count"])
        n.total = np.array(d["total"])
        n.total_sq = np.array(d["total_sq"])
        return n


class ArsOptimizer:
    """Maintains theta and the normalizer; one `update` = 2N rollouts."""

    def __init__(self, dim: int, config: ArsConfig, seed: int = 0,
                 obs_dim: int = 33, init_params: np.ndarray | None = None):
        self.config = config
        self.params = np.zeros(dim) if init_params is None else np.array(init_params, dtype=float)
        if self.params.size != dim:
            raise ValueError("init_params dimension mismatch")
        self.normalizer = ObsNormalizer(obs_dim)
        self.rng = np.random.default_rng(seed)
        self.num_updates = 0
        self.num_evals = 0

    def propose(self) -> tuple[np.ndarray, np.ndarray]:
        """Directions (N, dim) and the 2N candidate parameter vectors.

        Candidate order is [(+d0), (-d0), (+d1), (-d1), ...].
        """
        cfg = self.config
        deltas = self.rng.standard_normal((cfg.n_directions, self.params.size))
        cands = np.empty((2 * cfg.n_directions, self.params.size))
        cands[0::2] = self.params + cfg.noise * deltas
        cands[1::2] = self.params - cfg.noise * deltas
        return deltas, cands

    def apply(self, deltas: np.ndarray, rewards, stats_list=None) -> bool:
        """Consume 2N rewards (propose order); returns False when the step was
        skipped because the used rewards carried no spread."""
        cfg = self.config
        r = np.asarray(rewards, dtype=float)
        if r.shape != (2 * cfg.n_directions,):
            raise ValueError("expected 2 * n_directions rewards")
        r = np.where(np.isfinite(r), r, -np.inf)
        r_plus = r[0::2]
        r_minus = r[1::2]

        if stats_list is not None:
            for st in stats_list:
                self.normalizer.update(st)

        self.num_updates += 1
        self.num_evals += 2 * cfg.n_directions

        scores = np.maximum(r_plus, r_minus)
        top = np.argsort(-scores, kind="stable")[: cfg.top_directions]
        used = np.concatenate([r_plus[top], r_minus[top]])
        if not np.all(np.isfinite(used)):
            return False
        sigma_r = float(np.std(used))
        if sigma_r == 0.0:
            return False
        step = (r_plus[top] - r_minus[top]) @ deltas[top]
        self.params = self.params + cfg.step_size / (cfg.top_directions * sigma_r) * step
        return True

    def update(self, oracle) -> bool:
        """Serial convenience wrapper: oracle(params) -> reward or (reward, ObsStats)."""
        deltas, cands = self.propose()
        rewards = []
        stats = []
        for c in cands:
            out = oracle(c)
            if isinstance(out, tuple):
                rewards.append(out[0])
                stats.append(out[1])
            else:
                rewards.append(out)
        return self.apply(deltas, rewards, stats or None)

    def to_dict(self) -> dict:
        return {"params": self.params.tolist(),
                "normalizer": self.normalizer.to_dict(),
                "num_updates": self.num_updates,
                "num_evals": self.num_evals,
                "config": self.config.to_dict(),
                "rng_state": self.rng.bit_generator.state}

    @classmethod
    def from_dict(cls, d: dict) -> "ArsOptimizer":
        cfg = ArsConfig(**d["config"])
        opt = cls(len(d["params"]), cfg, obs_dim=len(d["normalizer"]["total"]),
                  init_params=np.array(d["params"]))
        opt.normalizer = ObsNormalizer.from_dict(d["normalizer"])
        opt.num_updates = d["num_updates"]
        opt.num_evals = d["num_evals"]
        opt.rng.bit_generator.state = d["rng_state"]
        return opt
