"""Residual policy: input assembly, variants, forward pass and ARS training.

The policy maps [robot obs (33), phase sin/cos (8), scaled leg frequencies
(4), conditioning block] to 12 foot-position residuals (leg frames, clamped)
and 4 frequency residuals (Hz, clamped). Conditioning depends on variant:

    plain          [s, t, l] range-normalized                          (3)
    tg_conditioned [s, t, l] + full 5-dim TG vector, range-normalized  (8)
    env_encoded    [s, t, l] + env type one-hot + variation/19         (8)
                   (or + 80-dim cell one-hot with env_encoding="onehot80")

Robot obs are normalized by the running ARS normalizer; the remaining blocks
use fixed scalings, so per-rollout-constant inputs never degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rng_mod
from .ars import ArsConfig, ArsOptimizer, ObsNormalizer
from .sim import KernelPolicy, RewardConfig, SimConfig, parallel_map, rollout
from .terrain import N_CELLS, N_TYPES, N_VARIATIONS, EnvCell
from .tg import PARAM_LOW, PARAM_RANGE, TGParams

OBS_DIM = 33
PHASE_DIM = 8
FREQ_DIM = 4
BASE_DIM = OBS_DIM + PHASE_DIM + FREQ_DIM  # 45
OUTPUT_DIM = 16

VARIANTS = ("plain", "tg_conditioned", "env_encoded")


@dataclass(frozen=True)
class PolicyDef:
    """Architecture + conditioning scheme; fixes all dimensions at build time."""

    variant: str = "tg_conditioned"
    arch: str = "linear"
    hidden: int = 64
    env_encoding: str = "compact"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown policy variant: {self.variant}")
        if self.arch not in ("linear", "mlp"):
            raise ValueError(f"unknown policy arch: {self.arch}")
        if self.env_encoding not in ("compact", "onehot80"):
            raise ValueError(f"unknown env encoding: {self.env_encoding}")

    @property
    def cond_dim(self) -> int:
        dim = 3
        if self.variant == "tg_conditioned":
            dim += 5
        elif self.variant == "env_encoded":
            dim += N_TYPES + 1 if self.env_encoding == "compact" else N_CELLS
        return dim

    @property
    def input_dim(self) -> int:
        return BASE_DIM + self.cond_dim

    @property
    def param_count(self) -> int:
        if self.arch == "linear":
            return OUTPUT_DIM * self.input_dim + OUTPUT_DIM
        return (self.hidden * self.input_dim + self.hidden
                + OUTPUT_DIM * self.hidden + OUTPUT_DIM)

    def init_params(self) -> np.ndarray:
        """Zero init: the untrained policy reproduces the open-loop TG."""
        return np.zeros(self.param_count)

    def unpack(self, params: np.ndarray):
        """Flat vector -> (w1, b1, w2, b2); w2/b2 are 1-element dummies for linear."""
        params = np.asarray(params, dtype=float)
        if params.size != self.param_count:
            raise ValueError(f"expected {self.param_count} params, got {params.size}")
        d = self.input_dim
        if self.arch == "linear":
            w1 = params[: OUTPUT_DIM * d].reshape(OUTPUT_DIM, d).copy()
            b1 = params[OUTPUT_DIM * d:].copy()
            return w1, b1, np.zeros((1, 1)), np.zeros(1)
        h = self.hidden
        i = 0
        w1 = params[i: i + h * d].reshape(h, d).copy(); i += h * d
        b1 = params[i: i + h].copy(); i += h
        w2 = params[i: i + OUTPUT_DIM * h].reshape(OUTPUT_DIM, h).copy(); i += OUTPUT_DIM * h
        b2 = params[i:].copy()
        return w1, b1, w2, b2

    def conditioning(self, tg: TGParams, cell: EnvCell | None) -> np.ndarray:
        v = tg.as_array()
        norm = (v - PARAM_LOW) / PARAM_RANGE
        parts = [norm[:3]]
        if self.variant == "tg_conditioned":
            parts.append(norm)
        elif self.variant == "env_encoded":
            if cell is None:
                raise ValueError("env_encoded conditioning needs a cell")
            if self.env_encoding == "compact":
                onehot = np.zeros(N_TYPES)
                onehot[int(cell.env_type)] = 1.0
                parts.append(onehot)
                parts.append(np.array([cell.variation_index / (N_VARIATIONS - 1)]))
            else:
                onehot = np.zeros(N_CELLS)
                onehot[cell.flat_index] = 1.0
                parts.append(onehot)
        return np.concatenate(parts)

    def kernel_policy(self, params: np.ndarray, tg: TGParams, cell: EnvCell | None,
                      normalizer: ObsNormalizer | None = None) -> KernelPolicy:
        w1, b1, w2, b2 = self.unpack(params)
        mean = normalizer.mean if normalizer is not None else np.zeros(OBS_DIM)
        std = normalizer.std if normalizer is not None else np.ones(OBS_DIM)
        return KernelPolicy(mode=1 if self.arch == "linear" else 2,
                            w1=w1, b1=b1, w2=w2, b2=b2,
                            cond=self.conditioning(tg, cell),
                            obs_mean=mean, obs_std=std)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "arch": self.arch,
                "hidden": self.hidden, "env_encoding": self.env_encoding}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyDef":
        return cls(**d)


def assemble_input(obs, obs_mean, obs_std, phases, total_freqs, base_freq, cond) -> np.ndarray:
    """Reference input assembly; mirrors the kernel layout exactly."""
    obs = np.asarray(obs, dtype=float)
    x = [(obs - obs_mean) / obs_std]
    sincos = np.empty(PHASE_DIM)
    for i in range(4):
        sincos[2 * i] = math.sin(phases[i])
        sincos[2 * i + 1] = math.cos(phases[i])
    x.append(sincos)
    x.append(np.asarray(total_freqs, dtype=float) / (2.0 * base_freq))
    x.append(np.asarray(cond, dtype=float))
    return np.concatenate(x)


def forward(policy_def: PolicyDef, params: np.ndarray, x: np.ndarray,
            residual_clamp: float = 0.05, freq_clamp: float = 0.625):
    """Reference forward pass -> (foot_residuals (4,3) m, freq_residuals (4,) Hz).

    Raw network outputs are in clamp-normalized units: each channel is
    clipped to [-1, 1] and scaled by its physical clamp, so residuals are
    always within +-residual_clamp / +-freq_clamp.
    """
    w1, b1, w2, b2 = policy_def.unpack(params)
    if x.size != policy_def.input_dim:
        raise ValueError("input dimension mismatch")
    if policy_def.arch == "linear":
        out = w1 @ x + b1
    else:
        out = w2 @ np.tanh(w1 @ x + b1) + b2
    res = residual_clamp * np.clip(out[:12], -1.0, 1.0).reshape(4, 3)
    freq = freq_clamp * np.clip(out[12:], -1.0, 1.0)
    return res, freq


def compose_targets(tg_targets: np.ndarray, foot_residuals: np.ndarray,
                    leg_length: float = 0.35,
                    residual_clamp: float = 0.05) -> np.ndarray:
    """Sum TG targets (leg frames, (4,3)) with clamped residuals, then clamp
    each target to the leg workspace sphere."""
    res = np.clip(np.asarray(foot_residuals, dtype=float), -residual_clamp, residual_clamp)
    out = np.asarray(tg_targets, dtype=float) + res
    norms = np.linalg.norm(out, axis=1)
    over = norms > leg_length
    if np.any(over):
        out[over] *= (leg_length / norms[over])[:, None]
    return out


@dataclass(frozen=True)
class TrainResult:
    params: np.ndarray
    normalizer: ObsNormalizer
    evals_used: int
    updates: int


def train_policy(task_sampler, policy_def: PolicyDef, ars_cfg: ArsConfig,
                 budget: int, master_seed: int, seed_tag: tuple,
                 sim_cfg: SimConfig, reward_cfg: RewardConfig,
                 noise_std: float = 0.05, workers: int = 1,
                 init_params: np.ndarray | None = None,
                 init_normalizer: ObsNormalizer | None = None,
                 progress_cb=None) -> TrainResult:
    """ARS training loop over rollouts.

    ``task_sampler(rng) -> (TGParams, EnvCell)`` picks the training task;
    redraw cadence follows ars_cfg.env_resample. Each update consumes
    2 * n_directions rollouts; runs while the budget allows a full update.
    """
    dim = policy_def.param_count
    opt = ArsOptimizer(dim, ars_cfg, seed=rng_mod.derive_seed(master_seed, *seed_tag, 0),
                       obs_dim=OBS_DIM, init_params=init_params)
    if init_normalizer is not None:
        opt.normalizer = init_normalizer

    evals_per_update = 2 * ars_cfg.n_directions
    evals_used = 0
    update_idx = 0
    while evals_used + evals_per_update <= budget:
        task_rng = rng_mod.make_rng(master_seed, *seed_tag, 1, update_idx)
        if ars_cfg.env_resample == "per_update":
            shared = task_sampler(task_rng)
            tasks = [shared] * evals_per_update
            seeds = [rng_mod.derive_seed(master_seed, *seed_tag, 2, update_idx)] * evals_per_update
        elif ars_cfg.env_resample == "per_direction":
            tasks, seeds = [], []
            for k in range(ars_cfg.n_directions):
                t = task_sampler(task_rng)
                s = rng_mod.derive_seed(master_seed, *seed_tag, 2, update_idx, k)
                tasks += [t, t]
                seeds += [s, s]
        else:  # per_rollout
            tasks = [task_sampler(task_rng) for _ in range(evals_per_update)]
            seeds = [rng_mod.derive_seed(master_seed, *seed_tag, 2, update_idx, i)
                     for i in range(evals_per_update)]

        deltas, cands = opt.propose()
        mean = opt.normalizer.mean
        std = opt.normalizer.std

        def eval_one(job):
            params, (tg, cell), seed = job
            kp = policy_def.kernel_policy(params, tg, cell, None)
            kp = replace(kp, obs_mean=mean, obs_std=std)
            result, stats = rollout(tg, cell, policy=kp, noise_std=noise_std,
                                    seed=seed, sim_cfg=sim_cfg, reward_cfg=reward_cfg,
                                    collect_obs_stats=True)
            return result.episode_return, stats

        outs = parallel_map(eval_one, list(zip(cands, tasks, seeds)), workers)
        rewards = [o[0] for o in outs]
        stats = [o[1] for o in outs]
        opt.apply(deltas, rewards, stats)
        evals_used += evals_per_update
        update_idx += 1
        if progress_cb is not None:
            progress_cb(evals_used, budget)

    return TrainResult(params=opt.params, normalizer=opt.normalizer,
                       evals_used=evals_used, updates=update_idx)
