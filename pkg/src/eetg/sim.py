"""Desk-scale quadruped rollout engine.

Rigid trunk, massless legs that track commanded foot targets, spring-damper
ground contacts with a friction cone, 60 Hz control over 240 Hz physics.
The heavy lifting happens in the numba kernel (_kernels.rollout_kernel);
this module owns configuration, state types, the reward oracle, rollout
orchestration and small kinematic diagnostics.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels as K
from . import terrain as terrain_mod
from .terrain import EnvCell, Terrain, build_terrain
from .tg import (BASE_FREQUENCY_HZ, HIP_LATERAL_M, LEG_SIDE_SIGN,
                 NOMINAL_HEIGHT_M, TGParams, decode_gait)


class Termination(enum.IntEnum):
    TIME_LIMIT = K.TERM_TIME_LIMIT
    FELL = K.TERM_FELL
    OFF_BEAM = K.TERM_OFF_BEAM
    DIVERGED = K.TERM_DIVERGED


REWARD_TERM_NAMES = ("r_lv", "r_av_t", "r_av_p", "r_s", "r_tp")


@dataclass(frozen=True)
class RewardConfig:
    """Weights and scales of the five per-step reward terms.

    Defaults are balanced for this engine: open-loop gaits top out near
    0.1-0.2 m/s, so the velocity target sits where both the open-loop search
    and the residual policy see a useful gradient, and the angular/force
    penalties are kept small enough that walking beats standing still.
    """

    w_lv: float = 1.0
    w_avt: float = 0.3
    w_avp: float = 0.02
    w_s: float = 0.01
    w_tp: float = 5e-6
    v_target: float = 0.35
    sigma_v: float = 0.25
    sigma_omega: float = 0.5

    def as_array(self) -> np.ndarray:
        return np.array([self.w_lv, self.w_avt, self.w_avp, self.w_s, self.w_tp,
                         self.v_target, self.sigma_v, self.sigma_omega])

    def to_dict(self) -> dict:
        return asdict(self)


def reward_terms(forward_velocity: float, yaw_rate: float, roll_rate: float,
                 pitch_rate: float, target_delta_sq: float, grf_sq: float,
                 cfg: RewardConfig) -> np.ndarray:
    """Scalar reward oracle: the five per-step terms, in order
    (velocity tracking, yaw tracking, roll/pitch penalty, smoothness, force proxy)."""
    dv = forward_velocity - cfg.v_target
    r_lv = cfg.w_lv * math.exp(-(dv * dv) / (cfg.sigma_v * cfg.sigma_v))
    r_avt = cfg.w_avt * math.exp(-(yaw_rate * yaw_rate) / (cfg.sigma_omega * cfg.sigma_omega))
    r_avp = -cfg.w_avp * (roll_rate * roll_rate + pitch_rate * pitch_rate)
    r_s = -cfg.w_s * target_delta_sq
    r_tp = -cfg.w_tp * grf_sq
    return np.array([r_lv, r_avt, r_avp, r_s, r_tp])


_DEFAULT_HIPS = ((0.18, 0.13, 0.0), (0.18, -0.13, 0.0),
                 (-0.18, 0.13, 0.0), (-0.18, -0.13, 0.0))


@dataclass(frozen=True)
class SimConfig:
    mass: float = 12.0
    inertia: tuple = (0.15, 0.3, 0.35)
    leg_length: float = 0.35
    hip_offsets: tuple = _DEFAULT_HIPS
    contact_stiffness: float = 4000.0
    contact_damping: float = 300.0  # near-critical for two-foot support
    tangential_damping: float = 200.0
    rotational_damping: float = 1.5  # trunk rate damping (unmodeled leg mass)
    friction: float = 0.7
    gravity: float = 9.81
    control_dt: float = 1.0 / 60.0
    physics_dt: float = 1.0 / 240.0
    max_episode_s: float = 10.0
    contact_tol: float = 0.0
    base_freq: float = BASE_FREQUENCY_HZ
    nominal_height: float = NOMINAL_HEIGHT_M
    hip_lateral: float = HIP_LATERAL_M
    fall_height: float = 0.12
    fall_tilt_deg: float = 60.0
    offbeam_drop: float = 0.5
    residual_clamp: float = 0.02
    freq_residual_clamp: float = 0.625
    initial_height: float | None = None  # None -> pre-settled stance height
    initial_x: float = 0.2         # just behind the spawn pad edge at 0.5
    vel_avg_tau: float = 0.4       # EMA window (s) of the tracked forward velocity

    def __post_init__(self):
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_dt must be an integer multiple of physics_dt")

    @property
    def n_substeps(self) -> int:
        return int(round(self.control_dt / self.physics_dt))

    @property
    def max_steps(self) -> int:
        return int(round(self.max_episode_s / self.control_dt))

    @property
    def settle_penetration(self) -> float:
        """Static spring deflection mg/(4k), shared by all four feet."""
        return self.mass * self.gravity / (4.0 * self.contact_stiffness)

    def default_initial_height(self) -> float:
        if self.initial_height is not None:
            return self.initial_height
        return -self.nominal_height - self.settle_penetration

    def phys_vector(self, offbeam_z: float, max_steps: int | None = None) -> np.ndarray:
        p = np.zeros(K.P_LEN)
        p[K.P_MASS] = self.mass
        p[K.P_IX], p[K.P_IY], p[K.P_IZ] = self.inertia
        p[K.P_LEG_LEN] = self.leg_length
        p[K.P_KN] = self.contact_stiffness
        p[K.P_CN] = self.contact_damping
        p[K.P_CT] = self.tangential_damping
        p[K.P_MU] = self.friction
        p[K.P_G] = self.gravity
        p[K.P_CONTROL_DT] = self.control_dt
        p[K.P_N_SUB] = self.n_substeps
        p[K.P_MAX_STEPS] = self.max_steps if max_steps is None else max_steps
        p[K.P_FALL_H] = self.fall_height
        p[K.P_FALL_COS] = math.cos(math.radians(self.fall_tilt_deg))
        p[K.P_OFFBEAM_Z] = offbeam_z
        p[K.P_CONTACT_TOL] = self.contact_tol
        p[K.P_F0] = self.base_freq
        p[K.P_NOM_H] = self.nominal_height
        p[K.P_HIP_LAT] = self.hip_lateral
        p[K.P_RES_CLAMP] = self.residual_clamp
        p[K.P_FREQ_CLAMP] = self.freq_residual_clamp
        p[K.P_VEL_AVG_BETA] = (1.0 if self.vel_avg_tau <= 0
                               else min(1.0, self.control_dt / self.vel_avg_tau))
        p[K.P_ROT_DAMPING] = self.rotational_damping
        return p

    def hips_array(self) -> np.ndarray:
        return np.array(self.hip_offsets, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inertia"] = list(self.inertia)
        d["hip_offsets"] = [list(h) for h in self.hip_offsets]
        return d


@dataclass(frozen=True)
class TrunkState:
    position: np.ndarray        # world, m
    orientation: np.ndarray     # unit quaternion (w, x, y, z)
    linear_velocity: np.ndarray  # world, m/s
    angular_velocity: np.ndarray  # body frame, rad/s


@dataclass(frozen=True)
class RolloutResult:
    episode_return: float
    reward_terms: np.ndarray  # (5,) per-episode sums, REWARD_TERM_NAMES order
    steps: int
    termination: Termination
    nonfinite_actions: int = 0
    max_command_norm: float = 0.0


@dataclass(frozen=True)
class ObsStats:
    """Sufficient statistics of the raw 33-dim observations seen in a rollout."""
    count: float
    total: np.ndarray
    total_sq: np.ndarray


@dataclass(frozen=True)
class KernelPolicy:
    """Policy in kernel form: weights, conditioning and normalization arrays."""
    mode: int  # 0 open loop, 1 linear, 2 mlp
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    cond: np.ndarray
    obs_mean: np.ndarray
    obs_std: np.ndarray


def open_loop_policy() -> KernelPolicy:
    dummy2 = np.zeros((1, 1))
    dummy1 = np.zeros(1)
    return KernelPolicy(0, dummy2, dummy1, dummy2, dummy1,
                        np.zeros(0), np.zeros(K.OBS_DIM), np.ones(K.OBS_DIM))


TRACE_COLUMNS = (
    ["time", "px", "py", "pz", "qw", "qx", "qy", "qz",
     "vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"foot{leg}_{ax}" for leg in range(4) for ax in "xyz"]
    + list(REWARD_TERM_NAMES)
    + [f"fn_{leg}" for leg in ("fl", "fr", "rl", "rr")]
    + ["ft_x"]
)


def rollout(tg: TGParams, cell: EnvCell, *, policy: KernelPolicy | None = None,
            noise_std: float = 0.0, seed: int = 0, tile_seed: int | None = None,
            sim_cfg: SimConfig | None = None, reward_cfg: RewardConfig | None = None,
            max_steps: int | None = None, trace: bool = False,
            collect_obs_stats: bool = False):
    """Run one episode of the TG (optionally policy-modulated) in a cell's terrain.

    Deterministic given (tg, policy, cell, noise_std, seed, tile_seed, configs).
    Returns RolloutResult; with ``trace`` or ``collect_obs_stats`` returns a
    tuple (result, trace_array) / (result, ObsStats).
    """
    sim_cfg = sim_cfg or SimConfig()
    reward_cfg = reward_cfg or RewardConfig()
    pol = policy or open_loop_policy()

    terr = build_terrain(cell, noise_std, seed, tile_seed=tile_seed)
    return rollout_on_terrain(tg, terr, policy=pol, sim_cfg=sim_cfg,
                              reward_cfg=reward_cfg, max_steps=max_steps,
                              trace=trace, collect_obs_stats=collect_obs_stats)


def rollout_on_terrain(tg: TGParams, terr: Terrain, *, policy: KernelPolicy,
                       sim_cfg: SimConfig, reward_cfg: RewardConfig,
                       max_steps: int | None = None, trace: bool = False,
                       collect_obs_stats: bool = False):
    pol = policy
    offbeam_z = terr.min_supported_height - sim_cfg.offbeam_drop
    phys = sim_cfg.phys_vector(offbeam_z, max_steps)
    n_steps = int(phys[K.P_MAX_STEPS])

    tgp = tg.as_array()
    gait = decode_gait(tgp[4])
    hips = sim_cfg.hips_array()
    init_pos = np.array([sim_cfg.initial_x, 0.0, sim_cfg.default_initial_height()])
    init_quat = np.array([1.0, 0.0, 0.0, 0.0])

    obs_sum = np.zeros(K.OBS_DIM)
    obs_sumsq = np.zeros(K.OBS_DIM)
    trace_arr = np.zeros((n_steps if trace else 1, K.TRACE_COLS))
    out = np.zeros(K.OUT_LEN)

    K.rollout_kernel(tgp, gait, LEG_SIDE_SIGN, hips,
                     pol.mode, pol.w1, pol.b1, pol.w2, pol.b2,
                     pol.cond, pol.obs_mean, pol.obs_std,
                     phys, reward_cfg.as_array(),
                     terr.type_code, terr.tp, terr.tiles,
                     init_pos, init_quat,
                     1 if collect_obs_stats else 0, obs_sum, obs_sumsq,
                     1 if trace else 0, trace_arr, out)

    result = RolloutResult(
        episode_return=float(out[K.OUT_RETURN]),
        reward_terms=out[K.OUT_R_LV:K.OUT_R_TP + 1].copy(),
        steps=int(out[K.OUT_STEPS]),
        termination=Termination(int(out[K.OUT_TERM])),
        nonfinite_actions=int(out[K.OUT_NONFINITE]),
        max_command_norm=float(out[K.OUT_MAX_CMD_NORM]),
    )
    if trace:
        return result, trace_arr[: int(out[K.OUT_TRACE_ROWS])]
    if collect_obs_stats:
        return result, ObsStats(float(out[K.OUT_OBS_COUNT]), obs_sum, obs_sumsq)
    return result


def parallel_map(fn, items, workers: int = 1) -> list:
    """Order-preserving map; thread-parallel when workers > 1.

    All kernels release the GIL, so threads give real speedup while results
    stay independent of worker count (each item is self-contained).
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- leg kinematics diagnostics (not used by the dynamics) ---

def leg_forward_kinematics(q: np.ndarray, d: float = 0.08,
                           l1: float = 0.2, l2: float = 0.2) -> np.ndarray:
    """Foot position in the hip frame for joint angles (roll, hip pitch, knee)."""
    roll, hip, knee = q
    # planar chain in the rolled leg plane, x forward / z down the leg
    px = -l1 * math.sin(hip) - l2 * math.sin(hip + knee)
    pz_plane = -(l1 * math.cos(hip) + l2 * math.cos(hip + knee))
    y = d * math.cos(roll) - pz_plane * math.sin(roll)
    z = d * math.sin(roll) + pz_plane * math.cos(roll)
    return np.array([px, y, z])


def leg_inverse_kinematics(p: np.ndarray, d: float = 0.08,
                           l1: float = 0.2, l2: float = 0.2) -> np.ndarray:
    """Analytic 3-DOF IK (roll, hip pitch, knee) for a foot target in the hip frame.

    Targets outside the reachable annulus are clamped to its surface first.
    """
    px, py, pz = [float(v) for v in p]
    lat = math.hypot(py, pz)
    if lat < d:  # too close to the roll axis: push out to the cylinder
        scale = d / max(lat, 1e-12)
        py *= scale
        pz *= scale
        lat = d
    plane = math.sqrt(lat * lat - d * d)
    roll = math.atan2(pz, py) - math.atan2(-plane, d)
    r = math.hypot(px, plane)
    r = min(max(r, abs(l1 - l2) + 1e-9), l1 + l2 - 1e-9)
    cos_knee = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    knee = math.acos(min(1.0, max(-1.0, cos_knee)))
    alpha = math.atan2(-px, plane)
    beta = math.acos(min(1.0, max(-1.0, (l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r))))
    hip = alpha - beta
    return np.array([roll, hip, knee])
