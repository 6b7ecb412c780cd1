"""Open-loop foot trajectory generator.

Each leg follows a closed-form periodic trajectory driven by a phase angle.
One half-cycle sweeps the foot backwards at ground height (stance / thrust),
the other lifts and returns it (swing). Five scalars parameterize the motion:
swing amplitude, lateral turn amplitude, lift height, a shared lateral foot
offset, and a gait latent selecting one of four inter-leg phase patterns.

Targets are expressed in per-leg frames with +x forward, +y pointing away
from the body (outboard) and +z up, origin at the hip. Mapping to the
body frame (mirroring y for right-side legs) happens in the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi

PARAM_NAMES = ("swing", "turn", "lift", "y_offset", "gait_latent")
PARAM_LOW = np.array([0.0, 0.0, 0.0, -0.05, 0.0])
PARAM_HIGH = np.array([0.08, 0.15, 0.2, 0.12, 4.0])
PARAM_RANGE = PARAM_HIGH - PARAM_LOW
N_PARAMS = 5

# the gait latent lives in [0, 4); clamp just below 4 so floor() stays valid
GAIT_LATENT_MAX = 4.0 - 1e-9

GAIT_NAMES = ("walk", "trot", "bound", "pronk")
# per-leg phase-offset fractions, leg order: FL, FR, RL, RR
GAIT_OFFSETS = np.array(
    [
        [0.0, 0.25, 0.5, 0.75],  # walk
        [0.0, 0.5, 0.5, 0.0],    # trot
        [0.0, 0.5, 0.0, 0.5],    # bound
        [0.0, 0.0, 0.0, 0.0],    # pronk
    ]
)

N_LEGS = 4
LEG_NAMES = ("FL", "FR", "RL", "RR")
# sign mapping leg-frame outboard y -> body-frame y (left legs +, right legs -)
LEG_SIDE_SIGN = np.array([1.0, -1.0, 1.0, -1.0])

BASE_FREQUENCY_HZ = 1.25
NOMINAL_HEIGHT_M = -0.27
HIP_LATERAL_M = 0.08


def clamp_params(vec: np.ndarray) -> np.ndarray:
    """Clamp a raw 5-vector into the valid parameter box (idempotent)."""
    out = np.clip(np.asarray(vec, dtype=float), PARAM_LOW, PARAM_HIGH)
    out[4] = min(out[4], GAIT_LATENT_MAX)
    return out


@dataclass(frozen=True)
class TGParams:
    """Solution vector searched by the optimizers: [swing, turn, lift, y_offset, gait_latent]."""

    swing: float
    turn: float
    lift: float
    y_offset: float
    gait_latent: float

    @classmethod
    def from_array(cls, vec) -> "TGParams":
        v = clamp_params(vec)
        return cls(*[float(x) for x in v])

    def as_array(self) -> np.ndarray:
        return clamp_params(
            np.array([self.swing, self.turn, self.lift, self.y_offset, self.gait_latent])
        )

    @property
    def gait_index(self) -> int:
        return gait_index(self.gait_latent)

    @property
    def gait_name(self) -> str:
        return GAIT_NAMES[self.gait_index]


def uniform_params(rng: np.random.Generator) -> TGParams:
    """Uniform sample over the full parameter box."""
    return TGParams.from_array(rng.uniform(PARAM_LOW, PARAM_HIGH))


def gait_index(gait_latent: float) -> int:
    latent = min(max(float(gait_latent), 0.0), GAIT_LATENT_MAX)
    return int(math.floor(latent))


def encode_gait(index: int) -> float:
    if not 0 <= index < len(GAIT_NAMES):
        raise ValueError(f"gait index out of range: {index}")
    return float(index)


def decode_gait(gait_latent: float) -> np.ndarray:
    """Phase-offset fractions (4,) for the gait selected by floor(latent)."""
    return GAIT_OFFSETS[gait_index(gait_latent)].copy()


@dataclass(frozen=True)
class TGState:
    """Per-leg phase angles plus the fixed generator constants."""

    phases: np.ndarray  # (4,) radians, each wrapped to [0, 2*pi)
    base_freq: float = BASE_FREQUENCY_HZ
    nominal_height: float = NOMINAL_HEIGHT_M

    @classmethod
    def initial(cls, params: TGParams, base_freq: float = BASE_FREQUENCY_HZ,
                nominal_height: float = NOMINAL_HEIGHT_M) -> "TGState":
        phases = wrap_phase(decode_gait(params.gait_latent) * TWO_PI)
        return cls(phases=phases, base_freq=base_freq, nominal_height=nominal_height)


def wrap_phase(phi):
    """Wrap angle(s) to [0, 2*pi)."""
    out = np.mod(phi, TWO_PI)
    # np.mod can return 2*pi for tiny negative inputs after rounding
    return np.where(out >= TWO_PI, out - TWO_PI, out)


def advance_phase(state: TGState, freq_residuals, dt: float) -> TGState:
    """Advance each leg phase by 2*pi*(f0 + f_i)*dt.

    The total frequency is clamped to [0, 2*f0] so phase never runs
    backwards; non-finite residuals count as zero.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    res = np.asarray(freq_residuals, dtype=float)
    res = np.where(np.isfinite(res), res, 0.0)
    total = np.clip(state.base_freq + res, 0.0, 2.0 * state.base_freq)
    phases = wrap_phase(state.phases + TWO_PI * total * dt)
    return replace(state, phases=phases)


def foot_target(params: TGParams, phase: float, leg_index: int = 0,
                nominal_height: float = NOMINAL_HEIGHT_M,
                lateral_offset: float = HIP_LATERAL_M) -> np.ndarray:
    """Leg-frame foot target (x, y, z) for one leg at the given phase.

    The trajectory is identical for every leg in its own frame;
    ``leg_index`` is accepted for interface symmetry.
    """
    del leg_index
    phi = float(wrap_phase(phase))
    beta1 = (math.sin(phi + math.pi / 2.0) - 1.0) / 2.0
    beta2 = (math.sin(2.0 * phi + math.pi / 2.0) - 1.0) / 2.0
    x = params.swing * beta1 + params.swing
    y_delta = lateral_offset + params.y_offset
    if phi <= math.pi:
        y = y_delta
        z = nominal_height
    else:
        y = y_delta - params.turn * beta2
        z = nominal_height - params.lift * beta2
    return np.array([x, y, z])


def foot_targets(params: TGParams, state: TGState,
                 lateral_offset: float = HIP_LATERAL_M) -> np.ndarray:
    """Leg-frame targets for all four legs, shape (4, 3)."""
    return np.stack([
        foot_target(params, state.phases[i], i,
                    nominal_height=state.nominal_height,
                    lateral_offset=lateral_offset)
        for i in range(N_LEGS)
    ])


def foot_target_sweep(params: TGParams, phis: np.ndarray,
                      nominal_height: float = NOMINAL_HEIGHT_M,
                      lateral_offset: float = HIP_LATERAL_M) -> np.ndarray:
    """Vectorized trajectory over a phase array, shape (len(phis), 3)."""
    phi = np.asarray(wrap_phase(phis), dtype=float)
    beta1 = (np.sin(phi + np.pi / 2.0) - 1.0) / 2.0
    beta2 = (np.sin(2.0 * phi + np.pi / 2.0) - 1.0) / 2.0
    second = phi > np.pi
    y_delta = lateral_offset + params.y_offset
    x = params.swing * beta1 + params.swing
    y = np.where(second, y_delta - params.turn * beta2, y_delta)
    z = np.where(second, nominal_height - params.lift * beta2, nominal_height)
    return np.stack([x, y, z], axis=-1)
