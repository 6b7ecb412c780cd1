"""Environment grid and procedural terrain height fields.

Four terrain families (slope, stairs, uneven tiles, balance beam), each with
20 variations spanning a fixed physical parameter range, give the 80-cell
grid the archive is tessellated over. Every terrain is flat for x < 0.5 m
(common spawn pad) and deterministic given (cell, noise draw, seed).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

N_VARIATIONS = 20
N_TYPES = 4
N_CELLS = N_TYPES * N_VARIATIONS

SPAWN_END_X = 0.5
STEP_DEPTH = 0.25
TILE_SIZE = 0.25
UNSUPPORTED_HEIGHT = -1.0
ARENA_X_MAX = 32.0
ARENA_HALF_WIDTH = 8.0


class EnvType(enum.IntEnum):
    SLOPE = 0
    STAIRS = 1
    UNEVEN = 2
    BEAM = 3


# physical parameter range per type: slope angle (deg), step height (m),
# max tile height (m), beam width (m)
PARAM_RANGES = {
    EnvType.SLOPE: (-11.5, 11.5),
    EnvType.STAIRS: (-0.1, 0.1),
    EnvType.UNEVEN: (-0.1, 0.1),
    EnvType.BEAM: (0.25, 0.75),
}


def cell_param(env_type: EnvType, variation_index: int) -> float:
    """Linear interpolation of the type's range at the variation index."""
    if not 0 <= variation_index < N_VARIATIONS:
        raise ValueError(f"variation_index out of range: {variation_index}")
    lo, hi = PARAM_RANGES[EnvType(env_type)]
    return lo + variation_index * (hi - lo) / (N_VARIATIONS - 1)


@dataclass(frozen=True)
class EnvCell:
    env_type: EnvType
    variation_index: int
    param_value: float

    @classmethod
    def make(cls, env_type, variation_index: int) -> "EnvCell":
        et = EnvType(env_type)
        return cls(et, variation_index, cell_param(et, variation_index))

    @property
    def flat_index(self) -> int:
        return int(self.env_type) * N_VARIATIONS + self.variation_index

    @classmethod
    def from_flat_index(cls, idx: int) -> "EnvCell":
        if not 0 <= idx < N_CELLS:
            raise ValueError(f"cell index out of range: {idx}")
        return cls.make(EnvType(idx // N_VARIATIONS), idx % N_VARIATIONS)

    def to_dict(self) -> dict:
        return {
            "env_type": self.env_type.name,
            "variation_index": self.variation_index,
            "param_value": self.param_value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvCell":
        cell = cls.make(EnvType[d["env_type"]], int(d["variation_index"]))
        return cell


class EnvGrid:
    """The full 4 x 20 grid of environment cells."""

    def __init__(self):
        self.cells = [EnvCell.from_flat_index(i) for i in range(N_CELLS)]

    def __len__(self):
        return N_CELLS

    def __getitem__(self, idx: int) -> EnvCell:
        return self.cells[idx]

    def cell(self, env_type, variation_index: int) -> EnvCell:
        return self.cells[int(EnvType(env_type)) * N_VARIATIONS + variation_index]

    def __iter__(self):
        return iter(self.cells)


# kernel-facing parameter vector layout (see _kernels.terrain_height)
TP_SPAWN_END = 0
TP_SLOPE_TAN = 1
TP_STEP_HEIGHT = 2
TP_STEP_DEPTH = 3
TP_TILE_SIZE = 4
TP_TILE_X0 = 5
TP_TILE_Y0 = 6
TP_BEAM_HALFWIDTH = 7
TP_UNSUPPORTED = 8
TP_LEN = 9

_EMPTY_TILES = np.zeros((1, 1))


@dataclass(frozen=True)
class Terrain:
    """Immutable height field; shareable across rollout workers."""

    cell: EnvCell
    param_value: float  # post-perturbation parameter actually built
    seed: int
    type_code: int
    tp: np.ndarray          # scalar geometry vector, layout above
    tiles: np.ndarray       # (nx, ny) tile heights; 1x1 dummy unless UNEVEN

    def height_at(self, x: float, y: float) -> float:
        from ._kernels import terrain_height
        return float(terrain_height(self.type_code, self.tp, self.tiles, float(x), float(y)))

    def is_supported(self, x: float, y: float) -> bool:
        if self.cell.env_type != EnvType.BEAM:
            return True
        return x < SPAWN_END_X or abs(y) <= self.tp[TP_BEAM_HALFWIDTH]

    @property
    def min_supported_height(self) -> float:
        """Lowest height of real ground; falls are judged relative to this."""
        if self.cell.env_type == EnvType.SLOPE:
            return min(0.0, self.tp[TP_SLOPE_TAN] * (ARENA_X_MAX - SPAWN_END_X))
        if self.cell.env_type == EnvType.STAIRS:
            n_steps = math.floor((ARENA_X_MAX - SPAWN_END_X) / self.tp[TP_STEP_DEPTH])
            return min(0.0, self.tp[TP_STEP_HEIGHT] * n_steps)
        if self.cell.env_type == EnvType.UNEVEN:
            return float(min(0.0, self.tiles.min()))
        return 0.0

    def describe(self) -> dict:
        d = self.cell.to_dict()
        d.update(param_built=self.param_value, seed=self.seed)
        return d


def perturb_param(cell: EnvCell, param_noise_std: float, rng: np.random.Generator) -> float:
    """Gaussian-perturb the cell parameter; std is a fraction of range width."""
    lo, hi = PARAM_RANGES[cell.env_type]
    p = cell.param_value
    if param_noise_std > 0:
        p = p + rng.normal(0.0, param_noise_std * (hi - lo))
    return float(min(max(p, lo), hi))


def build_terrain(cell: EnvCell, param_noise_std: float, seed: int,
                  step_depth: float = STEP_DEPTH, tile_size: float = TILE_SIZE,
                  tile_seed: int | None = None) -> Terrain:
    """Construct the deterministic height field for one cell.

    ``seed`` drives the parameter perturbation; uneven tile heights use
    ``tile_seed`` when given (so a stable layout can be pinned per cell),
    otherwise the same stream.
    """
    if param_noise_std < 0:
        raise ValueError("param_noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    p = perturb_param(cell, param_noise_std, rng)

    tp = np.zeros(TP_LEN)
    tp[TP_SPAWN_END] = SPAWN_END_X
    tp[TP_STEP_DEPTH] = step_depth
    tp[TP_TILE_SIZE] = tile_size
    tp[TP_TILE_X0] = SPAWN_END_X
    tp[TP_TILE_Y0] = -ARENA_HALF_WIDTH
    tp[TP_UNSUPPORTED] = UNSUPPORTED_HEIGHT
    tiles = _EMPTY_TILES

    et = cell.env_type
    if et == EnvType.SLOPE:
        tp[TP_SLOPE_TAN] = math.tan(math.radians(p))
    elif et == EnvType.STAIRS:
        tp[TP_STEP_HEIGHT] = p
    elif et == EnvType.UNEVEN:
        nx = int(math.ceil((ARENA_X_MAX - SPAWN_END_X) / tile_size))
        ny = int(math.ceil(2.0 * ARENA_HALF_WIDTH / tile_size))
        tile_rng = rng if tile_seed is None else np.random.default_rng(tile_seed)
        u = tile_rng.uniform(0.0, 1.0, size=(nx, ny))
        # heights span [0, p] for bumps, [p, 0] for holes
        tiles = u * p
    elif et == EnvType.BEAM:
        tp[TP_BEAM_HALFWIDTH] = p / 2.0
    else:  # pragma: no cover
        raise ValueError(f"unknown env type: {et}")

    return Terrain(cell=cell, param_value=p, seed=int(seed),
                   type_code=int(et), tp=tp, tiles=tiles)
