"""Run configuration: one JSON document drives a fully reproducible run.

Parsing is strict: unknown keys are rejected with their path and the two
required keys (variant, master_seed) are reported by name when missing.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field

from .ars import ArsConfig
from .sim import RewardConfig, SimConfig


class ConfigError(Exception):
    pass


class AlgorithmVariant(str, enum.Enum):
    EETG = "EETG"
    PMTG_ENC = "PMTG_Enc"
    PMTG_IND = "PMTG_Ind"
    CMAES_PMTG_ENC = "CMAES_PMTG_Enc"
    CMAES_PMTG_IND = "CMAES_PMTG_Ind"
    EETG_ITR = "EETG_Itr"
    EETG_ITR_POLICY = "EETG_ItrPolicy"

    @classmethod
    def parse(cls, name: str) -> "AlgorithmVariant":
        for v in cls:
            if v.value == name:
                return v
        raise ConfigError(f"unknown variant: {name!r} (expected one of "
                          f"{[v.value for v in cls]})")


@dataclass(frozen=True)
class QDSettings:
    init_fraction: float = 0.10
    p_same_type: float = 0.7
    iso_sigma: float = 0.01
    line_sigma: float = 0.2
    batch_size: int = 64


@dataclass(frozen=True)
class CmaSettings:
    sigma0: float = 0.3          # in box-normalized coordinates
    popsize: int | None = None   # None -> 4 + floor(3 ln n)
    cells_per_candidate: int = 8  # single-TG multi-env objective sample size


@dataclass(frozen=True)
class PolicySettings:
    arch: str = "linear"
    hidden: int = 64
    env_encoding: str = "compact"


@dataclass(frozen=True)
class EvalProtocol:
    reps: int = 20
    noise_std: float = 0.05
    seed: int | None = None  # None -> derived from master_seed


@dataclass(frozen=True)
class RunConfig:
    variant: str
    master_seed: int
    scale_factor: float = 0.01
    out_dir: str = "runs/run"
    workers: int = 0  # 0 -> os.cpu_count()
    ablation_loops: int = 2
    train_noise_std: float = 0.05
    phase1_noise_std: float = 0.0
    qd: QDSettings = field(default_factory=QDSettings)
    ars: ArsConfig = field(default_factory=ArsConfig)
    cma: CmaSettings = field(default_factory=CmaSettings)
    policy: PolicySettings = field(default_factory=PolicySettings)
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    eval: EvalProtocol = field(default_factory=EvalProtocol)

    def __post_init__(self):
        AlgorithmVariant.parse(self.variant)
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if not 0 < self.scale_factor <= 1:
            raise ConfigError("scale_factor must be in (0, 1]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sim"] = self.sim.to_dict()
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_REQUIRED = ("variant", "master_seed")

_NESTED = {
    "qd": QDSettings,
    "ars": ArsConfig,
    "cma": CmaSettings,
    "policy": PolicySettings,
    "sim": SimConfig,
    "reward": RewardConfig,
    "eval": EvalProtocol,
}

_TUPLE_FIELDS = {("sim", "inertia"), ("sim", "hip_offsets")}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(key) if cls is RunConfig else None
        if sub is not None:
            kwargs[key] = _build(sub, value, key)
        elif (path, key) in _TUPLE_FIELDS:
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"missing required config key: {key}")
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: line {exc.lineno}: {exc.msg}")
    return config_from_dict(data)
