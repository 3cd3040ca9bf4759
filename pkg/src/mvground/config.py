"""Declarative pipeline configuration.

One versioned record drives every subcommand. Unknown keys are rejected so
a preset can be audited field by field, and the shipped stage presets form
an additive ladder: stage1 grounds every query on the largest proposal,
stage2 adds embedding-ranked views and segmentation voting with a single
view, stage3 hands view choice to the selection oracle, stage4 widens it
to multi-view aggregation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigInvalid
from .proposals import ConsensusParams
from .scene import LOAD_MODES

SCHEMA_VERSION = 1
STRATEGIES = ("vote", "largest")


@dataclass(frozen=True)
class TsdfParams:
    voxel_size: float = 0.04
    truncation: float = 0.12
    margin: float = 0.2

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ConfigInvalid("tsdf.voxel_size must be positive")
        if self.truncation < 2 * self.voxel_size:
            raise ConfigInvalid("tsdf.truncation must be at least two voxels")
        if self.margin < 0:
            raise ConfigInvalid("tsdf.margin must be nonnegative")


@dataclass(frozen=True)
class PipelineConfig:
    schema_version: int = SCHEMA_VERSION
    mode: str = "full"
    k_preselect: int = 6
    m_views: int = 3
    use_oracle_views: bool = True
    strategy: str = "vote"
    min_iou: float = 0.05
    trim_lo: float = 0.02
    trim_hi: float = 0.02
    sim_weight: float = 0.5
    tsdf: TsdfParams = field(default_factory=TsdfParams)
    consensus: ConsensusParams = field(default_factory=ConsensusParams)
    oracle: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {self.schema_version}")
        if self.mode not in LOAD_MODES:
            raise ConfigInvalid(f"mode must be one of {LOAD_MODES}, got {self.mode!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigInvalid(f"strategy must be one of {STRATEGIES}")
        if self.m_views < 1 or self.k_preselect < self.m_views:
            raise ConfigInvalid("need k_preselect >= m_views >= 1")
        if not (0.0 <= self.min_iou <= 1.0):
            raise ConfigInvalid("min_iou must lie in [0, 1]")
        if self.trim_lo < 0 or self.trim_hi < 0 or self.trim_lo + self.trim_hi >= 1:
            raise ConfigInvalid("trim percentiles must be nonnegative and sum below 1")
        if not (0.0 <= self.sim_weight <= 1.0):
            raise ConfigInvalid("sim_weight must lie in [0, 1]")
        if not isinstance(self.seed, int):
            raise ConfigInvalid("seed must be an integer")

    def to_record(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "k_preselect": self.k_preselect,
            "m_views": self.m_views,
            "use_oracle_views": self.use_oracle_views,
            "strategy": self.strategy,
            "min_iou": self.min_iou,
            "trim_lo": self.trim_lo,
            "trim_hi": self.trim_hi,
            "sim_weight": self.sim_weight,
            "tsdf": {"voxel_size": self.tsdf.voxel_size,
                     "truncation": self.tsdf.truncation,
                     "margin": self.tsdf.margin},
            "consensus": {"stride": self.consensus.stride,
                          "cell": self.consensus.cell,
                          "overlap": self.consensus.overlap,
                          "min_views": self.consensus.min_views,
                          "trim_lo": self.consensus.trim_lo,
                          "trim_hi": self.consensus.trim_hi},
            "oracle": self.oracle,
            "seed": self.seed,
        }


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where or 'config'} must be a JSON object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigInvalid(f"unknown key {where}{unknown[0]!r}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigInvalid(f"bad config near {where or 'top level'}: {e}") from None


def config_from_record(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    data = dict(data)
    sub = {}
    if "tsdf" in data:
        sub["tsdf"] = _build(TsdfParams, data.pop("tsdf"), "tsdf.")
    if "consensus" in data:
        sub["consensus"] = _build(ConsensusParams, data.pop("consensus"), "consensus.")
    cfg = _build(PipelineConfig, data, "")
    return replace(cfg, **sub) if sub else cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config is not valid JSON: {path}: {e.msg}") from None
    return config_from_record(data)


def save_config(path, cfg: PipelineConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_record(), indent=2) + "\n")


PRESETS: dict[str, PipelineConfig] = {
    # proposals alone: query-independent largest-box baseline
    "stage1": PipelineConfig(strategy="largest", k_preselect=1, m_views=1,
                             use_oracle_views=False),
    # embedding top-1 view, segmentation voting, no view-selection oracle
    "stage2": PipelineConfig(k_preselect=1, m_views=1, use_oracle_views=False),
    # widen preselection, let the oracle pick the single best view
    "stage3": PipelineConfig(k_preselect=6, m_views=1),
    # full multi-view aggregation
    "stage4": PipelineConfig(k_preselect=6, m_views=3),
}


def preset(name: str) -> PipelineConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigInvalid(
            f"unknown preset {name!r}, have {', '.join(sorted(PRESETS))}") from None
