"""Adapter configuration.

One record names the model backends, the prompt templates they receive,
and the dry-run parameters. ``dry_run`` mode never contacts a backend:
every export and oracle answer is derived deterministically from the
input bytes, so the full pipeline can be exercised on a laptop. ``live``
mode requires each enabled backend to answer a reachability probe before
any work starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import BackendError, ConfigInvalid

MODES = ("dry_run", "live")
CAPABILITIES = ("encoder", "reasoner", "segmenter", "reconstructor")

# Prompt text is config data, not code: callers may override any template,
# but every key below must stay present.
DEFAULT_PROMPTS = {
    "select_views": "Rank these views by how well they show: {query}",
    "relevance": "Score how clearly this view shows: {query}",
    "segment": "Outline the object described by: {query}",
    "segment_refine": "Tighten the mask for: {query} (pass {round} of {budget})",
}


@dataclass(frozen=True)
class AdapterConfig:
    mode: str = "dry_run"
    encoder: str | None = None
    reasoner: str | None = None
    segmenter: str | None = None
    reconstructor: str | None = None
    prompts: dict = field(default_factory=lambda: dict(DEFAULT_PROMPTS))
    rate_limit_per_s: float = 2.0
    timeout_s: float = 30.0
    cache_dir: str | None = None
    embedding_dim: int = 512
    segment_iterations: int = 4
    focal_scale: float = 0.8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in CAPABILITIES:
            endpoint = getattr(self, name)
            if endpoint is not None and (not isinstance(endpoint, str) or not endpoint.strip()):
                raise ConfigInvalid(f"{name} endpoint must be a nonempty string or null")
        if not isinstance(self.prompts, dict):
            raise ConfigInvalid("prompts must be an object")
        unknown = sorted(set(self.prompts) - set(DEFAULT_PROMPTS))
        if unknown:
            raise ConfigInvalid(f"unknown prompt key {unknown[0]!r}")
        missing = sorted(set(DEFAULT_PROMPTS) - set(self.prompts))
        if missing:
            raise ConfigInvalid(f"missing prompt key {missing[0]!r}")
        if self.rate_limit_per_s <= 0:
            raise ConfigInvalid("rate_limit_per_s must be positive")
        if self.timeout_s <= 0:
            raise ConfigInvalid("timeout_s must be positive")
        if self.embedding_dim < 1:
            raise ConfigInvalid("embedding_dim must be at least 1")
        if self.segment_iterations < 1:
            raise ConfigInvalid("segment_iterations must be at least 1")
        if self.focal_scale <= 0:
            raise ConfigInvalid("focal_scale must be positive")

    def enabled_backends(self) -> dict[str, str]:
        """Capability -> endpoint for every backend the config turns on."""
        return {name: getattr(self, name) for name in CAPABILITIES
                if getattr(self, name) is not None}

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "encoder": self.encoder,
            "reasoner": self.reasoner,
            "segmenter": self.segmenter,
            "reconstructor": self.reconstructor,
            "prompts": dict(self.prompts),
            "rate_limit_per_s": self.rate_limit_per_s,
            "timeout_s": self.timeout_s,
            "cache_dir": self.cache_dir,
            "embedding_dim": self.embedding_dim,
            "segment_iterations": self.segment_iterations,
            "focal_scale": self.focal_scale,
        }


def config_from_record(data: dict) -> AdapterConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("adapter config must be a JSON object")
    data = dict(data)
    allowed = {f.name for f in fields(AdapterConfig)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigInvalid(f"unknown key {unknown[0]!r}")
    if "prompts" in data:
        if not isinstance(data["prompts"], dict):
            raise ConfigInvalid("prompts must be an object")
        # partial overrides are allowed in files; the record fills the rest
        data["prompts"] = {**DEFAULT_PROMPTS, **data["prompts"]}
    try:
        return AdapterConfig(**data)
    except TypeError as e:
        raise ConfigInvalid(f"bad adapter config: {e}") from None


def load_adapter_config(path) -> AdapterConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"adapter config not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"adapter config is not valid JSON: {path}: {e.msg}") from None
    return config_from_record(data)


def save_adapter_config(path, cfg: AdapterConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_record(), indent=2) + "\n")


def validate_backends(cfg: AdapterConfig, probe=None) -> None:
    """Check that every enabled backend answers before work begins.

    ``dry_run`` mode is exempt by definition. ``probe`` is an endpoint ->
    bool callable; the default issues a real HTTP probe.
    """
    if cfg.mode == "dry_run":
        return
    if probe is None:
        from .backends import http_probe
        probe = http_probe
    for name, endpoint in cfg.enabled_backends().items():
        if not probe(endpoint):
            raise BackendError(f"{name} backend unreachable at {endpoint!r}")
