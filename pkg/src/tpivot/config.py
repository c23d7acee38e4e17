"""Run configuration: defaults, config file, and CLI precedence.

Config files are flat ``key = value`` text: one assignment per line,
``#`` comments, values taken verbatim after stripping surrounding
whitespace (and one optional layer of double quotes). That keeps
prompt-template values with embedded braces and quotes safe to write
without escaping. Command-line flags override the file; the file
overrides built-in defaults.

The API key is never a flag or file value; it is read from the
environment variable named by ``api_key_env``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .annotations import GroundTruthSegmentation
from .backends import (
    API_KEY_ENV,
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    HttpBackend,
    OracleBackend,
    ReplayBackend,
    VlmBackend,
    record,
)
from .errors import ConfigError

BACKEND_NAMES = ("http", "oracle", "noisy-oracle", "replay")


@dataclass
class RunConfig:
    """Every knob of a localization or evaluation run."""

    backend: str = "http"
    model: str = DEFAULT_MODEL
    endpoint: str = DEFAULT_ENDPOINT
    api_key_env: str = API_KEY_ENV
    rate_limit_rps: float = 2.0
    timeout_s: float = 120.0
    http_retries: int = 3
    backoff_s: float = 1.0
    replay_store: str | None = None
    record_store: str | None = None
    grid: str = "5x5"
    style: str = "original"
    canvas_px: int = 2048
    iterations: int = 4
    shrink_factor: float = 2.0
    retry_attempts: int = 3
    until_frame_level: bool = False
    split_segments: int = 1
    workers: int = 4
    seed: int = 0
    noise_std_s: float = 0.5
    fps: float | None = None
    start_template: str | None = None
    end_template: str | None = None

    def validate(self) -> None:
        if self.backend not in BACKEND_NAMES:
            raise ConfigError(
                f"backend must be one of {BACKEND_NAMES}, "
                f"got {self.backend!r}")
        if self.backend == "replay" and not self.replay_store:
            raise ConfigError("backend 'replay' needs replay_store")

    def to_meta(self) -> dict[str, Any]:
        """The config as a JSON-safe dict for result provenance."""
        return dataclasses.asdict(self)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text: str) -> float | None:
    return None if text.strip().lower() == "none" else float(text)


_CONVERTERS: dict[str, Callable[[str], Any]] = {
    "backend": str, "model": str, "endpoint": str, "api_key_env": str,
    "rate_limit_rps": float, "timeout_s": float, "http_retries": int,
    "backoff_s": float, "replay_store": str, "record_store": str,
    "grid": str, "style": str, "canvas_px": int, "iterations": int,
    "shrink_factor": float, "retry_attempts": int,
    "until_frame_level": _parse_bool, "split_segments": int,
    "workers": int, "seed": int, "noise_std_s": float,
    "fps": _parse_optional_float,
    "start_template": str, "end_template": str,
}

# File keys that differ from their field names.
_KEY_ALIASES = {
    "prompt.start_template": "start_template",
    "prompt.end_template": "end_template",
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat key = value config file into raw string values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {line!r}")
        key = key.strip()
        value = value.strip()
        if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
            value = value[1:-1]
        values[key] = value
    return values


def resolve_config(file_values: dict[str, str] | None = None,
                   overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults, config file values, and CLI overrides.

    ``overrides`` entries with value ``None`` mean "not set on the
    command line" and are skipped.
    """
    cfg = RunConfig()
    for key, raw in (file_values or {}).items():
        name = _KEY_ALIASES.get(key, key)
        if name not in _CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, name, _CONVERTERS[name](raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in _CONVERTERS:
            raise ConfigError(f"unknown config override {name!r}")
        setattr(cfg, name, value)
    cfg.validate()
    return cfg


def make_backend(cfg: RunConfig,
                 truth: GroundTruthSegmentation | None = None) -> VlmBackend:
    """Construct the backend the config describes.

    Oracle backends answer from ground truth, so they require ``truth``.
    """
    cfg.validate()
    if cfg.backend == "http":
        api_key = os.environ.get(cfg.api_key_env, "")
        if not api_key:
            raise ConfigError(
                f"backend 'http' needs an API key in ${cfg.api_key_env}")
        backend: VlmBackend = HttpBackend(
            api_key=api_key, model=cfg.model, endpoint=cfg.endpoint,
            timeout_s=cfg.timeout_s, max_retries=cfg.http_retries,
            backoff_s=cfg.backoff_s, rate_limit_rps=cfg.rate_limit_rps)
    elif cfg.backend in ("oracle", "noisy-oracle"):
        if truth is None:
            raise ConfigError(
                f"backend {cfg.backend!r} needs ground-truth annotations")
        noise = cfg.noise_std_s if cfg.backend == "noisy-oracle" else 0.0
        backend = OracleBackend(truth, noise_std_s=noise, seed=cfg.seed)
    else:
        backend = ReplayBackend(cfg.replay_store)
    if cfg.record_store and cfg.backend != "replay":
        backend = record(backend, cfg.record_store)
    return backend


def make_backend_factory(cfg: RunConfig
                         ) -> Callable[[GroundTruthSegmentation], VlmBackend]:
    """Per-video backend constructor for dataset evaluation.

    Oracle backends are built per video (each answers from that video's
    truth); every other backend is built once and shared, so rate
    limiting and record stores span the whole run.
    """
    if cfg.backend in ("oracle", "noisy-oracle"):
        return lambda truth: make_backend(cfg, truth)
    shared = make_backend(cfg)
    return lambda truth: shared
