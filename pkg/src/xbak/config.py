"""YAML configuration shared by the CLI and the HTTP service.

Recognized keys:

  refengine.roots      list of reference-engine store directories
  sinks.primary_dir    where archives are written
  sinks.mirror_dir     optional second copy
  sinks.remote_url     optional remote sink (file:// or ftp://)
  restore.staging_dir  upload staging directory
  http.bind_addr       host:port for the service
  http.static_dir      optional directory of console static files
  auth.users_file      credential store for the service
  auth.idle_minutes    session expiry (default 30)
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULT_STAGING = Path(tempfile.gettempdir()) / "Temp_Restore"


@dataclass
class SinkConfig:
    primary_dir: Path = Path(".")
    mirror_dir: Path | None = None
    remote_url: str | None = None


@dataclass
class AppConfig:
    refengine_roots: list[Path] = field(default_factory=list)
    sinks: SinkConfig = field(default_factory=SinkConfig)
    staging_dir: Path = DEFAULT_STAGING
    bind_addr: str = "127.0.0.1:8123"
    static_dir: Path | None = None
    users_file: Path | None = None
    idle_minutes: int = 30


def _section(data: dict, name: str) -> dict:
    value = data.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return value


def config_from_dict(data: dict) -> AppConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    refengine = _section(data, "refengine")
    sinks = _section(data, "sinks")
    restore = _section(data, "restore")
    http = _section(data, "http")
    auth = _section(data, "auth")

    roots = refengine.get("roots", [])
    if not isinstance(roots, list):
        raise ConfigError("refengine.roots must be a list of directories")

    cfg = AppConfig()
    cfg.refengine_roots = [Path(r) for r in roots]
    if "primary_dir" in sinks:
        cfg.sinks.primary_dir = Path(sinks["primary_dir"])
    if sinks.get("mirror_dir"):
        cfg.sinks.mirror_dir = Path(sinks["mirror_dir"])
    if sinks.get("remote_url"):
        cfg.sinks.remote_url = str(sinks["remote_url"])
    if restore.get("staging_dir"):
        cfg.staging_dir = Path(restore["staging_dir"])
    if http.get("bind_addr"):
        cfg.bind_addr = str(http["bind_addr"])
    if http.get("static_dir"):
        cfg.static_dir = Path(http["static_dir"])
    if auth.get("users_file"):
        cfg.users_file = Path(auth["users_file"])
    if auth.get("idle_minutes"):
        cfg.idle_minutes = int(auth["idle_minutes"])
    return cfg


def load_config(path: str | Path) -> AppConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad config file: {exc}") from None
    return config_from_dict(data)
