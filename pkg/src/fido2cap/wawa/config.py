"""Service configuration: JSON file plus FIDO2CAP_* environment overrides.

The fas_key travels as 64 hex chars in files and the environment; a key of
any other length is refused at startup with a length diagnostic, because a
mismatched key only ever surfaces later as undecryptable blobs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Mapping

from ..fas import FAS_KEY_LENGTH, FasSharedConfig


class ConfigError(Exception):
    pass


_ENV_PREFIX = "FIDO2CAP_"

_ENV_FIELDS = {
    "rp_id": str,
    "expected_origin": str,
    "fas_key": str,
    "fas_fqdn": str,
    "fas_port": int,
    "session_timeout_seconds": float,
    "challenge_ttl_seconds": float,
    "bind_host": str,
    "bind_port": int,
    "advertise_ip": str,
}


@dataclass(frozen=True)
class WawaConfig:
    rp_id: str
    expected_origin: str
    fas_key: bytes
    fas_fqdn: str
    fas_port: int
    session_timeout_seconds: float = 600.0
    challenge_ttl_seconds: float = 120.0
    require_user_verification: bool = False
    bind_host: str = "127.0.0.1"
    bind_port: int = 8080
    advertise_ip: str = "127.0.0.1"
    retention_seconds: float = 86400.0
    authmon_shared_secret: str | None = None
    authmon_rate_limit_per_minute: int = 600
    store_path: str | None = None

    @property
    def fas(self) -> FasSharedConfig:
        return FasSharedConfig(
            fas_key=self.fas_key,
            fas_fqdn=self.fas_fqdn,
            fas_port=self.fas_port,
            session_timeout=self.session_timeout_seconds,
        )


def decode_fas_key(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError as exc:
        raise ConfigError(f"fas_key must be hex: {exc}") from exc
    if len(key) != FAS_KEY_LENGTH:
        raise ConfigError(
            f"fas_key must be {FAS_KEY_LENGTH} bytes ({FAS_KEY_LENGTH * 2} hex chars), "
            f"got {len(key)} bytes"
        )
    return key


def load_config(path: str, env: Mapping[str, str] | None = None) -> WawaConfig:
    env = os.environ if env is None else env
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw: dict[str, Any] = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    for name, cast in _ENV_FIELDS.items():
        env_value = env.get(_ENV_PREFIX + name.upper())
        if env_value is not None:
            raw[name] = cast(env_value)

    missing = [k for k in ("rp_id", "expected_origin", "fas_key", "fas_fqdn", "fas_port") if k not in raw]
    if missing:
        raise ConfigError(f"config {path} missing required fields: {', '.join(missing)}")

    raw["fas_key"] = decode_fas_key(str(raw["fas_key"]))
    known = {f for f in WawaConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config {path} has unknown fields: {', '.join(sorted(unknown))}")
    try:
        return WawaConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
