"""Portal service: HTTP API, user/session stores, Authmon endpoint."""

from .config import ConfigError, WawaConfig, load_config
from .models import RegistrationToken, SessionRecord, SessionState, UserAccount
from .service import WawaService
from .store import JsonFileStore, MemoryStore

__all__ = [
    "ConfigError",
    "JsonFileStore",
    "MemoryStore",
    "RegistrationToken",
    "SessionRecord",
    "SessionState",
    "UserAccount",
    "WawaConfig",
    "WawaService",
    "load_config",
]
