"""Persistent records of the portal service: accounts, web sessions and
self-registration tokens."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..webauthn.rp import CredentialRecord


class SessionState(str, enum.Enum):
    AUTHENTICATED = "authenticated"  # assertion verified, awaiting gateway confirm
    AUTHORIZED = "authorized"        # gateway confirmed network authorization
    EXPIRED = "expired"
    REVOKED = "revoked"


@dataclass
class UserAccount:
    user_id: bytes
    username: str
    display_name: str = ""
    is_admin: bool = False
    credentials: list[CredentialRecord] = field(default_factory=list)
    created_at: float = 0.0

    def to_doc(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id.hex(),
            "username": self.username,
            "display_name": self.display_name,
            "is_admin": self.is_admin,
            "credentials": [c.to_doc() for c in self.credentials],
            "created_at": self.created_at,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "UserAccount":
        return cls(
            user_id=bytes.fromhex(doc["user_id"]),
            username=doc["username"],
            display_name=doc.get("display_name", ""),
            is_admin=bool(doc.get("is_admin", False)),
            credentials=[CredentialRecord.from_doc(d) for d in doc.get("credentials", [])],
            created_at=float(doc.get("created_at", 0.0)),
        )


@dataclass
class SessionRecord:
    session_id: str
    user_id: bytes
    hid: str
    rhid: str
    state: SessionState
    created_at: float
    expires_at: float
    gateway_name: str = ""

    def to_doc(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "user_id": self.user_id.hex(),
            "hid": self.hid,
            "rhid": self.rhid,
            "state": self.state.value,
            "created_at": self.created_at,
            "expires_at": self.expires_at,
            "gateway_name": self.gateway_name,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "SessionRecord":
        return cls(
            session_id=doc["session_id"],
            user_id=bytes.fromhex(doc["user_id"]),
            hid=doc["hid"],
            rhid=doc["rhid"],
            state=SessionState(doc["state"]),
            created_at=float(doc["created_at"]),
            expires_at=float(doc["expires_at"]),
            gateway_name=doc.get("gateway_name", ""),
        )


@dataclass
class RegistrationToken:
    token: str
    issued_by: bytes | None
    expires_at: float
    max_uses: int = 1
    uses: int = 0
    qr_payload: str = ""
    grants_admin: bool = False
    locked_username: str | None = None

    def usable(self, now: float) -> bool:
        return self.uses < self.max_uses and now <= self.expires_at

    def to_doc(self) -> dict[str, Any]:
        return {
            "token": self.token,
            "issued_by": self.issued_by.hex() if self.issued_by else None,
            "expires_at": self.expires_at,
            "max_uses": self.max_uses,
            "uses": self.uses,
            "qr_payload": self.qr_payload,
            "grants_admin": self.grants_admin,
            "locked_username": self.locked_username,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "RegistrationToken":
        issued_by = doc.get("issued_by")
        return cls(
            token=doc["token"],
            issued_by=bytes.fromhex(issued_by) if issued_by else None,
            expires_at=float(doc["expires_at"]),
            max_uses=int(doc["max_uses"]),
            uses=int(doc["uses"]),
            qr_payload=doc.get("qr_payload", ""),
            grants_admin=bool(doc.get("grants_admin", False)),
            locked_username=doc.get("locked_username"),
        )
