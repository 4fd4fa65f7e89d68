"""The portal service core: user/session stores, ceremony orchestration,
registrar RBAC, and the Authmon dialogue.

This is transport-free; the HTTP layer in `fido2cap.wawa.http` is a thin
adapter over these methods, and the gateway simulator can call
`handle_authmon` directly for in-process runs.
"""

from __future__ import annotations

import hmac
import logging
import re
import threading
import types
from dataclasses import replace
from typing import Any, Mapping

from ..clock import SystemClock
from ..encoding import b64url_encode
from ..entropy import RandomSource, system_random
from ..fas import (
    CONFIRM_ACK,
    CONFIRM_NAK,
    AuthmonVerb,
    FasError,
    compute_rhid,
    confirmation_rhid,
    decrypt_fas_blob,
    parse_authmon_request,
    render_auth_list,
)
from ..webauthn import (
    Ceremony,
    ChallengeStore,
    CredentialRecord,
    RelyingParty,
    RelyingPartyConfig,
)
from .config import WawaConfig
from .models import RegistrationToken, SessionRecord, SessionState, UserAccount
from .store import MemoryStore, JsonFileStore, REG_TOKENS, SESSIONS, USERS

log = logging.getLogger("fido2cap.wawa")

SESSION_ID_BYTES = 16
TOKEN_BYTES = 16
DEFAULT_TOKEN_TTL = 600.0


class ServiceError(Exception):
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.code = re.sub(r"(?<!^)(?=[A-Z])", "_", self.__class__.__name__).lower()


class Forbidden(ServiceError):
    http_status = 403


class NotFound(ServiceError):
    http_status = 404


class MissingFasContext(ServiceError):
    http_status = 400


class TokenExpiredOrExhausted(ServiceError):
    http_status = 403


class NoSession(ServiceError):
    http_status = 401


class LastAdminProtection(ServiceError):
    http_status = 409


class AdminAlreadyExists(ServiceError):
    http_status = 409


class InvalidRequest(ServiceError):
    http_status = 400


class WawaService:
    def __init__(
        self,
        config: WawaConfig,
        store=None,
        clock=None,
        rand: RandomSource = system_random,
    ):
        self.config = config
        self.clock = clock if clock is not None else SystemClock()
        self.rand = rand
        if store is not None:
            self.store = store
        elif config.store_path:
            self.store = JsonFileStore(config.store_path)
        else:
            self.store = MemoryStore()
        rp_config = RelyingPartyConfig(
            rp_id=config.rp_id,
            expected_origin=config.expected_origin,
            challenge_ttl=config.challenge_ttl_seconds,
            require_user_verification=config.require_user_verification,
        )
        self.rp = RelyingParty(
            rp_config,
            ChallengeStore(self.clock, rand),
            credentials=self,
            clock=self.clock,
            rand=rand,
        )
        # usernames mid-registration keep a stable user handle across retries
        # without creating the account before the ceremony verifies
        self._pending_user_ids: dict[str, bytes] = {}
        self._pending_lock = threading.Lock()

    # ------------------------------------------------------------------
    # credential source interface consumed by the relying-party engine

    def credential_by_id(self, credential_id: bytes) -> CredentialRecord | None:
        for _, doc in self.store.items(USERS):
            for cred_doc in doc.get("credentials", []):
                record = CredentialRecord.from_doc(cred_doc)
                if hmac.compare_digest(record.credential_id, credential_id):
                    return record
        return None

    def user_id_for_username(self, username: str) -> bytes | None:
        doc = self.store.get(USERS, username.casefold())
        return bytes.fromhex(doc["user_id"]) if doc else None

    def credentials_for_user_id(self, user_id: bytes) -> list[CredentialRecord]:
        account = self._account_by_user_id(user_id)
        return list(account.credentials) if account else []

    def update_sign_count(self, credential_id: bytes, sign_count: int) -> None:
        with self.store.transaction():
            for key, doc in self.store.items(USERS):
                account = UserAccount.from_doc(doc)
                for index, record in enumerate(account.credentials):
                    if record.credential_id == credential_id:
                        account.credentials[index] = replace(record, sign_count=sign_count)
                        self.store.put(USERS, key, account.to_doc())
                        return
        raise KeyError("credential vanished while updating its counter")

    # ------------------------------------------------------------------
    # account helpers

    def account_by_username(self, username: str) -> UserAccount | None:
        doc = self.store.get(USERS, username.casefold())
        return UserAccount.from_doc(doc) if doc else None

    def _account_by_user_id(self, user_id: bytes) -> UserAccount | None:
        for _, doc in self.store.items(USERS):
            if bytes.fromhex(doc["user_id"]) == user_id:
                return UserAccount.from_doc(doc)
        return None

    def _admin_count(self) -> int:
        return sum(1 for _, doc in self.store.items(USERS) if doc.get("is_admin"))

    def _require_admin(self, session: SessionRecord | None) -> UserAccount:
        if session is None:
            raise Forbidden("admin session required")
        account = self._account_by_user_id(session.user_id)
        if account is None or not account.is_admin:
            raise Forbidden("admin role required")
        return account

    # ------------------------------------------------------------------
    # portal bootstrap

    def portal_context(self, fas_blob: str | None) -> dict[str, Any]:
        """Context document for the portal page. Never raises: an absent or
        undecryptable blob yields a degraded (but 200-serveable) context."""
        if not fas_blob:
            return {"ok": False, "reason": "missing_fas"}
        try:
            params = decrypt_fas_blob(fas_blob, self.config.fas)
        except FasError as exc:
            log.info("portal served degraded page: %s", exc.code)
            return {"ok": False, "reason": "invalid_fas"}
        return {
            "ok": True,
            "gateway_name": params.gateway_name,
            "client_ip_masked": _mask_ip(params.client_ip),
            "original_url": params.original_url,
            "fas_context": fas_blob,
        }

    # ------------------------------------------------------------------
    # authentication ceremonies

    def auth_options(self, username: str | None, fas_blob: str | None) -> dict[str, Any]:
        if not fas_blob:
            raise MissingFasContext("authentication requires the fas context")
        try:
            params = decrypt_fas_blob(fas_blob, self.config.fas)
        except FasError as exc:
            raise MissingFasContext(f"fas context undecryptable: {exc.code}") from exc
        options = self.rp.generate_authentication_options(username, hid=params.hid)
        log.info("auth options issued (user=%s hid=%s…)", username or "-", params.hid[:8])
        return options.to_dict()

    def auth_verify(self, assertion: Mapping[str, Any]) -> dict[str, Any]:
        challenge = self.rp.peek_challenge(assertion, Ceremony.AUTHENTICATION)
        if not challenge.bound_hid:
            raise MissingFasContext("challenge carries no gateway binding")
        hid = challenge.bound_hid
        verified = self.rp.verify_authentication_response(assertion)

        account = self._account_by_user_id(verified.user_id)
        if account is None:
            raise NoSession("credential resolved to a vanished account")
        now = self.clock.now()
        session = SessionRecord(
            session_id=self.rand(SESSION_ID_BYTES).hex(),
            user_id=verified.user_id,
            hid=hid,
            rhid=compute_rhid(hid, self.config.fas_key),
            state=SessionState.AUTHENTICATED,
            created_at=now,
            expires_at=now + self.config.session_timeout_seconds,
        )
        self.store.put(SESSIONS, session.session_id, session.to_doc())
        log.info(
            "assertion verified: user=%s session=%s rhid=%s…",
            account.username, session.session_id[:8], session.rhid[:8],
        )
        return {
            "session_id": session.session_id,
            "username": account.username,
            "expires_at": session.expires_at,
        }

    def get_live_session(self, session_id: str | None) -> SessionRecord | None:
        if not session_id:
            return None
        doc = self.store.get(SESSIONS, session_id)
        if doc is None:
            return None
        session = SessionRecord.from_doc(doc)
        live = session.state in (SessionState.AUTHENTICATED, SessionState.AUTHORIZED)
        if not live or self.clock.now() > session.expires_at:
            return None
        return session

    def logout(self, session_id: str | None) -> dict[str, Any]:
        self.sweep()
        doc = self.store.get(SESSIONS, session_id) if session_id else None
        if doc is None:
            raise NoSession("no such session")
        session = SessionRecord.from_doc(doc)
        if session.state not in (SessionState.AUTHENTICATED, SessionState.AUTHORIZED):
            raise NoSession(f"session already {session.state.value}")
        session.state = SessionState.REVOKED
        self.store.put(SESSIONS, session.session_id, session.to_doc())
        log.info("session %s… revoked by logout", session.session_id[:8])
        return {"ok": True}

    # ------------------------------------------------------------------
    # registration ceremonies (admin or token-gated self-registration)

    def _load_token(self, token_str: str) -> RegistrationToken:
        doc = self.store.get(REG_TOKENS, token_str)
        if doc is None:
            raise Forbidden("unknown registration token")
        token = RegistrationToken.from_doc(doc)
        if not token.usable(self.clock.now()):
            raise TokenExpiredOrExhausted("registration token expired or exhausted")
        return token

    def _caller_is_admin(self, session: SessionRecord | None) -> bool:
        if session is None:
            return False
        account = self._account_by_user_id(session.user_id)
        return account is not None and account.is_admin

    def _validated_token(self, token_str: str, username: str) -> RegistrationToken:
        token = self._load_token(token_str)
        if token.locked_username and token.locked_username != username.casefold():
            raise Forbidden("token is locked to a different username")
        return token

    def _authorize_registrar(
        self,
        session: SessionRecord | None,
        token_str: str | None,
        username: str,
    ) -> RegistrationToken | None:
        """Admin session wins; otherwise a usable token (returned for
        accounting at verify time)."""
        if self._caller_is_admin(session):
            return None
        if token_str:
            return self._validated_token(token_str, username)
        raise Forbidden("registration requires an admin session or a valid token")

    def _user_id_for_registration(self, username: str) -> bytes:
        account = self.account_by_username(username)
        if account is not None:
            return account.user_id
        key = username.casefold()
        with self._pending_lock:
            if key not in self._pending_user_ids:
                self._pending_user_ids[key] = self.rand(16)
            return self._pending_user_ids[key]

    def register_options(
        self,
        session: SessionRecord | None,
        username: str,
        token: str | None = None,
    ) -> dict[str, Any]:
        username = username.strip()
        if not username:
            raise InvalidRequest("username must be non-empty")
        self._authorize_registrar(session, token, username)
        account = self.account_by_username(username)
        user = types.SimpleNamespace(
            user_id=self._user_id_for_registration(username),
            username=username,
            display_name=account.display_name if account else username,
        )
        existing = account.credentials if account else []
        options = self.rp.generate_registration_options(user, existing)
        log.info("registration options issued for %s (%d exclusions)", username, len(existing))
        return options.to_dict()

    def register_verify(
        self,
        session: SessionRecord | None,
        attestation: Mapping[str, Any],
        token: str | None = None,
        label: str = "",
    ) -> dict[str, Any]:
        # authority gate first: anonymous and non-admin callers are refused
        # before the attestation is even parsed
        is_admin_caller = self._caller_is_admin(session)
        if not is_admin_caller and not token:
            raise Forbidden("registration requires an admin session or a valid token")
        challenge = self.rp.peek_challenge(attestation, Ceremony.REGISTRATION)
        username = challenge.bound_username or ""
        auth_token = None if is_admin_caller else self._validated_token(token, username)

        record = replace(
            self.rp.verify_registration_response(attestation), label=label
        )

        with self.store.transaction():
            account = self.account_by_username(username)
            if account is None:
                account = UserAccount(
                    user_id=record.user_id,
                    username=username,
                    display_name=username,
                    created_at=self.clock.now(),
                )
                with self._pending_lock:
                    self._pending_user_ids.pop(username.casefold(), None)
            elif account.user_id != record.user_id:
                raise InvalidRequest("username was claimed concurrently; retry registration")
            account.credentials.append(record)
            if auth_token is not None:
                self._consume_token(auth_token.token)
                if auth_token.grants_admin:
                    account.is_admin = True
            self.store.put(USERS, username.casefold(), account.to_doc())

        log.info(
            "credential registered: user=%s id=%s… discoverable=%s",
            username, b64url_encode(record.credential_id)[:12], record.discoverable,
        )
        return {
            "username": username,
            "credential_id": b64url_encode(record.credential_id),
            "discoverable": record.discoverable,
            "label": record.label,
            "created_at": record.created_at,
            "is_admin": account.is_admin,
        }

    def _consume_token(self, token_str: str) -> None:
        def bump(doc):
            if doc is None:
                raise Forbidden("unknown registration token")
            token = RegistrationToken.from_doc(doc)
            if not token.usable(self.clock.now()):
                raise TokenExpiredOrExhausted("registration token expired or exhausted")
            token.uses += 1
            return token.to_doc()

        self.store.update(REG_TOKENS, token_str, bump)

    # ------------------------------------------------------------------
    # admin surface

    def list_users(self, session: SessionRecord | None) -> list[dict[str, Any]]:
        self._require_admin(session)
        self.sweep()
        sessions_by_user: dict[str, list[SessionRecord]] = {}
        for _, doc in self.store.items(SESSIONS):
            record = SessionRecord.from_doc(doc)
            sessions_by_user.setdefault(record.user_id.hex(), []).append(record)
        out = []
        for _, doc in self.store.items(USERS):
            account = UserAccount.from_doc(doc)
            out.append(
                {
                    "username": account.username,
                    "display_name": account.display_name,
                    "is_admin": account.is_admin,
                    "credentials": [
                        {
                            "credential_id": b64url_encode(c.credential_id),
                            "label": c.label,
                            "discoverable": c.discoverable,
                            "sign_count": c.sign_count,
                            "created_at": c.created_at,
                        }
                        for c in account.credentials
                    ],
                    "active_sessions": [
                        {
                            "session_id": s.session_id,
                            "state": s.state.value,
                            "created_at": s.created_at,
                            "expires_at": s.expires_at,
                            "gateway_name": s.gateway_name,
                        }
                        for s in sessions_by_user.get(account.user_id.hex(), [])
                    ],
                }
            )
        return out

    def set_admin_role(
        self,
        session: SessionRecord | None,
        username: str,
        is_admin: bool,
    ) -> dict[str, Any]:
        self._require_admin(session)
        account = self.account_by_username(username)
        if account is None:
            raise NotFound(f"no account named {username!r}")
        if account.is_admin and not is_admin and self._admin_count() <= 1:
            raise LastAdminProtection("cannot demote the last admin")
        changed = account.is_admin != is_admin
        account.is_admin = is_admin
        self.store.put(USERS, username.casefold(), account.to_doc())

        renewed: dict[str, str] = {}
        if changed:
            # privilege change renews the session ids of the affected user
            with self.store.transaction():
                for key, doc in self.store.items(SESSIONS):
                    record = SessionRecord.from_doc(doc)
                    live = record.state in (SessionState.AUTHENTICATED, SessionState.AUTHORIZED)
                    if record.user_id == account.user_id and live:
                        new_id = self.rand(SESSION_ID_BYTES).hex()
                        renewed[record.session_id] = new_id
                        record.session_id = new_id
                        self.store.delete(SESSIONS, key)
                        self.store.put(SESSIONS, new_id, record.to_doc())
        log.info("role change: %s is_admin=%s", username, is_admin)
        return {"username": account.username, "is_admin": account.is_admin, "renewed_sessions": renewed}

    def create_registration_token(
        self,
        session: SessionRecord | None,
        ttl_seconds: float = DEFAULT_TOKEN_TTL,
        max_uses: int = 1,
    ) -> dict[str, Any]:
        account = self._require_admin(session)
        return self._issue_token(
            issued_by=account.user_id, ttl_seconds=ttl_seconds, max_uses=max_uses
        )

    def _issue_token(
        self,
        *,
        issued_by: bytes | None,
        ttl_seconds: float,
        max_uses: int,
        grants_admin: bool = False,
        locked_username: str | None = None,
    ) -> dict[str, Any]:
        if ttl_seconds <= 0:
            raise InvalidRequest("token ttl must be positive")
        if max_uses < 1:
            raise InvalidRequest("max_uses must be at least 1")
        token_value = self.rand(TOKEN_BYTES).hex()
        token = RegistrationToken(
            token=token_value,
            issued_by=issued_by,
            expires_at=self.clock.now() + ttl_seconds,
            max_uses=max_uses,
            qr_payload=f"{self.config.expected_origin}/portal?regtoken={token_value}",
            grants_admin=grants_admin,
            locked_username=locked_username,
        )
        self.store.put(REG_TOKENS, token.token, token.to_doc())
        log.info("registration token issued (max_uses=%d admin=%s)", max_uses, grants_admin)
        return token.to_doc()

    def bootstrap_admin_token(self, username: str, ttl_seconds: float = DEFAULT_TOKEN_TTL) -> dict[str, Any]:
        """One-time token granting admin on first registration; only before
        any admin exists (CLI bootstrap path)."""
        username = username.strip()
        if not username:
            raise InvalidRequest("username must be non-empty")
        if self._admin_count() > 0:
            raise AdminAlreadyExists("an admin account already exists")
        now = self.clock.now()
        for _, doc in self.store.items(REG_TOKENS):
            token = RegistrationToken.from_doc(doc)
            if token.grants_admin and token.usable(now):
                raise AdminAlreadyExists("an unused admin bootstrap token is outstanding")
        return self._issue_token(
            issued_by=None,
            ttl_seconds=ttl_seconds,
            max_uses=1,
            grants_admin=True,
            locked_username=username.casefold(),
        )

    # ------------------------------------------------------------------
    # Authmon dialogue

    def handle_authmon(self, body: str) -> tuple[int, str]:
        """One poll-dialogue exchange: (http_status, plain-text reply)."""
        try:
            message = parse_authmon_request(body)
        except FasError as exc:
            return 400, f"error: {exc.code}"
        self.sweep()
        with self.store.transaction():
            if message.verb is AuthmonVerb.CLEAR:
                count = self._reset_authorized()
                log.info("authmon clear: %d sessions back to pending", count)
                return 200, CONFIRM_ACK
            if message.verb is AuthmonVerb.LIST:
                pending = self._pending_sessions()
                text = render_auth_list([s.rhid for s in pending])
                # legacy send-and-clear: the listing itself is the authorization
                for session in pending:
                    session.state = SessionState.AUTHORIZED
                    self.store.put(SESSIONS, session.session_id, session.to_doc())
                log.info("authmon list: sent and cleared %d sessions", len(pending))
                return 200, text
            rhid = confirmation_rhid(message)
            if rhid is None:
                pending = self._pending_sessions()
                return 200, render_auth_list([s.rhid for s in pending])
            return 200, self._confirm_session(rhid)

    def _pending_sessions(self) -> list[SessionRecord]:
        out = []
        for _, doc in self.store.items(SESSIONS):
            record = SessionRecord.from_doc(doc)
            if record.state is SessionState.AUTHENTICATED:
                out.append(record)
        return out

    def _reset_authorized(self) -> int:
        count = 0
        for key, doc in self.store.items(SESSIONS):
            record = SessionRecord.from_doc(doc)
            if record.state is SessionState.AUTHORIZED:
                record.state = SessionState.AUTHENTICATED
                self.store.put(SESSIONS, key, record.to_doc())
                count += 1
        return count

    def _confirm_session(self, rhid: str) -> str:
        match: SessionRecord | None = None
        for _, doc in self.store.items(SESSIONS):
            record = SessionRecord.from_doc(doc)
            if hmac.compare_digest(record.rhid, rhid):
                match = record
                break
        if match is None:
            return CONFIRM_NAK
        if match.state is SessionState.AUTHORIZED:
            return CONFIRM_ACK  # duplicate confirmation, harmless
        if match.state is not SessionState.AUTHENTICATED:
            return CONFIRM_NAK  # revoked or expired: gateway must deauthorize
        match.state = SessionState.AUTHORIZED
        self.store.put(SESSIONS, match.session_id, match.to_doc())
        log.info("authmon confirm: session %s… authorized", match.session_id[:8])
        return CONFIRM_ACK

    # ------------------------------------------------------------------
    # expiry

    def sweep(self, now: float | None = None) -> int:
        """Expire overdue sessions; drop expired/revoked ones past retention.
        Idempotent: a second sweep at the same instant is a no-op."""
        now = self.clock.now() if now is None else now
        expired = 0
        with self.store.transaction():
            for key, doc in self.store.items(SESSIONS):
                record = SessionRecord.from_doc(doc)
                live = record.state in (SessionState.AUTHENTICATED, SessionState.AUTHORIZED)
                if live and now > record.expires_at:
                    record.state = SessionState.EXPIRED
                    self.store.put(SESSIONS, key, record.to_doc())
                    expired += 1
                elif record.state in (SessionState.EXPIRED, SessionState.REVOKED):
                    if now > record.expires_at + self.config.retention_seconds:
                        self.store.delete(SESSIONS, key)
        if expired:
            log.info("expiry sweep: %d sessions expired", expired)
        return expired


def _mask_ip(ip: str) -> str:
    if not ip:
        return ""
    if "." in ip:
        parts = ip.split(".")
        parts[-1] = "***"
        return ".".join(parts)
    if ":" in ip:
        groups = ip.split(":")
        return ":".join(groups[:2]) + "::***"
    return "***"
