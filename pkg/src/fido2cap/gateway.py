"""Simulated captive-portal gateway: enforcement device, provisioning
service and the Authmon polling client.

The enforcement device is a state machine over (client, destination)
queries rather than a packet filter; every protocol property is assertable
against it while staying OS-independent. The poll cycle speaks the
fas-protocol wire format against any transport — in-process against a
WawaService instance, or HTTP against a deployed portal.

Each cycle does three things: fetch the pending list (view "*"), authorize
and confirm newly listed clients (view "* <rhid>"), and re-confirm every
already-authorized client as a keep-alive — a nak reply means the portal
no longer vouches for that session (logout, expiry, restart), so the
client goes captive again within one poll interval.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable
from urllib.parse import quote, urlsplit

from .clock import SystemClock
from .entropy import RandomSource, system_random
from .fas import (
    CONFIRM_ACK,
    AuthmonMessage,
    AuthmonVerb,
    FasError,
    FasParams,
    FasSharedConfig,
    compute_rhid,
    encrypt_fas_blob,
    parse_auth_list,
)

log = logging.getLogger("fido2cap.gateway")

# transport: POST body -> (http status, response text)
AuthmonTransport = Callable[[str], tuple[int, str]]

DEFAULT_POLL_INTERVAL = 2.0


class GatewayError(Exception):
    pass


class UnknownClient(GatewayError):
    pass


class GatewayTransportError(GatewayError):
    pass


@dataclass(frozen=True)
class GatewayConfig:
    fas: FasSharedConfig
    poll_interval: float = DEFAULT_POLL_INTERVAL
    gateway_name: str = "gateway"

    def __post_init__(self):
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be positive")


class ClientState(str, enum.Enum):
    CAPTIVE = "captive"
    PORTAL_SERVED = "portal_served"
    AUTHORIZED = "authorized"
    EXPIRED = "expired"


@dataclass
class ClientRecord:
    mac: str
    ip: str
    hid: str
    state: ClientState
    original_url: str = ""
    attached_at: float = 0.0
    authorized_at: float | None = None
    expires_at: float | None = None
    hid_stale: bool = False

    @property
    def is_captive(self) -> bool:
        return self.state is not ClientState.AUTHORIZED


@dataclass
class PollCycleResult:
    listed: list[str] = field(default_factory=list)
    confirmed: list[str] = field(default_factory=list)
    deauthorized: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def skipped(self) -> bool:
        return bool(self.errors) and not self.listed and not self.confirmed


def in_process_transport(service) -> AuthmonTransport:
    """Bind the Authmon client directly to a WawaService instance."""

    def post(body: str) -> tuple[int, str]:
        return service.handle_authmon(body)

    return post


def http_transport(base_url: str, client=None, shared_secret: str | None = None) -> AuthmonTransport:
    """Authmon over HTTP for deployed portals."""
    import httpx

    http = client if client is not None else httpx.Client(timeout=10.0)
    headers = {"content-type": "application/x-www-form-urlencoded"}
    if shared_secret is not None:
        headers["x-authmon-secret"] = shared_secret

    def post(body: str) -> tuple[int, str]:
        try:
            reply = http.post(f"{base_url.rstrip('/')}/fas", content=body, headers=headers)
        except httpx.HTTPError as exc:
            raise GatewayTransportError(str(exc)) from exc
        return reply.status_code, reply.text

    return post


class GatewaySim:
    """One gateway instance; several may share a portal (multi-gateway)."""

    def __init__(
        self,
        config: GatewayConfig,
        transport: AuthmonTransport,
        clock=None,
        rand: RandomSource = system_random,
    ):
        self.config = config
        self.clock = clock if clock is not None else SystemClock()
        self._rand = rand
        self._transport = transport
        self._clients: dict[str, ClientRecord] = {}
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # client lifecycle

    def client_attach(
        self,
        mac: str,
        ip: str,
        original_url: str = "http://detectportal.example/",
    ) -> tuple[ClientRecord, str]:
        """Register an attaching client; returns its record and the captive
        redirect URL (fresh hid, fresh blob per attachment)."""
        mac = mac.lower()
        with self._lock:
            record = ClientRecord(
                mac=mac,
                ip=ip,
                hid=self._mint_hid(mac),
                state=ClientState.CAPTIVE,
                original_url=original_url,
                attached_at=self.clock.now(),
            )
            self._clients[mac] = record
            url = self._redirect_url(record)
        log.info("client %s attached (hid=%s…)", mac, record.hid[:8])
        return record, url

    def _mint_hid(self, mac: str) -> str:
        # hashed id: client identity plus a per-attachment nonce
        return hashlib.sha256(mac.encode("utf-8") + self._rand(16)).hexdigest()

    def _redirect_url(self, record: ClientRecord) -> str:
        params = FasParams(
            hid=record.hid,
            client_ip=record.ip,
            client_mac=record.mac,
            gateway_name=self.config.gateway_name,
            original_url=record.original_url,
        )
        blob = encrypt_fas_blob(params, self.config.fas, self._rand)
        return (
            f"https://{self.config.fas.fas_fqdn}:{self.config.fas.fas_port}"
            f"/portal?fas={quote(blob, safe='')}"
        )

    def _require(self, mac: str) -> ClientRecord:
        record = self._clients.get(mac.lower())
        if record is None:
            raise UnknownClient(f"no attached client {mac!r}")
        return record

    def _refresh_for_portal(self, record: ClientRecord) -> None:
        # a client coming back after expiry (or deauth) gets a fresh hid
        if record.hid_stale or record.state is ClientState.EXPIRED:
            record.hid = self._mint_hid(record.mac)
            record.hid_stale = False
        record.state = ClientState.PORTAL_SERVED

    def captivity_status(self, mac: str) -> dict:
        """RFC 8908-shaped captive-portal API document."""
        with self._lock:
            record = self._require(mac)
            if record.state is ClientState.AUTHORIZED:
                remaining = max(0, int((record.expires_at or 0) - self.clock.now()))
                return {"captive": False, "seconds-remaining": remaining}
            self._refresh_for_portal(record)
            return {"captive": True, "user-portal-url": self._redirect_url(record)}

    def enforcement_check(self, mac: str, destination: str) -> dict:
        """allow / deny-with-redirect for one (client, destination) query.
        The portal host itself is always reachable (firewall whitelist)."""
        with self._lock:
            record = self._require(mac)
            if record.state is ClientState.AUTHORIZED:
                return {"allow": True, "redirect_url": None}
            host = urlsplit(destination).hostname if "//" in destination else destination.split(":")[0]
            if host == self.config.fas.fas_fqdn:
                return {"allow": True, "redirect_url": None}
            self._refresh_for_portal(record)
            return {"allow": False, "redirect_url": self._redirect_url(record)}

    def client(self, mac: str) -> ClientRecord:
        with self._lock:
            return self._require(mac)

    # ------------------------------------------------------------------
    # Authmon polling client

    def _post(self, message: AuthmonMessage) -> tuple[int, str]:
        try:
            return self._transport(message.to_body())
        except GatewayTransportError:
            raise
        except Exception as exc:
            raise GatewayTransportError(str(exc)) from exc

    def authmon_poll_cycle(self) -> PollCycleResult:
        """One poll: list pending clients, authorize + confirm matches, then
        keep-alive-confirm existing authorizations (nak deauthorizes)."""
        result = PollCycleResult()
        try:
            status, text = self._post(AuthmonMessage(AuthmonVerb.VIEW, "*"))
        except GatewayTransportError as exc:
            result.errors.append(f"view: {exc}")
            log.warning("poll cycle skipped: %s", exc)
            return result
        if status != 200:
            result.errors.append(f"view: http {status}")
            return result
        try:
            rhids = parse_auth_list(text)
        except FasError as exc:
            result.errors.append(f"view: {exc.code}")
            return result
        result.listed = list(rhids)

        now = self.clock.now()
        with self._lock:
            awaiting = {
                compute_rhid(rec.hid, self.config.fas): rec
                for rec in self._clients.values()
                if rec.state is not ClientState.AUTHORIZED and not rec.hid_stale
            }
            newly_authorized: list[tuple[str, ClientRecord]] = []
            for rhid in rhids:
                record = awaiting.get(rhid)
                if record is None:
                    log.info("listed rhid %s… matches no local client", rhid[:8])
                    continue
                record.state = ClientState.AUTHORIZED
                record.authorized_at = now
                record.expires_at = now + self.config.fas.session_timeout
                newly_authorized.append((rhid, record))
            new_ids = {id(rec) for _, rec in newly_authorized}
            keepalive = [
                (compute_rhid(rec.hid, self.config.fas), rec)
                for rec in self._clients.values()
                if rec.state is ClientState.AUTHORIZED and id(rec) not in new_ids
            ]

        for rhid, record in newly_authorized:
            try:
                _, reply = self._post(AuthmonMessage(AuthmonVerb.VIEW, f"* {rhid}"))
            except GatewayTransportError as exc:
                # at-least-once: the keep-alive phase of a later cycle retries
                result.errors.append(f"confirm {rhid[:8]}: {exc}")
                continue
            result.confirmed.append(rhid)
            log.info("client %s authorized (reply=%s)", record.mac, reply.strip())

        for rhid, record in keepalive:
            try:
                _, reply = self._post(AuthmonMessage(AuthmonVerb.VIEW, f"* {rhid}"))
            except GatewayTransportError as exc:
                result.errors.append(f"keepalive {rhid[:8]}: {exc}")
                continue
            if reply.strip() != CONFIRM_ACK:
                with self._lock:
                    record.state = ClientState.CAPTIVE
                    record.authorized_at = None
                    record.expires_at = None
                    record.hid_stale = True
                result.deauthorized.append(rhid)
                log.info("client %s deauthorized (portal replied %s)", record.mac, reply.strip())
        return result

    def boot(self, retries: int = 5) -> None:
        """Gateway boot: reset the portal's pending list and go captive.
        Client records (and their hids) survive so still-valid sessions are
        re-listed and re-authorized on the next cycles."""
        attempt = 0
        while True:
            try:
                status, _ = self._post(AuthmonMessage(AuthmonVerb.CLEAR))
                if status == 200:
                    break
                raise GatewayTransportError(f"clear: http {status}")
            except GatewayTransportError:
                attempt += 1
                if attempt >= retries:
                    raise
                self.clock.sleep(self.config.poll_interval)
        with self._lock:
            for record in self._clients.values():
                record.state = ClientState.CAPTIVE
                record.authorized_at = None
                record.expires_at = None
        log.info("gateway booted: %d clients captive", len(self._clients))

    def expiry_tick(self, now: float | None = None) -> list[str]:
        """Local expiry enforcement, synchronized with the portal timeout."""
        now = self.clock.now() if now is None else now
        expired = []
        with self._lock:
            for record in self._clients.values():
                if (
                    record.state is ClientState.AUTHORIZED
                    and record.expires_at is not None
                    and now >= record.expires_at
                ):
                    record.state = ClientState.EXPIRED
                    record.hid_stale = True  # next portal contact mints a new hid
                    record.authorized_at = None
                    record.expires_at = None
                    expired.append(record.mac)
        if expired:
            log.info("gateway expiry: %s back to captive", ", ".join(expired))
        return expired
