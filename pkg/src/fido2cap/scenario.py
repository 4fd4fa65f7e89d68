"""Scripted end-to-end scenario runs over the in-process stack.

A scenario is an ordered list of steps, each naming an actor, an action
from the registry, static params, and a machine-checkable expectation
(a subset-match dict or a predicate). The runner executes steps in order
against a virtual clock, emits one transcript line per step with a stable
field order, and stops at the first failure.

`run_hotel_demo` builds the canonical scenario: a front-desk registrar
bootstraps the portal, registers one discoverable and one non-discoverable
key for a guest, and the guest's devices traverse the full lifecycle —
captive redirect, both authentication paths, gateway authorization, logout
and expiry.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping
from urllib.parse import parse_qs, urlsplit

from .authenticator import SoftAuthenticator
from .clock import VirtualClock
from .entropy import seeded_random
from .fas import FasSharedConfig
from .gateway import GatewayConfig, GatewaySim, in_process_transport
from .wawa.config import WawaConfig
from .wawa.service import WawaService

ACTORS = frozenset({"admin", "user", "gateway", "authenticator"})


@dataclass(frozen=True)
class ScenarioStep:
    actor: str
    action: str
    params: Mapping[str, Any] = field(default_factory=dict)
    expect: Any = None  # Mapping subset-match, callable predicate, or None


@dataclass(frozen=True)
class ScenarioScript:
    actors: frozenset[str]
    steps: tuple[ScenarioStep, ...]

    def validate(self) -> None:
        for step in self.steps:
            if step.actor not in self.actors:
                raise ValueError(f"step {step.action!r} references undeclared actor {step.actor!r}")
            if step.expect is not None and not (
                isinstance(step.expect, Mapping) or callable(step.expect)
            ):
                raise ValueError(f"step {step.action!r} expectation is not machine-checkable")


@dataclass
class StepOutcome:
    t: float
    actor: str
    action: str
    status: str  # PASS | FAIL | SKIP
    detail: str

    def line(self) -> str:
        return f"t={self.t:9.3f} {self.actor:<9} {self.action:<22} {self.status:<4} {self.detail}"


@dataclass
class ScenarioResult:
    passed: bool
    outcomes: list[StepOutcome]

    @property
    def transcript(self) -> str:
        return "\n".join(o.line() for o in self.outcomes)

    @property
    def failures(self) -> list[StepOutcome]:
        return [o for o in self.outcomes if o.status == "FAIL"]


def _matches(expect: Any, result: Any) -> tuple[bool, str]:
    if expect is None:
        return True, ""
    if callable(expect):
        return bool(expect(result)), "predicate"
    if not isinstance(result, Mapping):
        return False, f"expected mapping result, got {type(result).__name__}"
    for key, wanted in expect.items():
        if key not in result:
            return False, f"missing {key}"
        if result[key] != wanted:
            return False, f"{key}={result[key]!r} wanted {wanted!r}"
    return True, ""


class ScenarioRunner:
    """Executes a script against an actor->action->callable registry."""

    def __init__(
        self,
        actions: Mapping[str, Mapping[str, Callable[..., Any]]],
        clock,
        out: io.TextIOBase | None = None,
    ):
        self._actions = actions
        self._clock = clock
        self._out = out

    def run(self, script: ScenarioScript) -> ScenarioResult:
        script.validate()
        outcomes: list[StepOutcome] = []
        failed = False
        for step in script.steps:
            if failed:
                outcomes.append(self._emit(step, "SKIP", "previous step failed"))
                continue
            action = self._actions.get(step.actor, {}).get(step.action)
            if action is None:
                outcomes.append(self._emit(step, "FAIL", "unknown action"))
                failed = True
                continue
            try:
                result = action(**step.params)
            except Exception as exc:
                outcomes.append(self._emit(step, "FAIL", f"{type(exc).__name__}: {exc}"))
                failed = True
                continue
            ok, why = _matches(step.expect, result)
            if ok:
                outcomes.append(self._emit(step, "PASS", _summary(result)))
            else:
                outcomes.append(self._emit(step, "FAIL", why))
                failed = True
        return ScenarioResult(passed=not failed, outcomes=outcomes)

    def _emit(self, step: ScenarioStep, status: str, detail: str) -> StepOutcome:
        outcome = StepOutcome(
            t=self._clock.now(),
            actor=step.actor,
            action=step.action,
            status=status,
            detail=detail,
        )
        if self._out is not None:
            self._out.write(outcome.line() + "\n")
        return outcome


def _summary(result: Any) -> str:
    if isinstance(result, Mapping):
        parts = [f"{k}={result[k]}" for k in sorted(result)]
        return " ".join(parts)[:100]
    return str(result)[:100]


# ---------------------------------------------------------------------------
# the hotel scenario


class HotelWorld:
    """All components of the mock hotel deployment plus per-run state."""

    RP_ID = "wawa.example"
    ORIGIN = "https://wawa.example"

    def __init__(
        self,
        seed: int,
        poll_interval: float,
        session_timeout: float,
        gateway_fas_key: bytes | None = None,
    ):
        self.clock = VirtualClock()
        self.rand = seeded_random(seed)
        fas_key = self.rand(32)
        self.config = WawaConfig(
            rp_id=self.RP_ID,
            expected_origin=self.ORIGIN,
            fas_key=fas_key,
            fas_fqdn=self.RP_ID,
            fas_port=443,
            session_timeout_seconds=session_timeout,
        )
        self.service = WawaService(self.config, clock=self.clock, rand=self.rand)
        gateway_fas = FasSharedConfig(
            fas_key=gateway_fas_key if gateway_fas_key is not None else fas_key,
            fas_fqdn=self.RP_ID,
            fas_port=443,
            session_timeout=session_timeout,
        )
        self.gateway = GatewaySim(
            GatewayConfig(fas=gateway_fas, poll_interval=poll_interval, gateway_name="hotel-lobby"),
            in_process_transport(self.service),
            clock=self.clock,
            rand=self.rand,
        )
        self.authenticators = {
            "front-desk-key": SoftAuthenticator(rand=self.rand),
            "guest-passkey": SoftAuthenticator(rand=self.rand),
            "guest-backup-key": SoftAuthenticator(rand=self.rand),
        }
        self.bootstrap_token: str | None = None
        self.redirects: dict[str, str] = {}  # client name -> portal redirect URL
        self.macs: dict[str, str] = {}
        self.sessions: dict[str, str] = {}  # client name -> session id

    # -- helpers

    def _blob(self, client: str) -> str:
        query = parse_qs(urlsplit(self.redirects[client]).query)
        return query["fas"][0]

    def _admin_session(self):
        return self.service.get_live_session(self.sessions.get("registrar-tablet"))

    # -- actions

    def issue_bootstrap_token(self, username: str) -> dict:
        doc = self.service.bootstrap_admin_token(username)
        self.bootstrap_token = doc["token"]
        return {"token_issued": True, "max_uses": doc["max_uses"]}

    def register_key(
        self,
        username: str,
        authenticator: str,
        resident: bool,
        label: str = "",
        use_bootstrap_token: bool = False,
    ) -> dict:
        token = self.bootstrap_token if use_bootstrap_token else None
        session = None if use_bootstrap_token else self._admin_session()
        options = self.service.register_options(session, username, token=token)
        response = self.authenticators[authenticator].create_from_options(
            options, self.ORIGIN, resident=resident
        )
        summary = self.service.register_verify(session, response, token=token, label=label)
        return {
            "username": summary["username"],
            "discoverable": summary["discoverable"],
            "is_admin": summary["is_admin"],
        }

    def attach_client(self, name: str, mac: str, ip: str) -> dict:
        record, url = self.gateway.client_attach(mac, ip, original_url="http://example.com/")
        self.redirects[name] = url
        self.macs[name] = mac
        return {"captive": record.is_captive, "redirect": bool(url)}

    def open_portal(self, client: str) -> dict:
        context = self.service.portal_context(self._blob(client))
        return {"ok": context["ok"], "gateway_name": context.get("gateway_name", "")}

    def authenticate(self, client: str, authenticator: str, username: str | None = None) -> dict:
        options = self.service.auth_options(username, self._blob(client))
        response = self.authenticators[authenticator].assert_from_options(options, self.ORIGIN)
        result = self.service.auth_verify(response)
        self.sessions[client] = result["session_id"]
        return {
            "username": result["username"],
            "allow_count": len(options["allowCredentials"]),
            "user_handle_sent": bool(response["response"]["userHandle"]),
        }

    def enforcement(self, client: str, destination: str) -> dict:
        decision = self.gateway.enforcement_check(self.macs[client], destination)
        return {"allow": decision["allow"]}

    def poll(self) -> dict:
        self.clock.advance(self.gateway.config.poll_interval)
        result = self.gateway.authmon_poll_cycle()
        return {
            "listed": len(result.listed),
            "confirmed": len(result.confirmed),
            "deauthorized": len(result.deauthorized),
        }

    def captivity(self, client: str) -> dict:
        document = self.gateway.captivity_status(self.macs[client])
        return {"captive": document["captive"]}

    def account_overview(self, username: str) -> dict:
        listing = self.service.list_users(self._admin_session())
        for entry in listing:
            if entry["username"] == username:
                live = [
                    s for s in entry["active_sessions"]
                    if s["state"] in ("authenticated", "authorized")
                ]
                return {"credentials": len(entry["credentials"]), "live_sessions": len(live)}
        return {"credentials": 0, "live_sessions": 0}

    def logout(self, client: str) -> dict:
        result = self.service.logout(self.sessions[client])
        return {"ok": result["ok"]}

    def session_check(self, client: str) -> dict:
        session = self.service.get_live_session(self.sessions.get(client))
        return {"live": session is not None}

    def advance_time(self, seconds: float) -> dict:
        self.clock.advance(seconds)
        return {"t": self.clock.now()}

    def expiry_tick(self) -> dict:
        return {"expired": len(self.gateway.expiry_tick())}


def build_hotel_script() -> ScenarioScript:
    steps = (
        # bootstrap: the front desk becomes registrar via a one-time token
        ScenarioStep("admin", "issue_bootstrap_token", {"username": "frontdesk"},
                     {"token_issued": True, "max_uses": 1}),
        ScenarioStep("authenticator", "register_key",
                     {"username": "frontdesk", "authenticator": "front-desk-key",
                      "resident": False, "label": "front desk",
                      "use_bootstrap_token": True},
                     {"username": "frontdesk", "is_admin": True}),
        # the registrar's tablet joins the network and signs in
        ScenarioStep("gateway", "attach_client",
                     {"name": "registrar-tablet", "mac": "02:00:00:00:00:01", "ip": "10.20.0.2"},
                     {"captive": True, "redirect": True}),
        ScenarioStep("user", "open_portal", {"client": "registrar-tablet"},
                     {"ok": True, "gateway_name": "hotel-lobby"}),
        ScenarioStep("user", "authenticate",
                     {"client": "registrar-tablet", "authenticator": "front-desk-key",
                      "username": "frontdesk"},
                     {"username": "frontdesk", "allow_count": 1}),
        ScenarioStep("gateway", "poll", {}, {"listed": 1, "confirmed": 1}),
        ScenarioStep("gateway", "enforcement",
                     {"client": "registrar-tablet", "destination": "https://example.com/"},
                     {"allow": True}),
        # guest check-in: one discoverable and one non-discoverable key
        ScenarioStep("admin", "register_key",
                     {"username": "alice", "authenticator": "guest-passkey",
                      "resident": True, "label": "room 312 passkey"},
                     {"username": "alice", "discoverable": True, "is_admin": False}),
        ScenarioStep("admin", "register_key",
                     {"username": "alice", "authenticator": "guest-backup-key",
                      "resident": False, "label": "room 312 backup"},
                     {"username": "alice", "discoverable": False}),
        ScenarioStep("admin", "account_overview", {"username": "alice"},
                     {"credentials": 2, "live_sessions": 0}),
        # guest laptop: discoverable path, no username typed
        ScenarioStep("gateway", "attach_client",
                     {"name": "guest-laptop", "mac": "02:00:00:00:00:02", "ip": "10.20.0.11"},
                     {"captive": True, "redirect": True}),
        ScenarioStep("gateway", "enforcement",
                     {"client": "guest-laptop", "destination": "https://example.com/"},
                     {"allow": False}),
        ScenarioStep("gateway", "enforcement",
                     {"client": "guest-laptop", "destination": "https://wawa.example:443/portal"},
                     {"allow": True}),
        ScenarioStep("user", "open_portal", {"client": "guest-laptop"},
                     {"ok": True}),
        ScenarioStep("user", "authenticate",
                     {"client": "guest-laptop", "authenticator": "guest-passkey"},
                     {"username": "alice", "allow_count": 0, "user_handle_sent": True}),
        ScenarioStep("gateway", "poll", {}, {"listed": 1, "confirmed": 1}),
        ScenarioStep("gateway", "captivity", {"client": "guest-laptop"}, {"captive": False}),
        ScenarioStep("gateway", "enforcement",
                     {"client": "guest-laptop", "destination": "https://example.com/"},
                     {"allow": True}),
        # guest phone: username + allow list, backup (non-resident) key
        ScenarioStep("gateway", "attach_client",
                     {"name": "guest-phone", "mac": "02:00:00:00:00:03", "ip": "10.20.0.12"},
                     {"captive": True, "redirect": True}),
        ScenarioStep("user", "open_portal", {"client": "guest-phone"}, {"ok": True}),
        ScenarioStep("user", "authenticate",
                     {"client": "guest-phone", "authenticator": "guest-backup-key",
                      "username": "alice"},
                     {"username": "alice", "allow_count": 2, "user_handle_sent": False}),
        ScenarioStep("gateway", "poll", {}, {"confirmed": 1}),
        ScenarioStep("gateway", "captivity", {"client": "guest-phone"}, {"captive": False}),
        ScenarioStep("admin", "account_overview", {"username": "alice"},
                     {"credentials": 2, "live_sessions": 2}),
        # logout returns the laptop to captivity within one poll
        ScenarioStep("user", "logout", {"client": "guest-laptop"}, {"ok": True}),
        ScenarioStep("gateway", "poll", {}, {"deauthorized": 1}),
        ScenarioStep("gateway", "captivity", {"client": "guest-laptop"}, {"captive": True}),
        ScenarioStep("gateway", "enforcement",
                     {"client": "guest-laptop", "destination": "https://example.com/"},
                     {"allow": False}),
        # expiry: both remaining authorizations lapse in lockstep
        ScenarioStep("gateway", "advance_time", {"seconds": 601.0}, None),
        ScenarioStep("gateway", "expiry_tick", {}, {"expired": 2}),
        ScenarioStep("gateway", "poll", {}, {"listed": 0, "confirmed": 0}),
        ScenarioStep("gateway", "captivity", {"client": "guest-phone"}, {"captive": True}),
        # the registrar's web session lapsed together with the network one
        ScenarioStep("admin", "session_check", {"client": "registrar-tablet"},
                     {"live": False}),
    )
    return ScenarioScript(actors=ACTORS, steps=steps)


def run_hotel_demo(
    seed: int = 2024,
    poll_interval: float = 2.0,
    session_timeout: float = 600.0,
    out: io.TextIOBase | None = None,
    gateway_fas_key: bytes | None = None,
) -> ScenarioResult:
    """Run the mock-hotel scenario end to end on a virtual clock."""
    world = HotelWorld(
        seed=seed,
        poll_interval=poll_interval,
        session_timeout=session_timeout,
        gateway_fas_key=gateway_fas_key,
    )
    actions = {
        "admin": {
            "issue_bootstrap_token": world.issue_bootstrap_token,
            "register_key": world.register_key,
            "account_overview": world.account_overview,
            "session_check": world.session_check,
        },
        "user": {
            "open_portal": world.open_portal,
            "authenticate": world.authenticate,
            "logout": world.logout,
        },
        "gateway": {
            "attach_client": world.attach_client,
            "enforcement": world.enforcement,
            "poll": world.poll,
            "captivity": world.captivity,
            "advance_time": world.advance_time,
            "expiry_tick": world.expiry_tick,
        },
        "authenticator": {
            "register_key": world.register_key,
        },
    }
    runner = ScenarioRunner(actions, world.clock, out=out)
    script = build_hotel_script()
    # session_timeout shorter than the scripted advance would change the
    # expiry expectations; scale the advance step instead of failing oddly
    if session_timeout != 600.0:
        steps = tuple(
            ScenarioStep(s.actor, s.action, {"seconds": session_timeout + 1.0}, s.expect)
            if s.action == "advance_time" else s
            for s in script.steps
        )
        script = ScenarioScript(actors=script.actors, steps=steps)
    return runner.run(script)
