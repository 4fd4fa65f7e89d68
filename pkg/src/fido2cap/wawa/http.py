"""HTTP surface of the portal service (FastAPI).

JSON everywhere except the Authmon endpoint, which speaks the OpenNDS
dialect: form-encoded request body, plain-text response. The portal entry
point is an HTML shell embedding the bootstrap context for the browser
client; ceremony traffic goes through the /api routes.
"""

from __future__ import annotations

import json
import threading
from typing import Any, Mapping

from fastapi import FastAPI, Request, Response
from fastapi.responses import HTMLResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

from ..fas import FasError
from ..webauthn.errors import WebAuthnError
from .service import ServiceError, WawaService

SESSION_COOKIE = "wawa_session"
AUTHMON_SECRET_HEADER = "x-authmon-secret"

_PORTAL_TEMPLATE = """<!DOCTYPE html>
<html lang="en">
<head><meta charset="utf-8"><title>Network sign-in</title></head>
<body>
<h1>Network sign-in</h1>
<div id="portal-root">{body}</div>
<script id="portal-context" type="application/json">{context}</script>
<script src="/static/portal.js" defer></script>
</body>
</html>
"""

_DEGRADED_BODY = (
    "<p>We cannot identify your network session. Reconnect to the network "
    "and follow the sign-in prompt, or contact the network operator.</p>"
)


class _RateLimiter:
    """Per-source token bucket; generous by default, just enough to blunt
    brute-force probing of the unauthenticated Authmon endpoint."""

    def __init__(self, per_minute: int, clock):
        self.rate = per_minute / 60.0
        self.capacity = float(max(per_minute, 1))
        self._clock = clock
        self._buckets: dict[str, tuple[float, float]] = {}
        self._lock = threading.Lock()

    def allow(self, key: str) -> bool:
        now = self._clock.now()
        with self._lock:
            tokens, last = self._buckets.get(key, (self.capacity, now))
            tokens = min(self.capacity, tokens + (now - last) * self.rate)
            if tokens < 1.0:
                self._buckets[key] = (tokens, now)
                return False
            self._buckets[key] = (tokens - 1.0, now)
            return True


class AuthOptionsBody(BaseModel):
    username: str | None = None
    fas: str | None = None


class AuthVerifyBody(BaseModel):
    assertion: dict


class RegisterOptionsBody(BaseModel):
    username: str
    label: str = ""  # advisory here; the label lands on the record at verify
    token: str | None = None


class RegisterVerifyBody(BaseModel):
    attestation: dict
    token: str | None = None
    label: str = ""


class AdminRoleBody(BaseModel):
    is_admin: bool


class RegTokenBody(BaseModel):
    ttl_seconds: float = 600.0
    max_uses: int = 1


def create_app(
    service: WawaService,
    gateways: Mapping[str, Any] | None = None,
) -> FastAPI:
    """Build the FastAPI app. `gateways` optionally maps gateway names to
    GatewaySim instances for the loopback captive-portal facade."""
    app = FastAPI(title="fido2cap portal", docs_url=None, redoc_url=None)
    limiter = _RateLimiter(service.config.authmon_rate_limit_per_minute, service.clock)

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": exc.code, "message": str(exc)},
        )

    @app.exception_handler(WebAuthnError)
    async def _webauthn_error(request: Request, exc: WebAuthnError):
        return JSONResponse(
            status_code=400,
            content={"error": exc.code, "message": str(exc)},
        )

    @app.exception_handler(FasError)
    async def _fas_error(request: Request, exc: FasError):
        return JSONResponse(
            status_code=400,
            content={"error": exc.code, "message": str(exc)},
        )

    def _session(request: Request):
        return service.get_live_session(request.cookies.get(SESSION_COOKIE))

    # -- portal

    @app.get("/portal", response_class=HTMLResponse)
    async def portal(request: Request) -> HTMLResponse:
        context = service.portal_context(request.query_params.get("fas"))
        body = "<p>Sign in with your security key to join the network.</p>"
        if not context["ok"]:
            body = _DEGRADED_BODY
        return HTMLResponse(
            _PORTAL_TEMPLATE.format(body=body, context=json.dumps(context))
        )

    @app.get("/api/portal/context")
    async def portal_context(request: Request) -> dict:
        return service.portal_context(request.query_params.get("fas"))

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok"}

    # -- authentication

    @app.post("/api/auth/options")
    async def auth_options(body: AuthOptionsBody) -> dict:
        return service.auth_options(body.username, body.fas)

    @app.post("/api/auth/verify")
    async def auth_verify(body: AuthVerifyBody, response: Response) -> dict:
        result = service.auth_verify(body.assertion)
        response.set_cookie(
            SESSION_COOKIE,
            result["session_id"],
            max_age=int(service.config.session_timeout_seconds),
            httponly=True,
            samesite="lax",
        )
        return result

    @app.post("/api/logout")
    async def logout(request: Request, response: Response) -> dict:
        result = service.logout(request.cookies.get(SESSION_COOKIE))
        response.delete_cookie(SESSION_COOKIE)
        return result

    # -- registrar / admin

    @app.post("/api/admin/register/options")
    async def register_options(body: RegisterOptionsBody, request: Request) -> dict:
        return service.register_options(_session(request), body.username, token=body.token)

    @app.post("/api/admin/register/verify")
    async def register_verify(body: RegisterVerifyBody, request: Request) -> dict:
        return service.register_verify(
            _session(request), body.attestation, token=body.token, label=body.label
        )

    @app.get("/api/admin/users")
    async def admin_users(request: Request) -> list:
        return service.list_users(_session(request))

    @app.post("/api/admin/users/{username}/admin")
    async def admin_role(username: str, body: AdminRoleBody, request: Request, response: Response) -> dict:
        result = service.set_admin_role(_session(request), username, body.is_admin)
        current = request.cookies.get(SESSION_COOKIE)
        renewed = result.get("renewed_sessions", {})
        if current in renewed:
            response.set_cookie(
                SESSION_COOKIE,
                renewed[current],
                max_age=int(service.config.session_timeout_seconds),
                httponly=True,
                samesite="lax",
            )
        return result

    @app.post("/api/admin/regtoken")
    async def regtoken(body: RegTokenBody, request: Request) -> dict:
        return service.create_registration_token(
            _session(request), ttl_seconds=body.ttl_seconds, max_uses=body.max_uses
        )

    # -- Authmon (form-encoded request, plain-text response)

    @app.post("/fas", response_class=PlainTextResponse)
    async def authmon(request: Request) -> PlainTextResponse:
        source = request.client.host if request.client else "unknown"
        if not limiter.allow(source):
            return PlainTextResponse("error: rate_limited", status_code=429)
        secret = service.config.authmon_shared_secret
        if secret is not None and request.headers.get(AUTHMON_SECRET_HEADER) != secret:
            return PlainTextResponse("error: forbidden", status_code=403)
        body = (await request.body()).decode("utf-8", errors="replace")
        status, text = service.handle_authmon(body)
        return PlainTextResponse(text, status_code=status)

    # -- optional loopback captive-portal facade (RFC 8908-shaped document)

    if gateways:
        @app.get("/captive/{gateway_name}/{mac}")
        async def captive_status(gateway_name: str, mac: str) -> Response:
            gateway = gateways.get(gateway_name)
            if gateway is None:
                return JSONResponse(status_code=404, content={"error": "unknown_gateway"})
            try:
                document = gateway.captivity_status(mac)
            except Exception:
                return JSONResponse(status_code=404, content={"error": "unknown_client"})
            return Response(
                content=json.dumps(document),
                media_type="application/captive+json",
            )

    return app
