"""Live end-to-end drive over real sockets.

Boots the served stack the way an operator would — CLI bootstrap against a
persistent store, uvicorn on a real port, a gateway speaking HTTP to the
Authmon endpoint — and walks one full lifecycle: register, captive
redirect, authenticate, authorize, logout, deauthorize.
"""

import json
import threading
import time
from urllib.parse import parse_qs, urlsplit

import httpx
import pytest
import uvicorn
from click.testing import CliRunner

from fido2cap.authenticator import SoftAuthenticator
from fido2cap.cli import main
from fido2cap.entropy import seeded_random
from fido2cap.gateway import GatewayConfig, GatewaySim, http_transport
from fido2cap.wawa.config import load_config
from fido2cap.wawa.http import SESSION_COOKIE, create_app
from fido2cap.wawa.service import WawaService

RP_ID = "wawa.example"
ORIGIN = "https://wawa.example"


@pytest.fixture
def live_stack(tmp_path):
    config_doc = {
        "rp_id": RP_ID,
        "expected_origin": ORIGIN,
        "fas_key": "42" * 32,
        "fas_fqdn": RP_ID,
        "fas_port": 443,
        "session_timeout_seconds": 600,
        "store_path": str(tmp_path / "store.json"),
    }
    config_path = tmp_path / "wawa.json"
    config_path.write_text(json.dumps(config_doc))

    # operator bootstrap before the service starts
    runner = CliRunner()
    bootstrap = runner.invoke(main, ["bootstrap-admin", "boss", "--config", str(config_path)])
    assert bootstrap.exit_code == 0, bootstrap.output
    token = next(
        line.split(": ", 1)[1] for line in bootstrap.output.splitlines()
        if line.startswith("token: ")
    )

    config = load_config(str(config_path))
    service = WawaService(config)
    server = uvicorn.Server(uvicorn.Config(
        create_app(service), host="127.0.0.1", port=0, log_level="error"
    ))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            pytest.fail("server did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    base = f"http://127.0.0.1:{port}"
    try:
        yield base, token, config
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def test_full_lifecycle_over_http(live_stack):
    base, token, config = live_stack
    http = httpx.Client(base_url=base, timeout=10.0)
    authenticator = SoftAuthenticator(rand=seeded_random(7777))

    # self-registration with the bootstrap token makes boss an admin
    options = http.post(
        "/api/admin/register/options", json={"username": "boss", "token": token}
    )
    assert options.status_code == 200, options.text
    attestation = authenticator.create_from_options(options.json(), ORIGIN, resident=True)
    created = http.post(
        "/api/admin/register/verify",
        json={"attestation": attestation, "token": token, "label": "boss key"},
    )
    assert created.status_code == 200, created.text
    assert created.json()["is_admin"] is True

    # a gateway reaches the portal over real HTTP
    gateway = GatewaySim(
        GatewayConfig(fas=config.fas, poll_interval=0.2, gateway_name="gw-live"),
        http_transport(base),
        rand=seeded_random(7778),
    )
    mac = "02:00:00:00:77:01"
    _, redirect = gateway.client_attach(mac, "10.9.0.2")
    blob = parse_qs(urlsplit(redirect).query)["fas"][0]

    portal = http.get("/portal", params={"fas": blob})
    assert portal.status_code == 200 and "portal-context" in portal.text

    # discoverable login bound to the gateway hid
    auth_options = http.post("/api/auth/options", json={"fas": blob})
    assert auth_options.status_code == 200, auth_options.text
    assertion = authenticator.assert_from_options(auth_options.json(), ORIGIN)
    verified = http.post("/api/auth/verify", json={"assertion": assertion})
    assert verified.status_code == 200, verified.text
    assert verified.json()["username"] == "boss"
    session_cookie = verified.cookies[SESSION_COOKIE]

    # the poll cycle authorizes the client through the /fas endpoint
    result = gateway.authmon_poll_cycle()
    assert len(result.confirmed) == 1, result
    assert not gateway.client(mac).is_captive

    # admin API sees the authorized session
    http.cookies.set(SESSION_COOKIE, session_cookie)
    users = http.get("/api/admin/users")
    assert users.status_code == 200
    boss = next(u for u in users.json() if u["username"] == "boss")
    assert any(s["state"] == "authorized" for s in boss["active_sessions"])

    # logout deauthorizes within one poll cycle
    assert http.post("/api/logout").status_code == 200
    result = gateway.authmon_poll_cycle()
    assert len(result.deauthorized) == 1
    assert gateway.client(mac).is_captive
