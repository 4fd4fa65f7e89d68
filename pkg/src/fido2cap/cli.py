"""Operator command line: config validation, scenario runs, admin
bootstrap and the HTTP service.

Exit codes: 0 success, 1 expectation/precondition failure, 2 config error.
"""

from __future__ import annotations

import json
import logging
import sys
import threading

import click

from .scenario import run_hotel_demo
from .wawa.config import ConfigError, decode_fas_key, load_config
from .wawa.service import AdminAlreadyExists, WawaService

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_CONFIG = 2


@click.group()
def main() -> None:
    """FIDO2 captive-portal authentication stack."""


# ---------------------------------------------------------------------------
# check-config


def _load_raw(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _key_diag(raw: dict, side: str) -> tuple[bytes | None, str]:
    text = raw.get("fas_key")
    if text is None:
        return None, f"{side} has no fas_key"
    try:
        return decode_fas_key(str(text)), ""
    except ConfigError as exc:
        return None, f"{side}: {exc}"


def check_clauses(wawa_raw: dict, gateway_raw: dict) -> list[tuple[str, bool, str]]:
    """The four deployment-compatibility clauses; (name, passed, detail)."""
    clauses: list[tuple[str, bool, str]] = []

    wawa_addr = f"{wawa_raw.get('advertise_ip')}:{wawa_raw.get('fas_port')}"
    gw_addr = f"{gateway_raw.get('fas_remote_ip')}:{gateway_raw.get('fas_port')}"
    clauses.append((
        "FAS address:port",
        wawa_addr == gw_addr,
        f"wawa={wawa_addr} gateway={gw_addr}",
    ))

    wawa_fqdn = wawa_raw.get("fas_fqdn")
    gw_fqdn = gateway_raw.get("fas_fqdn")
    clauses.append((
        "FAS FQDN",
        bool(wawa_fqdn) and wawa_fqdn == gw_fqdn,
        f"wawa={wawa_fqdn} gateway={gw_fqdn}",
    ))

    wawa_key, wawa_err = _key_diag(wawa_raw, "wawa")
    gw_key, gw_err = _key_diag(gateway_raw, "gateway")
    if wawa_err or gw_err:
        clauses.append(("shared 32-byte key", False, "; ".join(x for x in (wawa_err, gw_err) if x)))
    else:
        clauses.append((
            "shared 32-byte key",
            wawa_key == gw_key,
            "keys match" if wawa_key == gw_key else "keys differ",
        ))

    wawa_timeout = wawa_raw.get("session_timeout_seconds")
    gw_timeout = gateway_raw.get("session_timeout_seconds")
    clauses.append((
        "session timeout",
        wawa_timeout is not None and wawa_timeout == gw_timeout,
        f"wawa={wawa_timeout}s gateway={gw_timeout}s",
    ))
    return clauses


@main.command("check-config")
@click.argument("wawa_config", type=click.Path(exists=True))
@click.argument("gateway_config", type=click.Path(exists=True))
def check_config(wawa_config: str, gateway_config: str) -> None:
    """Verify the four OpenNDS/portal compatibility clauses."""
    try:
        wawa_raw = _load_raw(wawa_config)
        gateway_raw = _load_raw(gateway_config)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    clauses = check_clauses(wawa_raw, gateway_raw)
    failures = 0
    for index, (name, passed, detail) in enumerate(clauses):
        letter = "abcd"[index]
        status = "PASS" if passed else "FAIL"
        click.echo(f"{letter}) {name:<22} {status}  ({detail})")
        failures += 0 if passed else 1
    click.echo(f"{len(clauses) - failures}/{len(clauses)} clauses pass")
    sys.exit(EXIT_OK if failures == 0 else EXIT_CONFIG)


# ---------------------------------------------------------------------------
# demo-hotel


@main.command("demo-hotel")
@click.option("--seed", type=int, default=2024, show_default=True,
              help="Seed for the injected randomness.")
@click.option("--poll-interval", type=float, default=2.0, show_default=True,
              help="Gateway poll interval (virtual seconds).")
@click.option("--session-timeout", type=float, default=600.0, show_default=True,
              help="Session timeout (virtual seconds).")
@click.option("--transcript", type=click.Path(), default=None,
              help="Also write the transcript to this file.")
def demo_hotel(seed: int, poll_interval: float, session_timeout: float,
               transcript: str | None) -> None:
    """Run the mock-hotel scenario end to end (virtual clock, in-process)."""
    result = run_hotel_demo(
        seed=seed,
        poll_interval=poll_interval,
        session_timeout=session_timeout,
    )
    click.echo(result.transcript)
    if transcript:
        with open(transcript, "w", encoding="utf-8") as fh:
            fh.write(result.transcript + "\n")
    if result.passed:
        click.echo("demo-hotel: all steps passed")
        sys.exit(EXIT_OK)
    click.echo(f"demo-hotel: {len(result.failures)} step(s) failed", err=True)
    sys.exit(EXIT_EXPECTATION)


# ---------------------------------------------------------------------------
# bootstrap-admin


@main.command("bootstrap-admin")
@click.argument("username")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def bootstrap_admin(username: str, config_path: str) -> None:
    """Issue the one-time token that grants admin on first registration."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    service = WawaService(config)
    try:
        token = service.bootstrap_admin_token(username)
    except AdminAlreadyExists as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_EXPECTATION)
    click.echo(f"token: {token['token']}")
    click.echo(f"registration url: {token['qr_payload']}")
    click.echo(f"expires at: {token['expires_at']}")


# ---------------------------------------------------------------------------
# serve


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--with-gateway", "gateway_name", default=None,
              help="Embed a simulated gateway under this name.")
@click.option("--poll-interval", type=float, default=2.0, show_default=True)
def serve(config_path: str, gateway_name: str | None, poll_interval: float) -> None:
    """Run the portal service (wall clock; optional embedded gateway)."""
    import uvicorn

    from .fas import FasSharedConfig
    from .gateway import GatewayConfig, GatewaySim, in_process_transport
    from .wawa.http import create_app

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    service = WawaService(config)
    stop = threading.Event()
    gateways = {}
    if gateway_name:
        gateway = GatewaySim(
            GatewayConfig(
                fas=config.fas,
                poll_interval=poll_interval,
                gateway_name=gateway_name,
            ),
            in_process_transport(service),
        )
        gateways[gateway_name] = gateway

        def poll_loop() -> None:
            while not stop.wait(poll_interval):
                gateway.authmon_poll_cycle()
                gateway.expiry_tick()

        threading.Thread(target=poll_loop, daemon=True, name="gateway-poll").start()

    sweep_interval = max(1.0, min(60.0, config.session_timeout_seconds / 4))

    def sweep_loop() -> None:
        while not stop.wait(sweep_interval):
            service.sweep()

    threading.Thread(target=sweep_loop, daemon=True, name="session-sweep").start()

    app = create_app(service, gateways or None)
    try:
        uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="info")
    finally:
        stop.set()


if __name__ == "__main__":
    main()
