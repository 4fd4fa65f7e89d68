"""Shared fixtures: virtual clock, seeded randomness, RP engine, service."""

from __future__ import annotations

import types

import pytest

from fido2cap.authenticator import SoftAuthenticator
from fido2cap.clock import VirtualClock
from fido2cap.entropy import seeded_random
from fido2cap.webauthn import (
    ChallengeStore,
    InMemoryCredentials,
    RelyingParty,
    RelyingPartyConfig,
)
from fido2cap.wawa.config import WawaConfig
from fido2cap.wawa.service import WawaService

RP_ID = "wawa.example"
ORIGIN = "https://wawa.example"


@pytest.fixture
def clock():
    return VirtualClock(start=1_000.0)


@pytest.fixture
def rand():
    return seeded_random(7)


@pytest.fixture
def rp_config():
    return RelyingPartyConfig(rp_id=RP_ID, expected_origin=ORIGIN)


@pytest.fixture
def credentials():
    return InMemoryCredentials()


@pytest.fixture
def rp(rp_config, clock, rand, credentials):
    return RelyingParty(
        rp_config, ChallengeStore(clock, rand), credentials, clock=clock, rand=rand
    )


@pytest.fixture
def authenticator(rand):
    return SoftAuthenticator(rand=rand)


def make_user(username: str, user_id: bytes):
    return types.SimpleNamespace(
        user_id=user_id, username=username, display_name=username
    )


def register_credential(rp, authenticator, username, user_id, *, resident=False, label=""):
    """Run a full registration ceremony and persist the credential."""
    user = make_user(username, user_id)
    existing = []
    known = rp.credentials.user_id_for_username(username)
    if known is not None:
        existing = rp.credentials.credentials_for_user_id(known)
    options = rp.generate_registration_options(user, existing)
    response = authenticator.create_from_options(options.to_dict(), ORIGIN, resident=resident)
    record = rp.verify_registration_response(response)
    rp.credentials.add_credential(username, record)
    return record


@pytest.fixture
def wawa_config(tmp_path):
    return WawaConfig(
        rp_id=RP_ID,
        expected_origin=ORIGIN,
        fas_key=bytes(range(32)),
        fas_fqdn=RP_ID,
        fas_port=443,
        session_timeout_seconds=600.0,
    )


@pytest.fixture
def service(wawa_config, clock, rand):
    return WawaService(wawa_config, clock=clock, rand=rand)
