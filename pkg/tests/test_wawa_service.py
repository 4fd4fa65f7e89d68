"""Portal service: sessions, RBAC, tokens, the Authmon dialogue and expiry."""

import pytest

from conftest import ORIGIN
from fido2cap.authenticator import SoftAuthenticator
from fido2cap.entropy import seeded_random
from fido2cap.fas import FasParams, compute_rhid, encrypt_fas_blob
from fido2cap.wawa.models import SessionState
from fido2cap.wawa.service import (
    AdminAlreadyExists,
    Forbidden,
    InvalidRequest,
    LastAdminProtection,
    MissingFasContext,
    NoSession,
    NotFound,
    TokenExpiredOrExhausted,
)
from fido2cap.wawa.store import SESSIONS
from fido2cap.webauthn.errors import ChallengeUnknownOrExpired, OriginMismatch


def make_blob(service, seed=50, hid=None):
    rand = seeded_random(seed)
    params = FasParams(
        hid=hid if hid is not None else rand(32).hex(),
        client_ip="10.20.0.9",
        client_mac="02:00:00:00:00:09",
        gateway_name="gw-test",
        original_url="http://example.com/",
    )
    return encrypt_fas_blob(params, service.config.fas, rand), params.hid


def bootstrap_admin(service, authenticator, username="boss"):
    token = service.bootstrap_admin_token(username)["token"]
    options = service.register_options(None, username, token=token)
    response = authenticator.create_from_options(options, ORIGIN, resident=False)
    summary = service.register_verify(None, response, token=token)
    assert summary["is_admin"]
    return username


def login(service, authenticator, username=None, seed=60):
    blob, hid = make_blob(service, seed=seed)
    options = service.auth_options(username, blob)
    response = authenticator.assert_from_options(options, ORIGIN)
    result = service.auth_verify(response)
    return result, hid


def admin_session(service, authenticator, seed=61):
    result, _ = login(service, authenticator, "boss", seed=seed)
    return service.get_live_session(result["session_id"])


@pytest.fixture
def admin_auth(rand):
    return SoftAuthenticator(rand=seeded_random(71))


@pytest.fixture
def service_with_admin(service, admin_auth):
    bootstrap_admin(service, admin_auth)
    return service


def register_user_key(service, admin, username, authenticator, resident, label=""):
    session = admin_session(service, admin, seed=62)
    options = service.register_options(session, username)
    response = authenticator.create_from_options(options, ORIGIN, resident=resident)
    return service.register_verify(session, response, label=label)


# ---------------------------------------------------------------------------
# portal bootstrap


def test_portal_context_valid_blob(service):
    blob, _ = make_blob(service)
    context = service.portal_context(blob)
    assert context["ok"]
    assert context["gateway_name"] == "gw-test"
    assert context["client_ip_masked"] == "10.20.0.***"
    assert context["fas_context"] == blob


def test_portal_context_missing_and_tampered(service):
    assert service.portal_context(None) == {"ok": False, "reason": "missing_fas"}
    blob, _ = make_blob(service)
    tampered = blob[:-8] + ("A" if blob[-8] != "A" else "B") + blob[-7:]
    assert service.portal_context(tampered)["ok"] is False


# ---------------------------------------------------------------------------
# authentication and sessions


def test_auth_options_require_fas_context(service):
    with pytest.raises(MissingFasContext):
        service.auth_options("alice", None)
    with pytest.raises(MissingFasContext):
        service.auth_options("alice", "bm90IGEgYmxvYg==")


def test_verified_assertion_creates_bound_session(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(72))
    register_user_key(service, admin_auth, "alice", guest, resident=True)

    result, hid = login(service, guest, None, seed=63)
    session = service.get_live_session(result["session_id"])
    assert session.state is SessionState.AUTHENTICATED
    assert session.hid == hid
    assert session.rhid == compute_rhid(hid, service.config.fas_key)
    assert result["username"] == "alice"
    assert result["expires_at"] == session.created_at + 600.0


def test_replayed_assertion_leaves_exactly_one_session(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(73))
    register_user_key(service, admin_auth, "alice", guest, resident=True)

    blob, _ = make_blob(service, seed=64)
    options = service.auth_options(None, blob)
    response = guest.assert_from_options(options, ORIGIN)
    service.auth_verify(response)
    with pytest.raises(ChallengeUnknownOrExpired):
        service.auth_verify(response)
    alice_sessions = [
        doc for _, doc in service.store.items(SESSIONS)
    ]
    assert len([d for d in alice_sessions if d["state"] != "revoked"]) == 1 + 1  # admin + alice


def test_three_logins_three_concurrent_sessions(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(74))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    ids = set()
    for seed in (65, 66, 67):
        result, _ = login(service, guest, None, seed=seed)
        ids.add(result["session_id"])
    assert len(ids) == 3

    listing = service.list_users(admin_session(service, admin_auth, seed=68))
    alice = next(u for u in listing if u["username"] == "alice")
    live = [s for s in alice["active_sessions"] if s["state"] == "authenticated"]
    assert len(live) == 3


def test_logout_revokes_only_its_own_session(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(75))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    first, _ = login(service, guest, None, seed=65)
    second, _ = login(service, guest, None, seed=66)

    service.logout(first["session_id"])
    assert service.get_live_session(first["session_id"]) is None
    assert service.get_live_session(second["session_id"]) is not None
    with pytest.raises(NoSession):
        service.logout(first["session_id"])


def test_failed_assertion_creates_no_session(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(76))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    before = len(service.store.items(SESSIONS))

    blob, _ = make_blob(service, seed=69)
    options = service.auth_options(None, blob)
    response = guest.assert_from_options(options, "https://evil.example")
    with pytest.raises(OriginMismatch):
        service.auth_verify(response)
    assert len(service.store.items(SESSIONS)) == before


# ---------------------------------------------------------------------------
# registration RBAC and tokens


def test_registration_requires_admin_or_token(service):
    with pytest.raises(Forbidden):
        service.register_options(None, "mallory")


def test_non_admin_session_cannot_register(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(77))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    result, _ = login(service, guest, None, seed=70)
    session = service.get_live_session(result["session_id"])
    with pytest.raises(Forbidden):
        service.register_options(session, "mallory")


def test_failed_registration_leaves_no_account(service_with_admin, admin_auth):
    service = service_with_admin
    session = admin_session(service, admin_auth)
    options = service.register_options(session, "carol")
    key = SoftAuthenticator(rand=seeded_random(78))
    bad = key.create_from_options(options, "https://evil.example")
    with pytest.raises(OriginMismatch):
        service.register_verify(session, bad)
    assert service.account_by_username("carol") is None

    # a retry with the same options (same pending user handle) succeeds
    good = key.create_from_options(options, ORIGIN)
    summary = service.register_verify(session, good)
    assert summary["username"] == "carol"
    assert service.account_by_username("carol") is not None


def test_self_registration_token_counts_uses_at_verify(service_with_admin, admin_auth, clock):
    service = service_with_admin
    session = admin_session(service, admin_auth)
    token_doc = service.create_registration_token(session)
    assert token_doc["max_uses"] == 1
    assert token_doc["expires_at"] == clock.now() + 600.0
    assert "/portal?regtoken=" in token_doc["qr_payload"]
    token = token_doc["token"]

    # options twice with the same token: allowed, nothing consumed yet
    service.register_options(None, "dave", token=token)
    options = service.register_options(None, "dave", token=token)

    key = SoftAuthenticator(rand=seeded_random(79))
    response = key.create_from_options(options, ORIGIN)
    summary = service.register_verify(None, response, token=token)
    assert summary["username"] == "dave"
    assert not summary["is_admin"]

    # exhausted now
    with pytest.raises(TokenExpiredOrExhausted):
        service.register_options(None, "erin", token=token)


def test_expired_token_rejected(service_with_admin, admin_auth, clock):
    service = service_with_admin
    session = admin_session(service, admin_auth)
    token = service.create_registration_token(session, ttl_seconds=10.0)["token"]
    clock.advance(11.0)
    with pytest.raises(TokenExpiredOrExhausted):
        service.register_options(None, "erin", token=token)


def test_token_ttl_must_be_positive(service_with_admin, admin_auth):
    service = service_with_admin
    session = admin_session(service, admin_auth)
    with pytest.raises(InvalidRequest):
        service.create_registration_token(session, ttl_seconds=0.0)


def test_second_key_for_same_user(service_with_admin, admin_auth):
    service = service_with_admin
    key_a = SoftAuthenticator(rand=seeded_random(80))
    key_b = SoftAuthenticator(rand=seeded_random(81))
    register_user_key(service, admin_auth, "alice", key_a, resident=True)
    register_user_key(service, admin_auth, "alice", key_b, resident=False, label="backup")
    account = service.account_by_username("alice")
    assert len(account.credentials) == 2
    assert account.credentials[1].label == "backup"


def test_bootstrap_admin_flow(service, admin_auth):
    token_doc = service.bootstrap_admin_token("boss")
    # a second bootstrap while the token is outstanding is refused
    with pytest.raises(AdminAlreadyExists):
        service.bootstrap_admin_token("other")
    options = service.register_options(None, "boss", token=token_doc["token"])
    response = admin_auth.create_from_options(options, ORIGIN)
    summary = service.register_verify(None, response, token=token_doc["token"])
    assert summary["is_admin"]
    with pytest.raises(AdminAlreadyExists):
        service.bootstrap_admin_token("another")
    # and the single-use token is spent
    with pytest.raises(TokenExpiredOrExhausted):
        service.register_options(None, "mallory", token=token_doc["token"])


def test_bootstrap_token_locked_to_username(service, admin_auth):
    token = service.bootstrap_admin_token("boss")["token"]
    with pytest.raises(Forbidden):
        service.register_options(None, "mallory", token=token)


# ---------------------------------------------------------------------------
# admin surface


def test_list_users_requires_admin(service):
    with pytest.raises(Forbidden):
        service.list_users(None)


def test_role_management(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(82))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    session = admin_session(service, admin_auth)

    updated = service.set_admin_role(session, "alice", True)
    assert updated["is_admin"]

    with pytest.raises(NotFound):
        service.set_admin_role(session, "ghost", True)

    service.set_admin_role(session, "alice", False)
    with pytest.raises(LastAdminProtection):
        service.set_admin_role(session, "boss", False)


def test_privilege_change_renews_target_sessions(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(83))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    result, _ = login(service, guest, None, seed=71)
    old_id = result["session_id"]

    session = admin_session(service, admin_auth)
    outcome = service.set_admin_role(session, "alice", True)
    assert old_id in outcome["renewed_sessions"]
    assert service.get_live_session(old_id) is None
    assert service.get_live_session(outcome["renewed_sessions"][old_id]) is not None


# ---------------------------------------------------------------------------
# Authmon dialogue against live sessions


def _session_states(service):
    return sorted(doc["state"] for _, doc in service.store.items(SESSIONS))


def test_authmon_dialogue_full_cycle(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(84))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    first, _ = login(service, guest, None, seed=72)
    second, _ = login(service, guest, None, seed=73)
    admin_rhid_count = 1  # the registrar session from register_user_key

    status, text = service.handle_authmon("auth_get=view&payload=*")
    assert status == 200
    lines = text.splitlines()
    assert len(lines) == 2 + admin_rhid_count
    assert all(line.startswith("* ") for line in lines)

    rhid_first = service.get_live_session(first["session_id"]).rhid
    status, reply = service.handle_authmon(f"auth_get=view&payload=%2A%20{rhid_first}")
    assert (status, reply) == (200, "ack")
    assert service.get_live_session(first["session_id"]).state is SessionState.AUTHORIZED

    # confirmed session disappears from the pending list
    _, text = service.handle_authmon("auth_get=view&payload=*")
    assert rhid_first not in text
    # duplicate confirmation is harmless
    status, reply = service.handle_authmon(f"auth_get=view&payload=%2A%20{rhid_first}")
    assert (status, reply) == (200, "ack")

    # unknown rhid: nak, still 200
    status, reply = service.handle_authmon(f"auth_get=view&payload=%2A%20{'9' * 64}")
    assert (status, reply) == (200, "nak")

    # revoked session naks on confirm
    service.logout(second["session_id"])
    rhid_second = compute_rhid(
        service.store.get(SESSIONS, second["session_id"])["hid"], service.config.fas_key
    )
    status, reply = service.handle_authmon(f"auth_get=view&payload=%2A%20{rhid_second}")
    assert (status, reply) == (200, "nak")

    # clear returns authorized sessions to the pending list
    status, _ = service.handle_authmon("auth_get=clear")
    assert status == 200
    _, text = service.handle_authmon("auth_get=view&payload=*")
    assert rhid_first in text


def test_authmon_list_sends_and_clears_atomically(service_with_admin, admin_auth):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(85))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    login(service, guest, None, seed=74)

    _, listed = service.handle_authmon("auth_get=list")
    sent = [line.partition(" ")[2] for line in listed.splitlines()]
    assert sent  # everything pending was sent...
    _, after = service.handle_authmon("auth_get=view&payload=*")
    assert after == "*"  # ...and nothing remains pending
    assert "authenticated" not in _session_states(service)


def test_authmon_rejects_unknown_verbs(service):
    status, text = service.handle_authmon("auth_get=frobnicate")
    assert status == 400
    assert "unknown_verb" in text


def test_expired_sessions_leave_view_listing(service_with_admin, admin_auth, clock):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(86))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    login(service, guest, None, seed=75)
    _, text = service.handle_authmon("auth_get=view&payload=*")
    assert text != "*"
    clock.advance(601.0)
    _, text = service.handle_authmon("auth_get=view&payload=*")
    assert text == "*"


# ---------------------------------------------------------------------------
# expiry sweep


def test_sweep_expires_and_is_idempotent(service_with_admin, admin_auth, clock):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(87))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    result, _ = login(service, guest, None, seed=76)

    clock.advance(601.0)
    expired = service.sweep()
    assert expired >= 1
    assert service.sweep() == 0
    assert service.get_live_session(result["session_id"]) is None
    doc = service.store.get(SESSIONS, result["session_id"])
    assert doc["state"] == "expired"


def test_retention_prunes_old_sessions(service_with_admin, admin_auth, clock):
    service = service_with_admin
    guest = SoftAuthenticator(rand=seeded_random(88))
    register_user_key(service, admin_auth, "alice", guest, resident=True)
    result, _ = login(service, guest, None, seed=77)
    clock.advance(601.0)
    service.sweep()
    clock.advance(service.config.retention_seconds + 1.0)
    service.sweep()
    assert service.store.get(SESSIONS, result["session_id"]) is None
