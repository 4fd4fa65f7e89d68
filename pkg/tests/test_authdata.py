"""Authenticator-data parsing: exact field decoding, framing errors, and
the serialize/parse round-trip against the soft authenticator's output."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fido2cap.authenticator import SoftAuthenticator
from fido2cap.encoding import b64url_decode
from fido2cap.entropy import seeded_random
from fido2cap.webauthn import authdata, cbor
from fido2cap.webauthn.errors import MalformedCoseKey, TrailingGarbage, Truncated

RP_HASH = bytes(range(32))


def _minimal(flags=0x01, count=0):
    return RP_HASH + struct.pack(">BI", flags, count)


def test_minimal_payload_parses():
    parsed = authdata.parse(_minimal(flags=0x01, count=0))
    assert parsed.user_present
    assert not parsed.user_verified
    assert parsed.sign_count == 0
    assert parsed.attested_credential is None
    assert parsed.rp_id_hash == RP_HASH


def test_36_bytes_is_truncated():
    with pytest.raises(Truncated):
        authdata.parse(_minimal()[:36])


def test_sign_count_decoded_big_endian():
    parsed = authdata.parse(_minimal(count=0x01020304))
    assert parsed.sign_count == 0x01020304


def test_attested_credential_round_trip():
    auth = SoftAuthenticator(rand=seeded_random(3))
    response = auth.make_credential(
        rp_id="wawa.example",
        user_id=b"u" * 16,
        user_name="alice",
        challenge=b"c" * 32,
        origin="https://wawa.example",
        resident=False,
    )
    att_obj = cbor.loads(b64url_decode(response["response"]["attestationObject"]))
    raw = att_obj["authData"]
    parsed = authdata.parse(raw)
    assert parsed.attested
    assert parsed.attested_credential.credential_id == b64url_decode(response["rawId"])
    assert authdata.serialize(parsed) == raw


def test_trailing_garbage_rejected():
    with pytest.raises(TrailingGarbage):
        authdata.parse(_minimal() + b"\x00")


def test_at_flag_with_short_body_truncated():
    with pytest.raises(Truncated):
        authdata.parse(_minimal(flags=0x41) + b"\x00" * 10)


def test_credential_length_beyond_input_truncated():
    body = b"\x00" * 16 + struct.pack(">H", 500) + b"\x00" * 10
    with pytest.raises(Truncated):
        authdata.parse(_minimal(flags=0x41) + body)


def test_oversized_credential_id_rejected():
    body = b"\x00" * 16 + struct.pack(">H", 1024) + b"\x00" * 1024
    with pytest.raises(Truncated, match="1023"):
        authdata.parse(_minimal(flags=0x41) + body)


def test_bad_cose_key_rejected():
    body = b"\x00" * 16 + struct.pack(">H", 4) + b"abcd" + b"\xff\xff"
    with pytest.raises(MalformedCoseKey):
        authdata.parse(_minimal(flags=0x41) + body)


def test_extension_data_parsed_and_ignored():
    ext = cbor.dumps({"example.ext": True})
    parsed = authdata.parse(_minimal(flags=0x81) + ext)
    assert parsed.has_extensions
    assert parsed.extensions == ext
    assert authdata.serialize(parsed) == _minimal(flags=0x81) + ext


def test_extension_flag_with_garbage_rejected():
    with pytest.raises(TrailingGarbage):
        authdata.parse(_minimal(flags=0x81) + b"\xff")


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32),
    resident=st.booleans(),
    uv=st.booleans(),
    user_id=st.binary(min_size=1, max_size=32),
)
def test_round_trip_over_randomized_credentials(seed, resident, uv, user_id):
    auth = SoftAuthenticator(rand=seeded_random(seed))
    response = auth.make_credential(
        rp_id="rp.example",
        user_id=user_id,
        challenge=b"x" * 32,
        origin="https://rp.example",
        resident=resident,
        uv=uv,
    )
    raw = cbor.loads(b64url_decode(response["response"]["attestationObject"]))["authData"]
    assert authdata.serialize(authdata.parse(raw)) == raw
