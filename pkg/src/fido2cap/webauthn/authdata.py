"""Authenticator data: the byte structure the authenticator signs.

Layout (big-endian):

    rpIdHash   32 bytes
    flags       1 byte   (UP 0x01, UV 0x04, AT 0x40, ED 0x80)
    signCount   4 bytes
    [attested credential data, iff AT]:
        aaguid          16 bytes
        credIdLength     2 bytes
        credentialId     n bytes (n <= 1023)
        cosePublicKey    one CBOR map
    [extensions, iff ED]: one CBOR map, decoded and ignored
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import cbor
from .cose import CoseKey
from .errors import MalformedCoseKey, TrailingGarbage, Truncated

FLAG_UP = 0x01
FLAG_UV = 0x04
FLAG_AT = 0x40
FLAG_ED = 0x80

MIN_LENGTH = 37
AAGUID_LENGTH = 16
MAX_CREDENTIAL_ID_LENGTH = 1023


@dataclass(frozen=True)
class AttestedCredential:
    aaguid: bytes
    credential_id: bytes
    public_key: CoseKey


@dataclass(frozen=True)
class AuthenticatorData:
    rp_id_hash: bytes
    flags: int
    sign_count: int
    attested_credential: AttestedCredential | None = None
    extensions: bytes | None = None  # raw CBOR, parsed for framing then ignored

    @property
    def user_present(self) -> bool:
        return bool(self.flags & FLAG_UP)

    @property
    def user_verified(self) -> bool:
        return bool(self.flags & FLAG_UV)

    @property
    def attested(self) -> bool:
        return bool(self.flags & FLAG_AT)

    @property
    def has_extensions(self) -> bool:
        return bool(self.flags & FLAG_ED)


def parse(raw: bytes) -> AuthenticatorData:
    raw = bytes(raw)
    if len(raw) < MIN_LENGTH:
        raise Truncated(f"authenticator data is {len(raw)} bytes, minimum {MIN_LENGTH}")
    rp_id_hash = raw[:32]
    flags = raw[32]
    (sign_count,) = struct.unpack(">I", raw[33:37])
    offset = MIN_LENGTH

    attested = None
    if flags & FLAG_AT:
        if offset + AAGUID_LENGTH + 2 > len(raw):
            raise Truncated("attested credential header exceeds input")
        aaguid = raw[offset : offset + AAGUID_LENGTH]
        offset += AAGUID_LENGTH
        (cred_len,) = struct.unpack(">H", raw[offset : offset + 2])
        offset += 2
        if cred_len > MAX_CREDENTIAL_ID_LENGTH:
            raise Truncated(f"credential id length {cred_len} exceeds {MAX_CREDENTIAL_ID_LENGTH}")
        if offset + cred_len > len(raw):
            raise Truncated("credential id exceeds input")
        credential_id = raw[offset : offset + cred_len]
        offset += cred_len
        try:
            key_map, offset = cbor.loads_prefix(raw, offset)
        except cbor.CborError as exc:
            raise MalformedCoseKey(f"COSE key CBOR invalid: {exc}") from exc
        public_key = CoseKey.from_map(key_map)
        attested = AttestedCredential(aaguid, credential_id, public_key)

    extensions = None
    if flags & FLAG_ED:
        start = offset
        try:
            _, offset = cbor.loads_prefix(raw, offset)
        except cbor.CborError as exc:
            raise TrailingGarbage(f"extension data invalid: {exc}") from exc
        extensions = raw[start:offset]

    if offset != len(raw):
        raise TrailingGarbage(f"{len(raw) - offset} bytes after flagged segments")

    return AuthenticatorData(
        rp_id_hash=rp_id_hash,
        flags=flags,
        sign_count=sign_count,
        attested_credential=attested,
        extensions=extensions,
    )


def serialize(data: AuthenticatorData) -> bytes:
    if len(data.rp_id_hash) != 32:
        raise ValueError("rp_id_hash must be 32 bytes")
    if bool(data.flags & FLAG_AT) != (data.attested_credential is not None):
        raise ValueError("AT flag and attested_credential presence disagree")
    if bool(data.flags & FLAG_ED) != (data.extensions is not None):
        raise ValueError("ED flag and extensions presence disagree")
    out = bytearray(data.rp_id_hash)
    out += struct.pack(">BI", data.flags, data.sign_count)
    if data.attested_credential is not None:
        cred = data.attested_credential
        if len(cred.aaguid) != AAGUID_LENGTH:
            raise ValueError("aaguid must be 16 bytes")
        if len(cred.credential_id) > MAX_CREDENTIAL_ID_LENGTH:
            raise ValueError("credential id too long")
        out += cred.aaguid
        out += struct.pack(">H", len(cred.credential_id))
        out += cred.credential_id
        out += cred.public_key.to_cbor()
    if data.extensions is not None:
        out += data.extensions
    return bytes(out)
