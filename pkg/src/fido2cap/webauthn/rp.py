"""WebAuthn relying-party ceremony engine.

Generates creation/request options and verifies attestation/assertion
responses, independent of transport and storage. Credential persistence
is delegated to a credential source (anything exposing the four lookup
and update methods of `InMemoryCredentials`); challenge state lives in a
`ChallengeStore`.

Wire conventions: responses are the standard PublicKeyCredential JSON
shape — clientDataJSON as base64url of UTF-8 JSON text, attestationObject
as base64url of CBOR, all other byte fields base64url.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping
from urllib.parse import urlsplit

from ..encoding import b64url_decode, b64url_encode
from ..entropy import RandomSource, system_random
from . import authdata, cbor
from .challenge import Ceremony, Challenge, ChallengeStore
from .cose import ALG_ES256, ALG_RS256, CoseKey
from .errors import (
    BadSignature,
    ChallengeUnknownOrExpired,
    ClientDataTypeMismatch,
    CounterRegression,
    DuplicateCredentialId,
    MalformedResponse,
    OriginMismatch,
    RpIdMismatch,
    UnknownCredential,
    UnsupportedAttestationFormat,
    UserPresenceMissing,
    UserVerificationMissing,
)

DEFAULT_CHALLENGE_TTL = 120.0
DECOY_CREDENTIAL_ID_LENGTH = 92  # matches the wrapped non-resident id size


@dataclass(frozen=True)
class RelyingPartyConfig:
    rp_id: str
    expected_origin: str
    challenge_ttl: float = DEFAULT_CHALLENGE_TTL
    require_user_verification: bool = False

    def __post_init__(self):
        if self.challenge_ttl <= 0:
            raise ValueError("challenge_ttl must be positive")
        host = urlsplit(self.expected_origin).hostname or ""
        if host != self.rp_id and not host.endswith("." + self.rp_id):
            raise ValueError(
                f"rp_id {self.rp_id!r} is not a registrable suffix of the "
                f"expected origin host {host!r}"
            )


@dataclass(frozen=True)
class CredentialRecord:
    """One registered credential: the server-side half of a key pair."""

    credential_id: bytes
    public_key: CoseKey
    sign_count: int
    discoverable: bool
    user_id: bytes
    created_at: float
    label: str = ""

    def to_doc(self) -> dict[str, Any]:
        return {
            "credential_id": b64url_encode(self.credential_id),
            "public_key": b64url_encode(self.public_key.to_cbor()),
            "sign_count": self.sign_count,
            "discoverable": self.discoverable,
            "user_id": self.user_id.hex(),
            "created_at": self.created_at,
            "label": self.label,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "CredentialRecord":
        return cls(
            credential_id=b64url_decode(doc["credential_id"]),
            public_key=CoseKey.from_cbor(b64url_decode(doc["public_key"])),
            sign_count=int(doc["sign_count"]),
            discoverable=bool(doc["discoverable"]),
            user_id=bytes.fromhex(doc["user_id"]),
            created_at=float(doc["created_at"]),
            label=doc.get("label", ""),
        )


@dataclass(frozen=True)
class VerifiedAuthentication:
    user_id: bytes
    credential_id: bytes
    new_sign_count: int


@dataclass(frozen=True)
class CreationOptions:
    rp_id: str
    rp_name: str
    user_id: bytes
    user_name: str
    user_display_name: str
    challenge: bytes
    exclude_credentials: tuple[bytes, ...] = ()
    timeout_ms: int = int(DEFAULT_CHALLENGE_TTL * 1000)
    user_verification: str = "preferred"
    algorithms: tuple[int, ...] = (ALG_ES256, ALG_RS256)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rp": {"id": self.rp_id, "name": self.rp_name},
            "user": {
                "id": b64url_encode(self.user_id),
                "name": self.user_name,
                "displayName": self.user_display_name,
            },
            "challenge": b64url_encode(self.challenge),
            "pubKeyCredParams": [
                {"type": "public-key", "alg": alg} for alg in self.algorithms
            ],
            "timeout": self.timeout_ms,
            "excludeCredentials": [
                {"type": "public-key", "id": b64url_encode(cid)}
                for cid in self.exclude_credentials
            ],
            "authenticatorSelection": {
                "residentKey": "preferred",
                "userVerification": self.user_verification,
            },
            "attestation": "none",
        }


@dataclass(frozen=True)
class RequestOptions:
    rp_id: str
    challenge: bytes
    allow_credentials: tuple[bytes, ...] = ()
    timeout_ms: int = int(DEFAULT_CHALLENGE_TTL * 1000)
    user_verification: str = "preferred"

    def to_dict(self) -> dict[str, Any]:
        return {
            "rpId": self.rp_id,
            "challenge": b64url_encode(self.challenge),
            "timeout": self.timeout_ms,
            "allowCredentials": [
                {"type": "public-key", "id": b64url_encode(cid)}
                for cid in self.allow_credentials
            ],
            "userVerification": self.user_verification,
        }


class InMemoryCredentials:
    """Reference credential source; service stores implement the same methods."""

    def __init__(self):
        self._by_id: dict[bytes, CredentialRecord] = {}
        self._users: dict[str, bytes] = {}  # casefolded username -> user_id

    def add_user(self, username: str, user_id: bytes) -> None:
        self._users[username.casefold()] = user_id

    def add_credential(self, username: str, record: CredentialRecord) -> None:
        self.add_user(username, record.user_id)
        self._by_id[record.credential_id] = record

    def credential_by_id(self, credential_id: bytes) -> CredentialRecord | None:
        return self._by_id.get(credential_id)

    def user_id_for_username(self, username: str) -> bytes | None:
        return self._users.get(username.casefold())

    def credentials_for_user_id(self, user_id: bytes) -> list[CredentialRecord]:
        return [r for r in self._by_id.values() if r.user_id == user_id]

    def update_sign_count(self, credential_id: bytes, sign_count: int) -> None:
        record = self._by_id[credential_id]
        self._by_id[credential_id] = replace(record, sign_count=sign_count)


def check_sign_count(stored: int, reported: int) -> None:
    """Counter policy: both-zero accepted, otherwise strict increase.

    Many platform authenticators never increment; a hardware key that did
    increment must keep increasing, or the credential was cloned.
    """
    if stored == 0 and reported >= 0:
        return
    if reported <= stored:
        raise CounterRegression(
            f"sign counter went from {stored} to {reported}"
        )


class RelyingParty:
    """Ceremony engine bound to one RP configuration and one credential source."""

    def __init__(
        self,
        config: RelyingPartyConfig,
        challenges: ChallengeStore,
        credentials,
        clock,
        rand: RandomSource = system_random,
        rp_name: str | None = None,
        decoy_seed: bytes | None = None,
    ):
        self.config = config
        self.challenges = challenges
        self.credentials = credentials
        self._clock = clock
        self._rand = rand
        self.rp_name = rp_name or config.rp_id
        self._decoy_seed = decoy_seed if decoy_seed is not None else rand(32)

    # -- option generation

    def generate_registration_options(
        self,
        user,
        existing: Iterable[CredentialRecord] = (),
        *,
        hid: str | None = None,
    ) -> CreationOptions:
        """Options for registering a new credential for `user`.

        `user` needs user_id / username / display_name attributes. Every
        credential in `existing` lands on the exclusion list so the same
        authenticator refuses to re-register.
        """
        if not user.username:
            raise ValueError("user must have a non-empty username")
        challenge = self.challenges.issue(
            Ceremony.REGISTRATION,
            self.config.challenge_ttl,
            bound_username=user.username,
            bound_hid=hid,
            bound_user_id=user.user_id,
        )
        return CreationOptions(
            rp_id=self.config.rp_id,
            rp_name=self.rp_name,
            user_id=user.user_id,
            user_name=user.username,
            user_display_name=getattr(user, "display_name", "") or user.username,
            challenge=challenge.value,
            exclude_credentials=tuple(c.credential_id for c in existing),
            timeout_ms=int(self.config.challenge_ttl * 1000),
            user_verification=self._uv_requirement(),
        )

    def generate_authentication_options(
        self,
        username: str | None = None,
        *,
        hid: str | None = None,
    ) -> RequestOptions:
        """Options for an assertion.

        With a username, the allow list carries that user's credential ids
        (non-discoverable flow); without one the list is empty and the
        authenticator picks a resident credential. An unknown username gets
        a deterministic decoy allow list so the response shape does not
        reveal whether the account exists.
        """
        allow: tuple[bytes, ...] = ()
        if username is not None:
            user_id = self.credentials.user_id_for_username(username)
            if user_id is not None:
                allow = tuple(
                    c.credential_id
                    for c in self.credentials.credentials_for_user_id(user_id)
                )
            if not allow:
                allow = (self._decoy_credential_id(username),)
        challenge = self.challenges.issue(
            Ceremony.AUTHENTICATION,
            self.config.challenge_ttl,
            bound_username=username,
            bound_hid=hid,
        )
        return RequestOptions(
            rp_id=self.config.rp_id,
            challenge=challenge.value,
            allow_credentials=allow,
            timeout_ms=int(self.config.challenge_ttl * 1000),
            user_verification=self._uv_requirement(),
        )

    def _uv_requirement(self) -> str:
        return "required" if self.config.require_user_verification else "preferred"

    def _decoy_credential_id(self, username: str) -> bytes:
        material = b""
        counter = 0
        while len(material) < DECOY_CREDENTIAL_ID_LENGTH:
            material += hmac.new(
                self._decoy_seed,
                b"decoy:%d:" % counter + username.casefold().encode("utf-8"),
                hashlib.sha256,
            ).digest()
            counter += 1
        return material[:DECOY_CREDENTIAL_ID_LENGTH]

    # -- response verification

    def peek_challenge(self, response: Mapping[str, Any], ceremony: Ceremony) -> Challenge:
        """Resolve the live challenge a response references, without consuming
        it. Lets callers read ceremony bindings (username, hid) up front."""
        inner = self._inner_response(response)
        _, client_data = self._parse_client_data(inner)
        return self._challenge_from_client_data(client_data, ceremony)

    def verify_registration_response(self, response: Mapping[str, Any]) -> CredentialRecord:
        """Verify an attestation response; return the credential to persist.

        The returned record carries the user handle the challenge was bound
        to. The challenge is consumed only after every other check passes,
        so a failed ceremony can be retried with the same options.
        """
        inner = self._inner_response(response)
        client_data_raw, client_data = self._parse_client_data(inner)
        if client_data.get("type") != "webauthn.create":
            raise ClientDataTypeMismatch(
                f"expected webauthn.create, got {client_data.get('type')!r}"
            )
        challenge = self._challenge_from_client_data(client_data, Ceremony.REGISTRATION)
        self._check_origin(client_data)

        try:
            att_obj = cbor.loads(b64url_decode(inner["attestationObject"]))
        except (KeyError, ValueError, cbor.CborError) as exc:
            raise MalformedResponse(f"attestation object invalid: {exc}") from exc
        if not isinstance(att_obj, dict) or not isinstance(att_obj.get("authData"), bytes):
            raise MalformedResponse("attestation object missing authData")
        auth_data_raw = att_obj["authData"]
        parsed = authdata.parse(auth_data_raw)

        self._check_rp_id_hash(parsed)
        self._check_flags(parsed)
        if parsed.attested_credential is None:
            raise MalformedResponse("registration response carries no attested credential")
        attested = parsed.attested_credential

        self._check_attestation_statement(
            att_obj, attested.public_key, auth_data_raw, client_data_raw
        )

        if self.credentials.credential_by_id(attested.credential_id) is not None:
            raise DuplicateCredentialId("credential id already registered")

        challenge = self.challenges.consume(challenge.value, Ceremony.REGISTRATION)

        discoverable = bool(
            response.get("clientExtensionResults", {})
            .get("credProps", {})
            .get("rk", False)
        )
        if challenge.bound_user_id is None:
            raise MalformedResponse("registration challenge carries no user binding")
        return CredentialRecord(
            credential_id=attested.credential_id,
            public_key=attested.public_key,
            sign_count=parsed.sign_count,
            discoverable=discoverable,
            user_id=challenge.bound_user_id,
            created_at=self._clock.now(),
        )

    def verify_authentication_response(
        self, response: Mapping[str, Any]
    ) -> VerifiedAuthentication:
        """Verify an assertion and persist the advanced sign counter.

        Resolution order: a response with a userHandle is the discoverable
        flow (credential looked up by id, then checked against the handle);
        otherwise the credential must belong to the user the challenge was
        issued for.
        """
        inner = self._inner_response(response)
        client_data_raw, client_data = self._parse_client_data(inner)
        if client_data.get("type") != "webauthn.get":
            raise ClientDataTypeMismatch(
                f"expected webauthn.get, got {client_data.get('type')!r}"
            )
        challenge = self._challenge_from_client_data(client_data, Ceremony.AUTHENTICATION)
        self._check_origin(client_data)

        try:
            auth_data_raw = b64url_decode(inner["authenticatorData"])
            signature = b64url_decode(inner["signature"])
            credential_id = b64url_decode(response["rawId"])
        except (KeyError, ValueError) as exc:
            raise MalformedResponse(f"assertion response invalid: {exc}") from exc
        user_handle_b64 = inner.get("userHandle")
        user_handle = b64url_decode(user_handle_b64) if user_handle_b64 else None

        parsed = authdata.parse(auth_data_raw)
        self._check_rp_id_hash(parsed)
        self._check_flags(parsed)

        record = self._resolve_credential(credential_id, user_handle, challenge)

        signed = auth_data_raw + hashlib.sha256(client_data_raw).digest()
        record.public_key.verify(signature, signed)

        check_sign_count(record.sign_count, parsed.sign_count)

        self.challenges.consume(challenge.value, Ceremony.AUTHENTICATION)
        self.credentials.update_sign_count(credential_id, parsed.sign_count)
        return VerifiedAuthentication(
            user_id=record.user_id,
            credential_id=credential_id,
            new_sign_count=parsed.sign_count,
        )

    # -- shared verification pieces

    @staticmethod
    def _inner_response(response: Mapping[str, Any]) -> Mapping[str, Any]:
        if not isinstance(response, Mapping):
            raise MalformedResponse("response is not a JSON object")
        inner = response.get("response")
        if not isinstance(inner, Mapping):
            raise MalformedResponse("response.response missing")
        return inner

    @staticmethod
    def _parse_client_data(inner: Mapping[str, Any]) -> tuple[bytes, dict]:
        try:
            raw = b64url_decode(inner["clientDataJSON"])
            parsed = json.loads(raw.decode("utf-8"))
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            raise MalformedResponse(f"clientDataJSON invalid: {exc}") from exc
        if not isinstance(parsed, dict):
            raise MalformedResponse("clientDataJSON is not a JSON object")
        return raw, parsed

    def _challenge_from_client_data(self, client_data: dict, ceremony: Ceremony) -> Challenge:
        try:
            value = b64url_decode(client_data["challenge"])
        except (KeyError, ValueError) as exc:
            raise MalformedResponse(f"client challenge invalid: {exc}") from exc
        return self.challenges.peek(value, ceremony)

    def _check_origin(self, client_data: dict) -> None:
        origin = client_data.get("origin")
        if origin != self.config.expected_origin:
            raise OriginMismatch(
                f"origin {origin!r} != expected {self.config.expected_origin!r}"
            )

    def _check_rp_id_hash(self, parsed: authdata.AuthenticatorData) -> None:
        expected = hashlib.sha256(self.config.rp_id.encode("utf-8")).digest()
        if not hmac.compare_digest(parsed.rp_id_hash, expected):
            raise RpIdMismatch("rpIdHash does not match configured rp_id")

    def _check_flags(self, parsed: authdata.AuthenticatorData) -> None:
        if not parsed.user_present:
            raise UserPresenceMissing("UP flag not set")
        if self.config.require_user_verification and not parsed.user_verified:
            raise UserVerificationMissing("UV flag required but not set")

    def _check_attestation_statement(
        self,
        att_obj: dict,
        public_key: CoseKey,
        auth_data_raw: bytes,
        client_data_raw: bytes,
    ) -> None:
        fmt = att_obj.get("fmt")
        statement = att_obj.get("attStmt")
        if not isinstance(statement, dict):
            raise MalformedResponse("attestation statement missing")
        if fmt == "none":
            if statement:
                raise UnsupportedAttestationFormat(
                    'format "none" must carry an empty statement'
                )
            return
        if fmt == "packed":
            if "x5c" in statement:
                raise UnsupportedAttestationFormat(
                    "certificate-chain (x5c) attestation is not supported"
                )
            alg = statement.get("alg")
            sig = statement.get("sig")
            if not isinstance(alg, int) or not isinstance(sig, bytes):
                raise MalformedResponse("packed statement missing alg/sig")
            if alg != public_key.alg:
                raise BadSignature(
                    f"packed statement alg {alg} != credential alg {public_key.alg}"
                )
            signed = auth_data_raw + hashlib.sha256(client_data_raw).digest()
            public_key.verify(sig, signed)
            return
        raise UnsupportedAttestationFormat(f"attestation format {fmt!r} not supported")

    def _resolve_credential(
        self,
        credential_id: bytes,
        user_handle: bytes | None,
        challenge: Challenge,
    ) -> CredentialRecord:
        if user_handle is not None:
            record = self.credentials.credential_by_id(credential_id)
            if record is None or not hmac.compare_digest(record.user_id, user_handle):
                raise UnknownCredential("no credential for this id and user handle")
            return record
        if challenge.bound_username is None:
            raise UnknownCredential(
                "assertion carries no user handle and the challenge names no user"
            )
        user_id = self.credentials.user_id_for_username(challenge.bound_username)
        if user_id is None:
            raise UnknownCredential("challenge-bound user is not registered")
        for record in self.credentials.credentials_for_user_id(user_id):
            if hmac.compare_digest(record.credential_id, credential_id):
                return record
        raise UnknownCredential("credential is not on the user's allow list")
