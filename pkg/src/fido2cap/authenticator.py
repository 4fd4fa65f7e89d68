"""Software FIDO2 authenticator for headless end-to-end protocol runs.

Implements credential creation and assertion generation for both resident
(discoverable) credentials, kept in an in-memory store, and non-resident
credentials, whose "credential id" is actually the private key wrapped
under the authenticator's master key (nonce ‖ AES-GCM ciphertext). Only
the authenticator that minted a wrapped id can use it, and only for the
relying party it was minted for.

Responses use the same wire encodings the relying-party engine parses, so
a registration or authentication ceremony runs end to end without a
browser.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256

from .encoding import b64url_decode, b64url_encode
from .entropy import RandomSource, system_random
from .webauthn import cbor
from .webauthn.authdata import FLAG_AT, FLAG_UP, FLAG_UV
from .webauthn.cose import CoseKey

_P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551

WRAP_NONCE_LENGTH = 12
WRAP_SEED_LENGTH = 32
# nonce + (seed || rp hash) ciphertext + GCM tag
WRAPPED_CREDENTIAL_ID_LENGTH = WRAP_NONCE_LENGTH + WRAP_SEED_LENGTH + 32 + 16
RESIDENT_CREDENTIAL_ID_LENGTH = 16

ZERO_AAGUID = b"\x00" * 16


class AuthenticatorError(Exception):
    pass


class ExcludedCredentialExists(AuthenticatorError):
    """An exclusion-list entry belongs to this authenticator: already registered."""


class UserPresenceDenied(AuthenticatorError):
    """The user did not approve (or disconnected during) the ceremony."""


class UserVerificationUnavailable(AuthenticatorError):
    """UV was requested but this authenticator cannot perform it."""


class NoMatchingCredential(AuthenticatorError):
    """No allow-list entry is usable and no resident credential fits."""


class AuthenticatorBusy(AuthenticatorError):
    """A ceremony is already in flight on this authenticator."""


class AlwaysApprove:
    """Presence policy that approves every prompt."""

    def approve(self, ceremony: str, rp_id: str) -> bool:
        return True


class ScriptedPresence:
    """Presence policy replaying a fixed outcome sequence, then approving.

    An outcome may also be a callable run at prompt time (e.g. to call
    simulate_disconnect mid-ceremony); its truthiness is the decision.
    """

    def __init__(self, outcomes: Iterable[Any]):
        self._outcomes = list(outcomes)

    def approve(self, ceremony: str, rp_id: str) -> bool:
        if not self._outcomes:
            return True
        outcome = self._outcomes.pop(0)
        if callable(outcome):
            return bool(outcome(ceremony, rp_id))
        return bool(outcome)


@dataclass
class ResidentCredential:
    credential_id: bytes
    private_key: ec.EllipticCurvePrivateKey
    rp_id: str
    user_id: bytes
    user_name: str
    sign_count: int = 0


class SoftAuthenticator:
    """One simulated FIDO2 authenticator instance.

    One ceremony runs at a time (hardware-faithful); a second concurrent
    call fails with AuthenticatorBusy. Independent instances never share
    wrap keys, so credentials cannot cross authenticators.
    """

    def __init__(
        self,
        *,
        aaguid: bytes = ZERO_AAGUID,
        master_wrap_key: bytes | None = None,
        presence=None,
        sign_count_mode: str = "per_credential",
        user_verification_supported: bool = True,
        rand: RandomSource = system_random,
    ):
        if len(aaguid) != 16:
            raise ValueError("aaguid must be 16 bytes")
        if sign_count_mode not in ("per_credential", "global"):
            raise ValueError(f"unknown sign_count_mode {sign_count_mode!r}")
        self.aaguid = aaguid
        self.presence = presence if presence is not None else AlwaysApprove()
        self.sign_count_mode = sign_count_mode
        self.user_verification_supported = user_verification_supported
        self._rand = rand
        self._wrap_key = master_wrap_key if master_wrap_key is not None else rand(32)
        if len(self._wrap_key) != 32:
            raise ValueError("master wrap key must be 32 bytes")
        self._resident: dict[bytes, ResidentCredential] = {}
        self._nonresident_counts: dict[bytes, int] = {}
        self._global_count = 0
        self._ceremony_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._ceremony_active = False
        self._disconnect_requested = False

    # -- ceremony gating

    def _begin_ceremony(self) -> None:
        if not self._ceremony_lock.acquire(blocking=False):
            raise AuthenticatorBusy("a ceremony is already in flight")
        with self._state_lock:
            self._ceremony_active = True
            self._disconnect_requested = False

    def _end_ceremony(self) -> None:
        with self._state_lock:
            self._ceremony_active = False
            self._disconnect_requested = False
        self._ceremony_lock.release()

    def _require_presence(self, ceremony: str, rp_id: str, uv: bool) -> None:
        if uv and not self.user_verification_supported:
            raise UserVerificationUnavailable("authenticator cannot verify the user")
        approved = self.presence.approve(ceremony, rp_id)
        with self._state_lock:
            disconnected = self._disconnect_requested
        if disconnected or not approved:
            raise UserPresenceDenied("user presence denied or device disconnected")

    def simulate_disconnect(self) -> bool:
        """Abort the ceremony in flight, if any. No ceremony: no effect."""
        with self._state_lock:
            if not self._ceremony_active:
                return False
            self._disconnect_requested = True
            return True

    # -- key wrapping (non-resident credentials)

    def _wrap(self, private_value: int, rp_id: str) -> bytes:
        seed = private_value.to_bytes(WRAP_SEED_LENGTH, "big")
        plaintext = seed + hashlib.sha256(rp_id.encode("utf-8")).digest()
        nonce = self._rand(WRAP_NONCE_LENGTH)
        ciphertext = AESGCM(self._wrap_key).encrypt(nonce, plaintext, b"")
        return nonce + ciphertext

    def _try_unwrap(self, credential_id: bytes, rp_id: str) -> ec.EllipticCurvePrivateKey | None:
        if len(credential_id) != WRAPPED_CREDENTIAL_ID_LENGTH:
            return None
        nonce, ciphertext = credential_id[:WRAP_NONCE_LENGTH], credential_id[WRAP_NONCE_LENGTH:]
        try:
            plaintext = AESGCM(self._wrap_key).decrypt(nonce, ciphertext, b"")
        except InvalidTag:
            return None
        seed, rp_hash = plaintext[:WRAP_SEED_LENGTH], plaintext[WRAP_SEED_LENGTH:]
        if rp_hash != hashlib.sha256(rp_id.encode("utf-8")).digest():
            return None
        value = int.from_bytes(seed, "big")
        if not 1 <= value < _P256_ORDER:
            return None
        return ec.derive_private_key(value, ec.SECP256R1())

    def _generate_private_key(self) -> tuple[ec.EllipticCurvePrivateKey, int]:
        value = (int.from_bytes(self._rand(32), "big") % (_P256_ORDER - 1)) + 1
        return ec.derive_private_key(value, ec.SECP256R1()), value

    # -- registration

    def make_credential(
        self,
        *,
        rp_id: str,
        user_id: bytes,
        user_name: str = "",
        challenge: bytes | str,
        origin: str,
        exclude: Iterable[bytes] = (),
        resident: bool = False,
        uv: bool = False,
    ) -> dict[str, Any]:
        """Create a credential and return the wire attestation response."""
        self._begin_ceremony()
        try:
            for excluded in exclude:
                entry = self._resident.get(bytes(excluded))
                if entry is not None and entry.rp_id == rp_id:
                    raise ExcludedCredentialExists("resident credential already registered")
                if self._try_unwrap(bytes(excluded), rp_id) is not None:
                    raise ExcludedCredentialExists("wrapped credential already registered")
            self._require_presence("registration", rp_id, uv)

            private_key, private_value = self._generate_private_key()
            if resident:
                credential_id = self._rand(RESIDENT_CREDENTIAL_ID_LENGTH)
                # standard resident-key semantics: one credential per (rp, user)
                stale = [
                    cid for cid, entry in self._resident.items()
                    if entry.rp_id == rp_id and entry.user_id == user_id
                ]
                for cid in stale:
                    del self._resident[cid]
                self._resident[credential_id] = ResidentCredential(
                    credential_id=credential_id,
                    private_key=private_key,
                    rp_id=rp_id,
                    user_id=bytes(user_id),
                    user_name=user_name,
                )
            else:
                credential_id = self._wrap(private_value, rp_id)

            flags = FLAG_UP | FLAG_AT | (FLAG_UV if uv else 0)
            cose_key = CoseKey.from_ec_public_key(private_key.public_key())
            auth_data = (
                hashlib.sha256(rp_id.encode("utf-8")).digest()
                + struct.pack(">BI", flags, 0)
                + self.aaguid
                + struct.pack(">H", len(credential_id))
                + credential_id
                + cose_key.to_cbor()
            )
            attestation_object = cbor.dumps(
                {"fmt": "none", "attStmt": {}, "authData": auth_data}
            )
            client_data = self._client_data("webauthn.create", challenge, origin)
            return {
                "id": b64url_encode(credential_id),
                "rawId": b64url_encode(credential_id),
                "type": "public-key",
                "response": {
                    "clientDataJSON": b64url_encode(client_data),
                    "attestationObject": b64url_encode(attestation_object),
                },
                "clientExtensionResults": {"credProps": {"rk": resident}},
                "authenticatorAttachment": "cross-platform",
            }
        finally:
            self._end_ceremony()

    def create_from_options(
        self,
        options: Mapping[str, Any],
        origin: str,
        *,
        resident: bool = False,
        uv: bool | None = None,
    ) -> dict[str, Any]:
        """Drive make_credential from server creation options (wire shape)."""
        if uv is None:
            uv = self._uv_from_options(options)
        return self.make_credential(
            rp_id=options["rp"]["id"],
            user_id=b64url_decode(options["user"]["id"]),
            user_name=options["user"].get("name", ""),
            challenge=options["challenge"],
            origin=origin,
            exclude=[
                b64url_decode(entry["id"])
                for entry in options.get("excludeCredentials", [])
            ],
            resident=resident,
            uv=uv,
        )

    # -- authentication

    def get_assertion(
        self,
        *,
        rp_id: str,
        challenge: bytes | str,
        origin: str,
        allow: Iterable[bytes] = (),
        uv: bool = False,
    ) -> dict[str, Any]:
        """Sign a challenge and return the wire assertion response.

        A non-empty allow list selects the first usable entry (resident or
        unwrappable). An empty list is the discoverable flow: a resident
        credential for the relying party is used and the response carries
        its userHandle.
        """
        self._begin_ceremony()
        try:
            self._require_presence("authentication", rp_id, uv)
            allow = [bytes(a) for a in allow]
            selected: tuple[bytes, ec.EllipticCurvePrivateKey, ResidentCredential | None] | None = None
            if allow:
                for candidate in allow:
                    entry = self._resident.get(candidate)
                    if entry is not None and entry.rp_id == rp_id:
                        selected = (candidate, entry.private_key, entry)
                        break
                    private_key = self._try_unwrap(candidate, rp_id)
                    if private_key is not None:
                        selected = (candidate, private_key, None)
                        break
            else:
                for entry in self._resident.values():
                    if entry.rp_id == rp_id:
                        selected = (entry.credential_id, entry.private_key, entry)
                        break
            if selected is None:
                raise NoMatchingCredential(f"no usable credential for {rp_id!r}")
            credential_id, private_key, entry = selected

            sign_count = self._next_sign_count(credential_id, entry)
            flags = FLAG_UP | (FLAG_UV if uv else 0)
            auth_data = hashlib.sha256(rp_id.encode("utf-8")).digest() + struct.pack(
                ">BI", flags, sign_count
            )
            client_data = self._client_data("webauthn.get", challenge, origin)
            signature = private_key.sign(
                auth_data + hashlib.sha256(client_data).digest(),
                ec.ECDSA(SHA256()),
            )
            user_handle = b64url_encode(entry.user_id) if entry is not None else None
            return {
                "id": b64url_encode(credential_id),
                "rawId": b64url_encode(credential_id),
                "type": "public-key",
                "response": {
                    "clientDataJSON": b64url_encode(client_data),
                    "authenticatorData": b64url_encode(auth_data),
                    "signature": b64url_encode(signature),
                    "userHandle": user_handle,
                },
                "clientExtensionResults": {},
                "authenticatorAttachment": "cross-platform",
            }
        finally:
            self._end_ceremony()

    def assert_from_options(
        self,
        options: Mapping[str, Any],
        origin: str,
        *,
        uv: bool | None = None,
    ) -> dict[str, Any]:
        """Drive get_assertion from server request options (wire shape)."""
        if uv is None:
            uv = options.get("userVerification") == "required"
        return self.get_assertion(
            rp_id=options["rpId"],
            challenge=options["challenge"],
            origin=origin,
            allow=[
                b64url_decode(entry["id"])
                for entry in options.get("allowCredentials", [])
            ],
            uv=uv,
        )

    # -- helpers

    def _uv_from_options(self, options: Mapping[str, Any]) -> bool:
        selection = options.get("authenticatorSelection", {})
        return selection.get("userVerification") == "required"

    def _next_sign_count(self, credential_id: bytes, entry: ResidentCredential | None) -> int:
        if self.sign_count_mode == "global":
            self._global_count += 1
            return self._global_count
        if entry is not None:
            entry.sign_count += 1
            return entry.sign_count
        key = hashlib.sha256(credential_id).digest()
        self._nonresident_counts[key] = self._nonresident_counts.get(key, 0) + 1
        return self._nonresident_counts[key]

    @staticmethod
    def _client_data(ceremony_type: str, challenge: bytes | str, origin: str) -> bytes:
        challenge_b64 = (
            challenge if isinstance(challenge, str) else b64url_encode(challenge)
        )
        return json.dumps(
            {
                "type": ceremony_type,
                "challenge": challenge_b64,
                "origin": origin,
                "crossOrigin": False,
            },
            separators=(",", ":"),
        ).encode("utf-8")

    @property
    def resident_credential_ids(self) -> list[bytes]:
        return list(self._resident.keys())
