"""Error taxonomy for the relying-party ceremony engine.

Every error carries a stable machine-readable `code` (snake_case of the
class name) so HTTP layers and UIs can map failures without string
matching on messages.
"""

from __future__ import annotations

import re


def _snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


class WebAuthnError(Exception):
    """Base for all ceremony and parsing failures."""

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.code = _snake(self.__class__.__name__)


# -- ceremony verification failures

class ChallengeUnknownOrExpired(WebAuthnError):
    """Challenge missing, already consumed, expired, or for the wrong ceremony."""


class OriginMismatch(WebAuthnError):
    """clientData origin differs from the configured expected origin."""


class RpIdMismatch(WebAuthnError):
    """rpIdHash in authenticator data is not the hash of the configured RP id."""


class UserPresenceMissing(WebAuthnError):
    """UP flag not set in authenticator data."""


class UserVerificationMissing(WebAuthnError):
    """UV flag required by policy but not set."""


class UnsupportedAttestationFormat(WebAuthnError):
    """Attestation format other than "none" or packed self-attestation."""


class BadSignature(WebAuthnError):
    """Signature (assertion or attestation statement) failed to verify."""


class DuplicateCredentialId(WebAuthnError):
    """Credential id already registered."""


class UnknownCredential(WebAuthnError):
    """Assertion references a credential the store cannot resolve."""


class CounterRegression(WebAuthnError):
    """Reported sign counter did not advance past a non-zero stored value."""


class ClientDataTypeMismatch(WebAuthnError):
    """clientData.type is not the one this ceremony requires."""


class MalformedResponse(WebAuthnError):
    """Structurally invalid response (missing fields, bad base64/JSON/CBOR)."""


# -- authenticator-data / key parsing failures

class Truncated(WebAuthnError):
    """Authenticator data shorter than its declared segments."""


class MalformedCoseKey(WebAuthnError):
    """COSE key failed to decode or violates the supported algorithms."""


class TrailingGarbage(WebAuthnError):
    """Bytes remain after all flagged authenticator-data segments."""
