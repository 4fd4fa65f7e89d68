"""Relying-party ceremony engine: options generation, attestation and
assertion verification, authenticator-data and COSE parsing."""

from .challenge import Ceremony, Challenge, ChallengeStore
from .cose import ALG_ES256, ALG_RS256, CoseKey
from .rp import (
    CreationOptions,
    CredentialRecord,
    InMemoryCredentials,
    RelyingParty,
    RelyingPartyConfig,
    RequestOptions,
    VerifiedAuthentication,
    check_sign_count,
)

__all__ = [
    "ALG_ES256",
    "ALG_RS256",
    "Ceremony",
    "Challenge",
    "ChallengeStore",
    "CoseKey",
    "CreationOptions",
    "CredentialRecord",
    "InMemoryCredentials",
    "RelyingParty",
    "RelyingPartyConfig",
    "RequestOptions",
    "VerifiedAuthentication",
    "check_sign_count",
]
