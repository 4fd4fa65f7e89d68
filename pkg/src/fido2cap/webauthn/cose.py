"""COSE public keys: the credential key material carried in attested
credential data.

Supported algorithms: ES256 (mandatory) and RS256 (optional), matching
dominant authenticator support. Keys round-trip through the CBOR map
layout used on the wire:

    EC2 / ES256:  {1: 2, 3: -7, -1: 1, -2: x (32 bytes), -3: y (32 bytes)}
    RSA / RS256:  {1: 3, 3: -257, -1: n, -2: e}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

from . import cbor
from .errors import BadSignature, MalformedCoseKey

ALG_ES256 = -7
ALG_RS256 = -257
KTY_EC2 = 2
KTY_RSA = 3
CRV_P256 = 1

_LBL_KTY = 1
_LBL_ALG = 3

SUPPORTED_ALGORITHMS = (ALG_ES256, ALG_RS256)

P256_COORD_LEN = 32


@dataclass(frozen=True)
class CoseKey:
    """A decoded COSE public key restricted to the supported algorithm set."""

    kty: int
    alg: int
    params: dict[int, Any] = field(default_factory=dict)

    @classmethod
    def from_map(cls, mapping: Mapping[Any, Any]) -> "CoseKey":
        if not isinstance(mapping, Mapping):
            raise MalformedCoseKey("COSE key is not a map")
        kty = mapping.get(_LBL_KTY)
        alg = mapping.get(_LBL_ALG)
        if not isinstance(kty, int) or not isinstance(alg, int):
            raise MalformedCoseKey("COSE key missing integer kty/alg")
        params = {
            k: v for k, v in mapping.items()
            if k not in (_LBL_KTY, _LBL_ALG)
        }
        key = cls(kty=kty, alg=alg, params=params)
        key._validate()
        return key

    @classmethod
    def from_cbor(cls, data: bytes) -> "CoseKey":
        try:
            obj = cbor.loads(data)
        except cbor.CborError as exc:
            raise MalformedCoseKey(f"COSE key CBOR invalid: {exc}") from exc
        return cls.from_map(obj)

    @classmethod
    def from_ec_public_key(cls, pub: ec.EllipticCurvePublicKey) -> "CoseKey":
        numbers = pub.public_numbers()
        return cls(
            kty=KTY_EC2,
            alg=ALG_ES256,
            params={
                -1: CRV_P256,
                -2: numbers.x.to_bytes(P256_COORD_LEN, "big"),
                -3: numbers.y.to_bytes(P256_COORD_LEN, "big"),
            },
        )

    @classmethod
    def from_rsa_public_key(cls, pub: rsa.RSAPublicKey) -> "CoseKey":
        numbers = pub.public_numbers()
        n_len = (numbers.n.bit_length() + 7) // 8
        e_len = (numbers.e.bit_length() + 7) // 8
        return cls(
            kty=KTY_RSA,
            alg=ALG_RS256,
            params={
                -1: numbers.n.to_bytes(n_len, "big"),
                -2: numbers.e.to_bytes(e_len, "big"),
            },
        )

    def _validate(self) -> None:
        if self.alg not in SUPPORTED_ALGORITHMS:
            raise MalformedCoseKey(f"unsupported COSE algorithm {self.alg}")
        if self.alg == ALG_ES256:
            if self.kty != KTY_EC2:
                raise MalformedCoseKey("ES256 requires kty EC2")
            if self.params.get(-1) != CRV_P256:
                raise MalformedCoseKey("ES256 requires curve P-256")
            for label in (-2, -3):
                coord = self.params.get(label)
                if not isinstance(coord, bytes) or len(coord) != P256_COORD_LEN:
                    raise MalformedCoseKey(
                        f"P-256 coordinate {label} must be exactly "
                        f"{P256_COORD_LEN} bytes"
                    )
        else:  # RS256
            if self.kty != KTY_RSA:
                raise MalformedCoseKey("RS256 requires kty RSA")
            for label in (-1, -2):
                value = self.params.get(label)
                if not isinstance(value, bytes) or not value:
                    raise MalformedCoseKey("RSA key requires byte-string n and e")

    def to_map(self) -> dict[int, Any]:
        out: dict[int, Any] = {_LBL_KTY: self.kty, _LBL_ALG: self.alg}
        out.update(self.params)
        return out

    def to_cbor(self) -> bytes:
        return cbor.dumps(self.to_map())

    def public_key(self):
        """Materialize the key as a `cryptography` public key object."""
        if self.alg == ALG_ES256:
            x = int.from_bytes(self.params[-2], "big")
            y = int.from_bytes(self.params[-3], "big")
            try:
                return ec.EllipticCurvePublicNumbers(x, y, ec.SECP256R1()).public_key()
            except ValueError as exc:
                raise MalformedCoseKey(f"point not on P-256: {exc}") from exc
        n = int.from_bytes(self.params[-1], "big")
        e = int.from_bytes(self.params[-2], "big")
        try:
            return rsa.RSAPublicNumbers(e, n).public_key()
        except ValueError as exc:
            raise MalformedCoseKey(f"invalid RSA public numbers: {exc}") from exc

    def verify(self, signature: bytes, message: bytes) -> None:
        """Verify `signature` over `message`; raise BadSignature on failure."""
        key = self.public_key()
        try:
            if self.alg == ALG_ES256:
                key.verify(signature, message, ec.ECDSA(hashes.SHA256()))
            else:
                key.verify(signature, message, padding.PKCS1v15(), hashes.SHA256())
        except InvalidSignature as exc:
            raise BadSignature("signature verification failed") from exc
