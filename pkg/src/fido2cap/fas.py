"""Forwarding Authentication Service codec and Authmon grammar.

Three wire surfaces shared between the gateway and the portal server:

* the encrypted redirect blob (`fas` query parameter): comma-separated
  key=value text, PKCS#7-padded, AES-256-CBC under the 32-byte shared key,
  transported as base64 of IV ‖ ciphertext. The plaintext carries a
  mandatory `chk` integrity field (truncated SHA-256 of the rest) because
  CBC alone cannot guarantee corruption detection;
* the authorization token: rhid = SHA-256(hid ‖ key), hex;
* the Authmon polling dialogue: form-encoded POST bodies with an
  `auth_get` verb (clear | list | view) and plain-text responses, one
  "* <rhid>" line per pending client.
"""

from __future__ import annotations

import base64
import binascii
import enum
import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping
from urllib.parse import parse_qs, quote, unquote, urlencode

from cryptography.hazmat.primitives import padding as block_padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .entropy import RandomSource, system_random

FAS_KEY_LENGTH = 32
IV_LENGTH = 16
CHK_DIGEST_CHARS = 16

EMPTY_LIST_RESPONSE = "*"  # idle view reply; isolated here (gateway parses it back)
CONFIRM_ACK = "ack"
CONFIRM_NAK = "nak"

_HID_RE = re.compile(r"^[0-9a-f]{64}$")
_KEY_RE = re.compile(r"^[a-z0-9_]+$")


class FasError(Exception):
    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.code = re.sub(r"(?<!^)(?=[A-Z])", "_", self.__class__.__name__).lower()


class Base64Error(FasError):
    pass


class CipherError(FasError):
    pass


class MissingHid(FasError):
    pass


class MalformedKeyValueText(FasError):
    pass


class MalformedHid(FasError):
    pass


class UnknownVerb(FasError):
    pass


class MalformedBody(FasError):
    pass


@dataclass(frozen=True)
class FasSharedConfig:
    """The configuration contract both sides must agree on."""

    fas_key: bytes
    fas_fqdn: str
    fas_port: int
    session_timeout: float

    def __post_init__(self):
        if len(self.fas_key) != FAS_KEY_LENGTH:
            raise ValueError(
                f"fas_key must be exactly {FAS_KEY_LENGTH} bytes, got {len(self.fas_key)}"
            )
        if self.session_timeout <= 0:
            raise ValueError("session_timeout must be positive")


@dataclass(frozen=True)
class FasParams:
    """Decrypted redirect parameters; hid is the only protocol-required field."""

    hid: str
    client_ip: str = ""
    client_mac: str = ""
    gateway_name: str = ""
    original_url: str = ""
    extra: Mapping[str, str] = field(default_factory=dict)


_PARAM_FIELDS = (
    ("hid", "hid"),
    ("clientip", "client_ip"),
    ("clientmac", "client_mac"),
    ("gatewayname", "gateway_name"),
    ("originurl", "original_url"),
)


def _serialize_params(params: FasParams) -> str:
    pairs = []
    for key, attr in _PARAM_FIELDS:
        pairs.append(f"{key}={quote(getattr(params, attr), safe='')}")
    reserved = {"chk"} | {key for key, _ in _PARAM_FIELDS}
    for key, value in params.extra.items():
        if not _KEY_RE.match(key) or key in reserved:
            raise ValueError(f"invalid extra parameter key {key!r}")
        pairs.append(f"{key}={quote(str(value), safe='')}")
    return ", ".join(pairs)


def encrypt_fas_blob(
    params: FasParams,
    cfg: FasSharedConfig,
    rand: RandomSource = system_random,
) -> str:
    """Serialize, integrity-tag, pad and encrypt redirect parameters."""
    body = _serialize_params(params)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()[:CHK_DIGEST_CHARS]
    plaintext = f"{body}, chk={digest}".encode("utf-8")

    padder = block_padding.PKCS7(128).padder()
    padded = padder.update(plaintext) + padder.finalize()
    iv = rand(IV_LENGTH)
    encryptor = Cipher(algorithms.AES(cfg.fas_key), modes.CBC(iv)).encryptor()
    ciphertext = encryptor.update(padded) + encryptor.finalize()
    return base64.b64encode(iv + ciphertext).decode("ascii")


def decrypt_fas_blob(blob: str, cfg: FasSharedConfig) -> FasParams:
    """Inverse of encrypt_fas_blob; rejects corruption, wrong keys and
    structurally invalid plaintext."""
    try:
        raw = base64.b64decode(blob, validate=True)
    except (binascii.Error, ValueError, TypeError) as exc:
        raise Base64Error(f"fas blob is not valid base64: {exc}") from exc
    if len(raw) < IV_LENGTH + 16 or (len(raw) - IV_LENGTH) % 16 != 0:
        raise CipherError("fas blob shorter than IV plus one cipher block")
    iv, ciphertext = raw[:IV_LENGTH], raw[IV_LENGTH:]
    decryptor = Cipher(algorithms.AES(cfg.fas_key), modes.CBC(iv)).decryptor()
    padded = decryptor.update(ciphertext) + decryptor.finalize()
    unpadder = block_padding.PKCS7(128).unpadder()
    try:
        plaintext = unpadder.update(padded) + unpadder.finalize()
    except ValueError as exc:
        raise CipherError("bad padding: wrong key or corrupted blob") from exc
    try:
        text = plaintext.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CipherError("plaintext is not UTF-8: wrong key or corrupted blob") from exc

    body, sep, chk = text.rpartition(", chk=")
    if not sep:
        raise CipherError("integrity field missing")
    if hashlib.sha256(body.encode("utf-8")).hexdigest()[:CHK_DIGEST_CHARS] != chk:
        raise CipherError("integrity check failed")

    fields: dict[str, str] = {}
    for pair in body.split(", "):
        key, eq, value = pair.partition("=")
        if not eq or not _KEY_RE.match(key):
            raise MalformedKeyValueText(f"malformed parameter pair {pair!r}")
        if key in fields:
            raise MalformedKeyValueText(f"duplicate parameter {key!r}")
        fields[key] = unquote(value)

    if "hid" not in fields:
        raise MissingHid("decrypted parameters carry no hid")
    hid = fields.pop("hid")
    if not _HID_RE.match(hid):
        raise MalformedKeyValueText("hid is not 64 lowercase hex chars")

    known = {key: fields.pop(key, "") for key, _ in _PARAM_FIELDS[1:]}
    return FasParams(
        hid=hid,
        client_ip=known["clientip"],
        client_mac=known["clientmac"],
        gateway_name=known["gatewayname"],
        original_url=known["originurl"],
        extra=fields,
    )


def compute_rhid(hid: str, cfg: FasSharedConfig | bytes) -> str:
    """rhid = SHA-256(hid ‖ key): hid as its UTF-8 text, key as raw bytes."""
    if not isinstance(hid, str) or not _HID_RE.match(hid):
        raise MalformedHid("hid must be 64 lowercase hex chars")
    key = cfg.fas_key if isinstance(cfg, FasSharedConfig) else cfg
    if len(key) != FAS_KEY_LENGTH:
        raise MalformedHid(f"key must be {FAS_KEY_LENGTH} bytes")
    return hashlib.sha256(hid.encode("ascii") + key).hexdigest()


class AuthmonVerb(str, enum.Enum):
    CLEAR = "clear"
    LIST = "list"
    VIEW = "view"


@dataclass
class AuthmonMessage:
    verb: AuthmonVerb
    payload: str = ""
    response_lines: list[str] = field(default_factory=list)

    def to_body(self) -> str:
        fields: dict[str, str] = {"auth_get": self.verb.value}
        if self.payload:
            fields["payload"] = self.payload
        return urlencode(fields)


def parse_authmon_request(body: str) -> AuthmonMessage:
    """Parse one Authmon poll request from its form-encoded POST body."""
    if not isinstance(body, str):
        raise MalformedBody("request body must be text")
    try:
        form = parse_qs(body, keep_blank_values=True, strict_parsing=False)
    except ValueError as exc:
        raise MalformedBody(f"unparseable form body: {exc}") from exc
    verbs = form.get("auth_get", [])
    if len(verbs) != 1:
        raise MalformedBody("exactly one auth_get field required")
    try:
        verb = AuthmonVerb(verbs[0])
    except ValueError:
        raise UnknownVerb(f"unknown auth_get verb {verbs[0]!r}") from None
    payloads = form.get("payload", [])
    if len(payloads) > 1:
        raise MalformedBody("at most one payload field allowed")
    payload = payloads[0] if payloads else ""

    if verb is AuthmonVerb.VIEW:
        if payload in ("", "*"):
            payload = "*"  # absent payload means the full listing
        elif not _is_confirmation(payload):
            raise MalformedBody(f"view payload {payload!r} is neither '*' nor '* <rhid>'")
    return AuthmonMessage(verb=verb, payload=payload)


def _is_confirmation(payload: str) -> bool:
    prefix, sep, rhid = payload.partition(" ")
    return prefix == "*" and bool(sep) and bool(_HID_RE.match(rhid))


def confirmation_rhid(message: AuthmonMessage) -> str | None:
    """The rhid being confirmed, or None for a plain listing request."""
    if message.verb is not AuthmonVerb.VIEW or message.payload == "*":
        return None
    return message.payload.partition(" ")[2]


def render_auth_list(rhids: Iterable[str]) -> str:
    """One "* <rhid>" line per pending client; the empty list renders "*"."""
    lines = []
    for rhid in rhids:
        if not _HID_RE.match(rhid):
            raise MalformedHid(f"rhid {rhid!r} is not 64 lowercase hex chars")
        lines.append(f"* {rhid}")
    return "\n".join(lines) if lines else EMPTY_LIST_RESPONSE


def parse_auth_list(text: str) -> list[str]:
    """Gateway-side inverse of render_auth_list."""
    rhids: list[str] = []
    stripped = text.strip()
    if stripped in ("", EMPTY_LIST_RESPONSE):
        return rhids
    for line in stripped.splitlines():
        prefix, sep, rhid = line.strip().partition(" ")
        if prefix != "*" or not sep or not _HID_RE.match(rhid):
            raise MalformedBody(f"unparseable auth list line {line!r}")
        rhids.append(rhid)
    return rhids
