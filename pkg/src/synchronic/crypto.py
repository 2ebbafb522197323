"""Hashing, canonical encoding and unique signatures.

Signatures are RSA PKCS#1 v1.5 over SHA-256. For a fixed public key and
message the padded message is fixed and RSA is a permutation of
``[0, n)``, so exactly one tag of exactly ``k`` bytes verifies. Verification
insists on that length, which makes the scheme unique rather than merely
deterministic for an honest signer.

Key generation is deterministic from a seed so that tests, simulations and
walkthroughs are reproducible.
"""

from __future__ import annotations

import functools
import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

from synchronic.errors import EncodingError, KeyFormatError

DIGEST_SIZE = 32
EMPTY_DIGEST = b""

TYPE_UINT = 0x01
TYPE_BYTES = 0x02
TYPE_STR = 0x03

_UINT_MAX = (1 << 64) - 1
_PUBLIC_EXPONENT = 65537
DEFAULT_KEY_BITS = 2048

Field = Union[int, bytes, str]


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def to_hex(digest: bytes) -> str:
    return digest.hex()


def from_hex(text: str) -> bytes:
    """Parse a digest from lowercase/uppercase hex; ``""`` is the empty digest."""
    try:
        raw = bytes.fromhex(text)
    except (TypeError, ValueError) as exc:
        raise EncodingError(f"not hex: {text!r}") from exc
    if len(raw) not in (0, DIGEST_SIZE):
        raise EncodingError(f"digest must be 0 or {DIGEST_SIZE} bytes, got {len(raw)}")
    return raw


def is_digest(value: object) -> bool:
    return isinstance(value, bytes) and len(value) == DIGEST_SIZE


def encode(fields: Sequence[Field]) -> bytes:
    """Type-tagged, length-prefixed concatenation of ``fields``.

    Each field is one type byte, an 8-byte big-endian payload length, then the
    payload. Integers are unsigned 64-bit big-endian; strings are UTF-8.
    """
    out = bytearray()
    for field in fields:
        if isinstance(field, bool):
            raise EncodingError("booleans are not encodable")
        if isinstance(field, int):
            if not 0 <= field <= _UINT_MAX:
                raise EncodingError(f"integer out of range: {field}")
            tag, payload = TYPE_UINT, field.to_bytes(8, "big")
        elif isinstance(field, (bytes, bytearray, memoryview)):
            tag, payload = TYPE_BYTES, bytes(field)
        elif isinstance(field, str):
            tag, payload = TYPE_STR, field.encode("utf-8")
        else:
            raise EncodingError(f"unsupported field type: {type(field).__name__}")
        out.append(tag)
        out += struct.pack(">Q", len(payload))
        out += payload
    return bytes(out)


def decode(data: bytes) -> list[Field]:
    """Inverse of :func:`encode`."""
    fields: list[Field] = []
    pos = 0
    view = memoryview(data)
    while pos < len(data):
        if pos + 9 > len(data):
            raise EncodingError("truncated field header")
        tag = data[pos]
        (length,) = struct.unpack_from(">Q", data, pos + 1)
        pos += 9
        if pos + length > len(data):
            raise EncodingError("truncated field payload")
        payload = bytes(view[pos : pos + length])
        pos += length
        if tag == TYPE_UINT:
            if length != 8:
                raise EncodingError("uint payload must be 8 bytes")
            fields.append(int.from_bytes(payload, "big"))
        elif tag == TYPE_BYTES:
            fields.append(payload)
        elif tag == TYPE_STR:
            try:
                fields.append(payload.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise EncodingError("invalid UTF-8 in string field") from exc
        else:
            raise EncodingError(f"unknown type byte 0x{tag:02x}")
    return fields


@dataclass(frozen=True)
class AuthKeypair:
    secret_key: bytes  # PKCS#1 DER
    public_key: bytes  # SubjectPublicKeyInfo DER

    def __repr__(self) -> str:
        return f"AuthKeypair(public_key={hash_bytes(self.public_key).hex()[:16]}...)"


def _drbg(seed: bytes, label: bytes) -> Iterable[bytes]:
    counter = 0
    while True:
        yield hash_bytes(b"synchronic-keygen" + encode([seed, label, counter]))
        counter += 1


def _prime_from(seed: bytes, label: bytes, bits: int) -> int:
    stream = _drbg(seed, label)
    nbytes = bits // 8
    while True:
        buf = b""
        while len(buf) < nbytes:
            buf += next(stream)
        # top two bits set keeps p*q at exactly 2*bits
        start = int.from_bytes(buf[:nbytes], "big") | (3 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(start))
        if p.bit_length() == bits and gmpy2.gcd(_PUBLIC_EXPONENT, p - 1) == 1:
            return p


def keygen(seed: bytes, bits: int = DEFAULT_KEY_BITS) -> AuthKeypair:
    """Derive an RSA keypair deterministically from ``seed``."""
    if not seed:
        raise KeyFormatError("seed must be nonempty")
    if bits % 16 or bits < 1024:
        raise KeyFormatError(f"unsupported key size: {bits}")
    return _keygen_cached(bytes(seed), bits)


@functools.lru_cache(maxsize=256)
def _keygen_cached(seed: bytes, bits: int) -> AuthKeypair:
    half = bits // 2
    p = _prime_from(seed, b"p", half)
    q = _prime_from(seed, b"q", half)
    retry = 0
    while q == p:
        retry += 1
        q = _prime_from(seed, b"q" + bytes([retry]), half)
    if p < q:
        p, q = q, p
    e = _PUBLIC_EXPONENT
    d = int(gmpy2.invert(e, (p - 1) * (q - 1)))
    numbers = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=d % (p - 1),
        dmq1=d % (q - 1),
        iqmp=int(gmpy2.invert(q, p)),
        public_numbers=rsa.RSAPublicNumbers(e, p * q),
    )
    private = numbers.private_key()
    secret = private.private_bytes(
        serialization.Encoding.DER,
        serialization.PrivateFormat.TraditionalOpenSSL,
        serialization.NoEncryption(),
    )
    public = private.public_key().public_bytes(
        serialization.Encoding.DER,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    )
    return AuthKeypair(secret_key=secret, public_key=public)


@functools.lru_cache(maxsize=256)
def _load_secret(secret_key: bytes) -> rsa.RSAPrivateKey:
    try:
        key = serialization.load_der_private_key(secret_key, password=None)
    except (ValueError, TypeError) as exc:
        raise KeyFormatError("malformed secret key") from exc
    if not isinstance(key, rsa.RSAPrivateKey):
        raise KeyFormatError("secret key is not RSA")
    return key


@functools.lru_cache(maxsize=1024)
def _load_public(public_key: bytes) -> rsa.RSAPublicKey | None:
    try:
        key = serialization.load_der_public_key(public_key)
    except (ValueError, TypeError):
        return None
    if not isinstance(key, rsa.RSAPublicKey):
        return None
    return key


def public_key_of(secret_key: bytes) -> bytes:
    return _load_secret(secret_key).public_key().public_bytes(
        serialization.Encoding.DER,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    )


def sign_unique(message: bytes, secret_key: bytes) -> bytes:
    if not isinstance(secret_key, (bytes, bytearray)):
        raise KeyFormatError("secret key must be bytes")
    key = _load_secret(bytes(secret_key))
    return key.sign(bytes(message), padding.PKCS1v15(), hashes.SHA256())


def verify_unique(message: bytes, tag: bytes, public_key: bytes) -> bool:
    """True iff ``tag`` is the one valid tag for ``message`` under ``public_key``.

    Total: malformed inputs of any kind yield False.
    """
    if not isinstance(public_key, (bytes, bytearray)) or not isinstance(tag, (bytes, bytearray)):
        return False
    key = _load_public(bytes(public_key))
    if key is None:
        return False
    if len(tag) != (key.key_size + 7) // 8:
        return False
    try:
        key.verify(bytes(tag), bytes(message), padding.PKCS1v15(), hashes.SHA256())
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True
