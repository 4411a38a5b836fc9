"""Keypairs, public key records, fingerprints, and the on-disk keystore.

Byte layouts (all documented in docs/FORMATS.md):

* fingerprint input: for each of owner_id (UTF-8), algorithm_id (1 byte),
  modulus, public_exponent, issued_at (u64 LE) -- a u32 little-endian length
  followed by the field bytes; digest is SHA-256 of the concatenation.
* record ("QKR1"): magic, version, algorithm_id, u8-prefixed owner_id,
  issued_at (u64 BE), u8-prefixed exponent, 256-byte modulus, fingerprint.
* keystore ("QKS1"): magic, version, u32 entry count, u32-prefixed entries,
  SHA-256 of everything before it.
"""

import hashlib
import os
import struct
import tempfile
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

from qrkey.errors import (
    BadMagic,
    BadPassphrase,
    FingerprintMismatch,
    InvalidUserId,
    KeystoreCorrupt,
    KeystoreNotFound,
    Truncated,
    UnsupportedAlgorithm,
)

ALG_RSA2048 = 0x01
MODULUS_BITS = 2048
MODULUS_BYTES = MODULUS_BITS // 8
PUBLIC_EXPONENT = 65537
MAX_USER_ID_BYTES = 64

RECORD_MAGIC = b"QKR1"
RECORD_VERSION = 0x01
KEYSTORE_MAGIC = b"QKS1"
KEYSTORE_VERSION = 0x01
_ENTRY_IDENTITY = 0x01
_ENTRY_RECORD = 0x02

PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.MAX_LENGTH)


def validate_user_id(user_id):
    if not isinstance(user_id, str) or not user_id:
        raise InvalidUserId("user id must be a non-empty string")
    if len(user_id.encode("utf-8")) > MAX_USER_ID_BYTES:
        raise InvalidUserId(f"user id exceeds {MAX_USER_ID_BYTES} bytes of UTF-8")
    # ids appear in URL paths and file names
    if "/" in user_id or any(ord(ch) < 0x20 or ord(ch) == 0x7F for ch in user_id):
        raise InvalidUserId("user id must not contain '/' or control characters")
    return user_id


def _int_bytes(value, length=None):
    if length is None:
        length = max(1, (value.bit_length() + 7) // 8)
    return value.to_bytes(length, "big")


def canonical_bytes(owner_id, algorithm_id, modulus, public_exponent, issued_at):
    """Fingerprint input: u32-LE length-prefixed fields in fixed order."""
    parts = (
        owner_id.encode("utf-8"),
        bytes([algorithm_id]),
        bytes(modulus),
        bytes(public_exponent),
        struct.pack("<Q", issued_at),
    )
    return b"".join(struct.pack("<I", len(p)) + p for p in parts)


@dataclass(frozen=True)
class PublicKeyRecord:
    owner_id: str
    algorithm_id: int
    modulus: bytes
    public_exponent: bytes
    issued_at: int
    fingerprint: bytes

    @classmethod
    def create(cls, owner_id, modulus, public_exponent, issued_at, algorithm_id=ALG_RSA2048):
        validate_user_id(owner_id)
        if algorithm_id != ALG_RSA2048:
            raise UnsupportedAlgorithm(f"algorithm id {algorithm_id:#04x} is not supported")
        if len(modulus) != MODULUS_BYTES:
            raise ValueError(f"modulus must be {MODULUS_BYTES} bytes")
        if not 1 <= len(public_exponent) <= 8:
            raise ValueError("public exponent must be 1..8 bytes")
        digest = hashlib.sha256(
            canonical_bytes(owner_id, algorithm_id, modulus, public_exponent, issued_at)
        ).digest()
        return cls(owner_id, algorithm_id, bytes(modulus), bytes(public_exponent), int(issued_at), digest)

    @classmethod
    def from_public_key(cls, owner_id, public_key, issued_at):
        numbers = public_key.public_numbers()
        if public_key.key_size != MODULUS_BITS:
            raise ValueError(f"expected a {MODULUS_BITS}-bit modulus, got {public_key.key_size}")
        return cls.create(owner_id, _int_bytes(numbers.n, MODULUS_BYTES), _int_bytes(numbers.e), issued_at)

    @property
    def fingerprint_hex(self):
        return self.fingerprint.hex()

    @cached_property
    def public_key(self):
        n = int.from_bytes(self.modulus, "big")
        e = int.from_bytes(self.public_exponent, "big")
        return rsa.RSAPublicNumbers(e, n).public_key()

    def verify_signature(self, signature, message):
        try:
            self.public_key.verify(signature, message, PSS, hashes.SHA256())
        except InvalidSignature:
            return False
        return True


def fingerprint(record):
    """SHA-256 over the record's canonical serialization (recomputed, not cached)."""
    return hashlib.sha256(
        canonical_bytes(record.owner_id, record.algorithm_id, record.modulus, record.public_exponent, record.issued_at)
    ).digest()


def serialize_record(record):
    owner = record.owner_id.encode("utf-8")
    return b"".join(
        (
            RECORD_MAGIC,
            bytes([RECORD_VERSION, record.algorithm_id, len(owner)]),
            owner,
            struct.pack(">Q", record.issued_at),
            bytes([len(record.public_exponent)]),
            record.public_exponent,
            record.modulus,
            record.fingerprint,
        )
    )


def parse_record(data):
    data = bytes(data)
    if len(data) < 4 or data[:4] != RECORD_MAGIC:
        raise BadMagic("not a QKR1 public key record")

    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise Truncated(f"record truncated at offset {pos} (need {n} more bytes)")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    version, algorithm_id, owner_len = take(3)
    if version != RECORD_VERSION:
        raise BadMagic(f"unsupported record version {version}")
    if algorithm_id != ALG_RSA2048:
        raise UnsupportedAlgorithm(f"algorithm id {algorithm_id:#04x} is not supported")
    try:
        owner_id = take(owner_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FingerprintMismatch(f"owner id is not valid UTF-8: {exc}") from exc
    (issued_at,) = struct.unpack(">Q", take(8))
    exponent = take(take(1)[0])
    modulus = take(MODULUS_BYTES)
    digest = take(32)
    if pos != len(data):
        raise Truncated(f"{len(data) - pos} unexpected trailing bytes after record")
    try:
        record = PublicKeyRecord.create(owner_id, modulus, exponent, issued_at, algorithm_id)
    except (InvalidUserId, ValueError) as exc:
        raise FingerprintMismatch(f"record fields invalid: {exc}") from exc
    if record.fingerprint != digest:
        raise FingerprintMismatch("stored fingerprint does not match record contents")
    return record


def record_size(owner_id, exponent_len=3):
    return 4 + 1 + 1 + 1 + len(owner_id.encode("utf-8")) + 8 + 1 + exponent_len + MODULUS_BYTES + 32


@dataclass(frozen=True, eq=False)
class Identity:
    user_id: str
    private_key: rsa.RSAPrivateKey = field(repr=False)
    created_at: int

    @cached_property
    def record(self):
        return PublicKeyRecord.from_public_key(self.user_id, self.private_key.public_key(), self.created_at)

    @property
    def public_key(self):
        return self.private_key.public_key()

    @property
    def fingerprint(self):
        return self.record.fingerprint

    def sign(self, message):
        return self.private_key.sign(message, PSS, hashes.SHA256())

    def __eq__(self, other):
        if not isinstance(other, Identity):
            return NotImplemented
        return (
            self.user_id == other.user_id
            and self.created_at == other.created_at
            and self.private_key.private_numbers() == other.private_key.private_numbers()
        )

    def __hash__(self):
        return hash((self.user_id, self.created_at, self.fingerprint))


def generate_identity(user_id, created_at=None):
    validate_user_id(user_id)
    key = rsa.generate_private_key(public_exponent=PUBLIC_EXPONENT, key_size=MODULUS_BITS)
    return Identity(user_id, key, int(time.time()) if created_at is None else int(created_at))


# -- keystore -------------------------------------------------------------------


@dataclass
class Keystore:
    """Local identities (with private keys) and imported peer records.

    Private keys only ever live in ``Identity`` entries; peer entries are
    public records. Mutations are not synchronized.
    """

    path: Path
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self.path = Path(self.path)

    def add_identity(self, identity):
        self.entries[identity.user_id] = identity

    def add_peer(self, record):
        existing = self.entries.get(record.owner_id)
        if isinstance(existing, Identity):
            raise ValueError(f"{record.owner_id!r} is a local identity; refusing to shadow it with a peer record")
        self.entries[record.owner_id] = record

    def identity(self, user_id):
        entry = self.entries.get(user_id)
        if not isinstance(entry, Identity):
            raise KeyError(f"no local identity {user_id!r}")
        return entry

    def peer(self, user_id):
        entry = self.entries.get(user_id)
        if isinstance(entry, Identity):
            return entry.record
        if entry is None:
            raise KeyError(f"no key for {user_id!r}")
        return entry

    def identities(self):
        return [e for e in self.entries.values() if isinstance(e, Identity)]

    def __eq__(self, other):
        if not isinstance(other, Keystore):
            return NotImplemented
        return self.path == other.path and self.entries == other.entries


def _encode_entry(entry, passphrase):
    if isinstance(entry, Identity):
        if not passphrase:
            raise BadPassphrase("a passphrase is required to store private keys")
        der = entry.private_key.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.BestAvailableEncryption(passphrase),
        )
        uid = entry.user_id.encode("utf-8")
        return (
            bytes([_ENTRY_IDENTITY, len(uid)]) + uid + struct.pack(">QI", entry.created_at, len(der)) + der
        )
    body = serialize_record(entry)
    return bytes([_ENTRY_RECORD]) + body


def _decode_entry(blob, passphrase):
    kind = blob[0]
    if kind == _ENTRY_RECORD:
        return parse_record(blob[1:])
    if kind != _ENTRY_IDENTITY:
        raise KeystoreCorrupt(f"unknown entry kind {kind}")
    uid_len = blob[1]
    user_id = blob[2 : 2 + uid_len].decode("utf-8")
    created_at, der_len = struct.unpack(">QI", blob[2 + uid_len : 14 + uid_len])
    der = blob[14 + uid_len : 14 + uid_len + der_len]
    if not passphrase:
        raise BadPassphrase(f"a passphrase is required to unlock {user_id!r}")
    try:
        key = serialization.load_der_private_key(der, password=passphrase)
    except (ValueError, TypeError) as exc:
        raise BadPassphrase(f"cannot unlock private key of {user_id!r}") from exc
    return Identity(user_id, key, created_at)


def _as_bytes(passphrase):
    if passphrase is None or isinstance(passphrase, bytes):
        return passphrase
    return passphrase.encode("utf-8")


def save_keystore(store, passphrase=None):
    passphrase = _as_bytes(passphrase)
    body = bytearray(KEYSTORE_MAGIC)
    body.append(KEYSTORE_VERSION)
    body += struct.pack(">I", len(store.entries))
    for entry in store.entries.values():
        blob = _encode_entry(entry, passphrase)
        body += struct.pack(">I", len(blob)) + blob
    body += hashlib.sha256(body).digest()

    path = store.path
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".qks-", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(body)
        os.chmod(tmp, 0o600)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_keystore(path, passphrase=None):
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise KeystoreNotFound(f"no keystore at {path}") from exc
    if len(data) < 4 + 1 + 4 + 32:
        raise KeystoreCorrupt("keystore file too short")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise KeystoreCorrupt("keystore checksum mismatch")
    if body[:4] != KEYSTORE_MAGIC or body[4] != KEYSTORE_VERSION:
        raise KeystoreCorrupt("not a QKS1 keystore")
    passphrase = _as_bytes(passphrase)
    (count,) = struct.unpack(">I", body[5:9])
    pos = 9
    store = Keystore(path)
    try:
        for _ in range(count):
            (length,) = struct.unpack(">I", body[pos : pos + 4])
            blob = body[pos + 4 : pos + 4 + length]
            if len(blob) != length:
                raise KeystoreCorrupt("keystore entry truncated")
            pos += 4 + length
            entry = _decode_entry(blob, passphrase)
            key = entry.user_id if isinstance(entry, Identity) else entry.owner_id
            store.entries[key] = entry
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise KeystoreCorrupt(f"malformed keystore entry: {exc}") from exc
    except (BadMagic, Truncated, FingerprintMismatch) as exc:
        raise KeystoreCorrupt(f"malformed peer record: {exc}") from exc
    if pos != len(body):
        raise KeystoreCorrupt("trailing bytes after last keystore entry")
    return store
