"""Short-message encryption with RSA only, plus the envelope wire format.

Envelope (all integers big-endian)::

    "QKE1" | mode u8 | sender_len u8 | sender_id | count u32 | body

Modes 1-3 carry ``count`` RSA-OAEP(SHA-256) chunks of 256 bytes each. Mode 4
(session data) carries a ``count``-byte AEAD body, see :mod:`qrkey.session`.

The plaintext side of modes 1-3 is a frame::

    flavor u8 | chunk_total u32 | length u32 | message | trailer

where ``trailer`` is SHA-256(message) for flavor 1 (integrity only) or a
PSS signature by the sender for flavor 2. The frame is cut into 190-byte
slices; each slice is OAEP-encrypted with a label binding the envelope
header, the slice index and the slice total, so chunks cannot be reordered,
dropped, or moved to another envelope.

Flavor 2 signs and then encrypts, rather than applying raw RSA with the
private key; the receiver gets confidentiality plus sender authentication.
"""

import base64
import binascii
import hashlib
import math
import re
import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding

from qrkey.errors import (
    ArmorError,
    AuthenticationFailure,
    DecryptFailure,
    DigestMismatch,
    EnvelopeError,
    OversizePlaintext,
)
from qrkey.identity import MODULUS_BYTES, PublicKeyRecord

MAGIC = b"QKE1"
MODE_CONFIDENTIAL = 0x01
MODE_SIGNED = 0x02
MODE_SECRET_EXCHANGE = 0x03
MODE_SESSION_DATA = 0x04
MODES = (MODE_CONFIDENTIAL, MODE_SIGNED, MODE_SECRET_EXCHANGE, MODE_SESSION_DATA)

FLAVOR_DIGEST = 0x01
FLAVOR_SIGNED = 0x02

CHUNK_BYTES = MODULUS_BYTES
SLICE_BYTES = MODULUS_BYTES - 2 * 32 - 2  # OAEP-SHA256 at 2048 bits: 190
FRAME_HEADER = struct.Struct(">BII")  # 9 bytes
DIGEST_BYTES = 32
SIGNATURE_BYTES = MODULUS_BYTES
MAX_PLAINTEXT = 4096

ARMOR_PREFIX = "QK|"
ARMOR_SUFFIX = "|KQ"


@dataclass(frozen=True)
class Envelope:
    mode: int
    sender_id: str = ""
    chunks: tuple = ()
    payload: bytes = b""  # mode 4 only

    def __post_init__(self):
        if self.mode not in MODES:
            raise EnvelopeError(f"unknown envelope mode {self.mode}")
        if self.mode == MODE_SESSION_DATA:
            if self.chunks:
                raise EnvelopeError("session-data envelopes carry a payload, not chunks")
        elif any(len(c) != CHUNK_BYTES for c in self.chunks):
            raise EnvelopeError(f"asymmetric chunks must be exactly {CHUNK_BYTES} bytes")

    @property
    def chunk_count(self):
        return len(self.chunks)

    def header(self):
        sender = self.sender_id.encode("utf-8")
        if len(sender) > 255:
            raise EnvelopeError("sender id longer than 255 bytes")
        count = len(self.payload) if self.mode == MODE_SESSION_DATA else len(self.chunks)
        return MAGIC + bytes([self.mode, len(sender)]) + sender + struct.pack(">I", count)

    def to_bytes(self):
        body = self.payload if self.mode == MODE_SESSION_DATA else b"".join(self.chunks)
        return self.header() + body

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < 10 or data[:4] != MAGIC:
            raise EnvelopeError("not a QKE1 envelope")
        mode, sender_len = data[4], data[5]
        pos = 6 + sender_len
        if len(data) < pos + 4:
            raise EnvelopeError("envelope header truncated")
        try:
            sender_id = data[6:pos].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EnvelopeError("sender id is not valid UTF-8") from exc
        (count,) = struct.unpack(">I", data[pos : pos + 4])
        body = data[pos + 4 :]
        if mode == MODE_SESSION_DATA:
            if len(body) != count:
                raise EnvelopeError(f"payload length {len(body)} != declared {count}")
            return cls(mode, sender_id, (), body)
        if mode not in MODES:
            raise EnvelopeError(f"unknown envelope mode {mode}")
        if len(body) != count * CHUNK_BYTES:
            raise EnvelopeError(f"body holds {len(body)} bytes, expected {count} chunks of {CHUNK_BYTES}")
        chunks = tuple(body[i : i + CHUNK_BYTES] for i in range(0, len(body), CHUNK_BYTES))
        return cls(mode, sender_id, chunks)


# -- armor ----------------------------------------------------------------------

_WS = re.compile(r"\s+")


def armor(envelope):
    return ARMOR_PREFIX + base64.b64encode(envelope.to_bytes()).decode("ascii") + ARMOR_SUFFIX


def dearmor(text):
    """Parse armored text; whitespace anywhere (e.g. SMS reflow) is ignored."""
    compact = _WS.sub("", text)
    if not compact.startswith(ARMOR_PREFIX):
        raise ArmorError("armored text must start with 'QK|'")
    if not compact.endswith(ARMOR_SUFFIX) or len(compact) < len(ARMOR_PREFIX) + len(ARMOR_SUFFIX):
        raise ArmorError("armored text must end with '|KQ'")
    inner = compact[len(ARMOR_PREFIX) : -len(ARMOR_SUFFIX)]
    try:
        raw = base64.b64decode(inner, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ArmorError(f"invalid base64: {exc}") from exc
    try:
        return Envelope.from_bytes(raw)
    except EnvelopeError as exc:
        raise ArmorError(f"armored payload is not a valid envelope: {exc}") from exc


# -- chunked OAEP -------------------------------------------------------------------


def chunk_count_for(length, trailer_bytes):
    return math.ceil((FRAME_HEADER.size + length + trailer_bytes) / SLICE_BYTES)


def _oaep(label):
    return padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=label)


def _label(header, index, total):
    return header + struct.pack(">II", index, total)


def _public_key(receiver):
    return receiver.public_key if isinstance(receiver, PublicKeyRecord) else receiver


def seal_frame(receiver, mode, sender_id, flavor, message, trailer):
    total = chunk_count_for(len(message), len(trailer))
    frame = FRAME_HEADER.pack(flavor, total, len(message)) + message + trailer
    # header is fixed before the chunks exist, so the count is known up front
    header = Envelope(mode, sender_id).header()[:-4] + struct.pack(">I", total)
    key = _public_key(receiver)
    chunks = tuple(
        key.encrypt(frame[i * SLICE_BYTES : (i + 1) * SLICE_BYTES], _oaep(_label(header, i, total)))
        for i in range(total)
    )
    return Envelope(mode, sender_id, chunks)


def open_frame(private_key, envelope):
    """Decrypt all chunks; return (flavor, message, trailer)."""
    if envelope.mode == MODE_SESSION_DATA:
        raise EnvelopeError("session-data envelopes are opened with a session key")
    total = envelope.chunk_count
    if total == 0:
        raise DecryptFailure("envelope has no chunks")
    header = envelope.header()
    parts = []
    for i, chunk in enumerate(envelope.chunks):
        try:
            parts.append(private_key.decrypt(chunk, _oaep(_label(header, i, total))))
        except ValueError as exc:
            raise DecryptFailure(f"chunk {i} failed to decrypt (wrong key or tampering)") from exc
    frame = b"".join(parts)
    if len(frame) < FRAME_HEADER.size:
        raise DecryptFailure("frame shorter than its header")
    flavor, declared_total, length = FRAME_HEADER.unpack_from(frame)
    trailer_len = {FLAVOR_DIGEST: DIGEST_BYTES, FLAVOR_SIGNED: SIGNATURE_BYTES}.get(flavor)
    if trailer_len is None or declared_total != total:
        raise DecryptFailure("frame header inconsistent with envelope")
    if FRAME_HEADER.size + length + trailer_len != len(frame):
        raise DecryptFailure("frame length inconsistent with envelope")
    message = frame[FRAME_HEADER.size : FRAME_HEADER.size + length]
    return flavor, message, frame[FRAME_HEADER.size + length :]


def _check_size(plaintext, limit):
    if len(plaintext) > limit:
        raise OversizePlaintext(f"{len(plaintext)} bytes exceed the {limit}-byte short-message cap")


# -- public API -------------------------------------------------------------------


def encrypt_for(receiver_pub, plaintext, mode=MODE_CONFIDENTIAL, max_plaintext=MAX_PLAINTEXT, sender_id=""):
    """Confidentiality + integrity: only the receiver's private key opens it.

    ``sender_id`` is a routing hint only and is not authenticated; plain
    mode-1 messages leave it empty.
    """
    plaintext = bytes(plaintext)
    _check_size(plaintext, max_plaintext)
    digest = hashlib.sha256(plaintext).digest()
    return seal_frame(receiver_pub, mode, sender_id, FLAVOR_DIGEST, plaintext, digest)


def decrypt(own_private_key, envelope, mode=MODE_CONFIDENTIAL):
    if envelope.mode != mode:
        raise EnvelopeError(f"expected mode {mode}, got {envelope.mode}")
    flavor, message, trailer = open_frame(_private(own_private_key), envelope)
    if flavor != FLAVOR_DIGEST:
        raise EnvelopeError("envelope is signed; use decrypt_verify")
    if hashlib.sha256(message).digest() != trailer:
        raise DigestMismatch("message digest does not match")
    return message


def encrypt_signed(sender, receiver_pub, plaintext, mode=MODE_SIGNED, max_plaintext=MAX_PLAINTEXT):
    """Sign with the sender's key, then encrypt for the receiver."""
    plaintext = bytes(plaintext)
    _check_size(plaintext, max_plaintext - SIGNATURE_BYTES)
    signature = sender.sign(plaintext)
    return seal_frame(receiver_pub, mode, sender.user_id, FLAVOR_SIGNED, plaintext, signature)


def decrypt_verify(receiver_private_key, sender_pub, envelope, mode=MODE_SIGNED):
    if envelope.mode != mode:
        raise EnvelopeError(f"expected mode {mode}, got {envelope.mode}")
    flavor, message, signature = open_frame(_private(receiver_private_key), envelope)
    if flavor != FLAVOR_SIGNED:
        raise AuthenticationFailure("envelope carries no sender signature")
    if not sender_pub.verify_signature(signature, message):
        raise AuthenticationFailure(f"signature does not verify under {sender_pub.owner_id!r}'s key")
    return message


def _private(key):
    # accept an Identity as well as a bare private key
    return getattr(key, "private_key", key)
