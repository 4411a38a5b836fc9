"""Hybrid sessions: exchange two random secrets under RSA, XOR them into a
one-time AES key, then carry data in AES-GCM envelopes.

Handshake, as driven by the helpers below::

    initiator                                  responder
    state, env = initiate(me, peer_rec)    --> state, reply = accept(me, peer_rec, env)
    complete(state, me, reply, peer_rec)   <--

Each side now holds ``own_secret XOR peer_secret``. Data envelopes use a
12-byte nonce made of a 4-byte direction tag and the 8-byte send counter;
the envelope header is the GCM associated data.
"""

import base64
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from qrkey import msgcrypt
from qrkey.errors import (
    AuthenticationFailure,
    DegenerateKey,
    DigestMismatch,
    EnvelopeError,
    NegotiationError,
    ReplayError,
    SessionNotEstablished,
    UnsupportedKeyLength,
)
from qrkey.msgcrypt import MODE_SECRET_EXCHANGE, MODE_SESSION_DATA, Envelope

KEY_BITS = (128, 256)
INITIATOR = "initiator"
RESPONDER = "responder"
DIRECTION_TAGS = {INITIATOR: 1, RESPONDER: 2}
NONCE_BYTES = 12
TAG_BYTES = 16
MAX_COUNTER = 2**64 - 1


def generate_secret(key_bits=256):
    if key_bits not in KEY_BITS:
        raise UnsupportedKeyLength(f"key_bits must be 128 or 256, not {key_bits}")
    return os.urandom(key_bits // 8)


def xor_bytes(a, b):
    if len(a) != len(b):
        raise NegotiationError(f"secret lengths differ ({len(a)} vs {len(b)} bytes)")
    return bytes(x ^ y for x, y in zip(a, b))


@dataclass
class SessionState:
    role: str
    own_secret: bytes
    peer_secret: bytes = None
    send_counter: int = 0
    recv_counter: int = 0  # lowest counter still acceptable from the peer
    own_id: str = ""
    peer_id: str = ""
    _key: bytes = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.role not in DIRECTION_TAGS:
            raise ValueError(f"role must be {INITIATOR!r} or {RESPONDER!r}")
        if len(self.own_secret) * 8 not in KEY_BITS:
            raise UnsupportedKeyLength(f"secret of {len(self.own_secret)} bytes")

    @property
    def key_bits(self):
        return len(self.own_secret) * 8

    @property
    def established(self):
        return self.peer_secret is not None

    @property
    def session_key(self):
        if self.peer_secret is None:
            return None
        if self._key is None:
            self._key = derive_session_key(self)
        return self._key

    @property
    def peer_role(self):
        return RESPONDER if self.role == INITIATOR else INITIATOR

    def to_json(self):
        return json.dumps(
            {
                "role": self.role,
                "own_id": self.own_id,
                "peer_id": self.peer_id,
                "own_secret": self.own_secret.hex(),
                "peer_secret": None if self.peer_secret is None else self.peer_secret.hex(),
                "send_counter": self.send_counter,
                "recv_counter": self.recv_counter,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            role=d["role"],
            own_secret=bytes.fromhex(d["own_secret"]),
            peer_secret=None if d["peer_secret"] is None else bytes.fromhex(d["peer_secret"]),
            send_counter=int(d["send_counter"]),
            recv_counter=int(d["recv_counter"]),
            own_id=d.get("own_id", ""),
            peer_id=d.get("peer_id", ""),
        )


def derive_session_key(state):
    if state.peer_secret is None:
        raise SessionNotEstablished("peer secret not received yet")
    if len(state.peer_secret) != len(state.own_secret):
        raise NegotiationError(
            f"key length mismatch: own {len(state.own_secret) * 8} bits, peer {len(state.peer_secret) * 8} bits"
        )
    key = xor_bytes(state.own_secret, state.peer_secret)
    if not any(key):
        raise DegenerateKey("both secrets are equal; the XOR key would be all zeros")
    return key


# -- secret exchange ------------------------------------------------------------------


def wrap_secret(own, peer_pub, secret, authenticated=False):
    """Carry ``secret`` to ``peer_pub`` in a mode-3 envelope.

    The inner payload is one length byte (16 or 32) followed by the secret.
    By default this is the unsigned mode-1 construction; ``authenticated``
    signs it with ``own`` first.
    """
    if len(secret) * 8 not in KEY_BITS:
        raise UnsupportedKeyLength(f"secret of {len(secret)} bytes")
    payload = bytes([len(secret)]) + bytes(secret)
    if authenticated:
        return msgcrypt.encrypt_signed(own, peer_pub, payload, mode=MODE_SECRET_EXCHANGE)
    return msgcrypt.encrypt_for(peer_pub, payload, mode=MODE_SECRET_EXCHANGE, sender_id=own.user_id)


def unwrap_secret(own, envelope, sender_pub=None, require_authenticated=False):
    """Return the secret carried by a mode-3 envelope.

    Signed envelopes are always verified, so ``sender_pub`` is required for
    them. ``require_authenticated`` additionally rejects unsigned ones.
    """
    if envelope.mode != MODE_SECRET_EXCHANGE:
        raise EnvelopeError(f"expected a secret-exchange envelope, got mode {envelope.mode}")
    flavor, message, trailer = msgcrypt.open_frame(own.private_key, envelope)
    if flavor == msgcrypt.FLAVOR_SIGNED:
        if sender_pub is None:
            raise AuthenticationFailure("signed secret but no sender key to verify it with")
        if not sender_pub.verify_signature(trailer, message):
            raise AuthenticationFailure(f"secret not signed by {sender_pub.owner_id!r}")
    else:
        if require_authenticated:
            raise AuthenticationFailure("secret exchange was not signed")
        if hashlib.sha256(message).digest() != trailer:
            raise DigestMismatch("secret payload digest does not match")
    if not message or message[0] * 8 not in KEY_BITS or len(message) != 1 + message[0]:
        raise NegotiationError("malformed secret payload")
    return message[1:]


def initiate(own, peer_pub, key_bits=256, authenticated=False):
    state = SessionState(INITIATOR, generate_secret(key_bits), own_id=own.user_id, peer_id=peer_pub.owner_id)
    return state, wrap_secret(own, peer_pub, state.own_secret, authenticated)


def accept(own, peer_pub, envelope, key_bits=None, authenticated=False, require_authenticated=False):
    """Responder side: absorb the initiator's secret and answer with ours.

    ``key_bits`` defaults to the initiator's choice. Passing a different
    value produces a state whose key derivation fails with a negotiation
    error, mirroring two misconfigured peers.
    """
    sender = peer_pub if envelope.sender_id == peer_pub.owner_id else None
    peer_secret = unwrap_secret(own, envelope, sender, require_authenticated)
    bits = len(peer_secret) * 8 if key_bits is None else key_bits
    own_secret = generate_secret(bits)
    while own_secret == peer_secret:
        own_secret = generate_secret(bits)  # never hand out an all-zero key
    state = SessionState(RESPONDER, own_secret, peer_secret, own_id=own.user_id, peer_id=peer_pub.owner_id)
    return state, wrap_secret(own, peer_pub, own_secret, authenticated)


def complete(state, own, envelope, peer_pub=None, require_authenticated=False):
    """Initiator side: absorb the responder's secret and derive the key."""
    state.peer_secret = unwrap_secret(own, envelope, peer_pub, require_authenticated)
    state._key = None
    state.session_key  # fail fast on length mismatch or a degenerate key
    return state


# -- data transport ------------------------------------------------------------------


def _aead(state):
    if not state.established:
        raise SessionNotEstablished("session key not established")
    return AESGCM(state.session_key)


def _header(sender_id, payload_len):
    return Envelope(MODE_SESSION_DATA, sender_id, (), b"\0" * payload_len).header()


def seal(state, plaintext):
    aead = _aead(state)
    if state.send_counter > MAX_COUNTER:
        raise ReplayError("send counter exhausted; start a new session")
    nonce = struct.pack(">IQ", DIRECTION_TAGS[state.role], state.send_counter)
    header = _header(state.own_id, NONCE_BYTES + len(plaintext) + TAG_BYTES)
    body = nonce + aead.encrypt(nonce, bytes(plaintext), header)
    state.send_counter += 1
    return Envelope(MODE_SESSION_DATA, state.own_id, (), body)


def open(state, envelope):  # noqa: A001 - paired with seal
    aead = _aead(state)
    if envelope.mode != MODE_SESSION_DATA:
        raise EnvelopeError(f"expected a session-data envelope, got mode {envelope.mode}")
    body = envelope.payload
    if len(body) < NONCE_BYTES + TAG_BYTES:
        raise AuthenticationFailure("session payload too short")
    direction, counter = struct.unpack(">IQ", body[:NONCE_BYTES])
    if direction != DIRECTION_TAGS[state.peer_role]:
        raise AuthenticationFailure("direction tag does not match the peer's role")
    if counter < state.recv_counter:
        raise ReplayError(f"counter {counter} already seen (next acceptable is {state.recv_counter})")
    try:
        plaintext = aead.decrypt(body[:NONCE_BYTES], body[NONCE_BYTES:], envelope.header())
    except InvalidTag as exc:
        raise AuthenticationFailure("session data failed authentication (tampering or wrong key)") from exc
    state.recv_counter = counter + 1
    return plaintext


open_sealed = open


# -- transcripts ----------------------------------------------------------------------


@dataclass
class Transcript:
    """Wire-level log of one session, as a passive observer would see it."""

    events: list = field(default_factory=list)

    def record(self, sender, receiver, envelope):
        self.events.append((sender, receiver, envelope))
        return envelope

    def envelopes(self):
        return [env for _, _, env in self.events]

    def wire_bytes(self):
        return b"".join(env.to_bytes() for env in self.envelopes())

    def to_json(self):
        return json.dumps(
            [
                {
                    "from": s,
                    "to": r,
                    "mode": env.mode,
                    "envelope": base64.b64encode(env.to_bytes()).decode("ascii"),
                }
                for s, r, env in self.events
            ],
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        return cls(
            [
                (e["from"], e["to"], Envelope.from_bytes(base64.b64decode(e["envelope"])))
                for e in json.loads(text)
            ]
        )
