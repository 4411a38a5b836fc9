"""Exception hierarchy.

Every error carries a ``category`` slug. The CLI prints it on stderr so
scripts can branch on the failure kind without parsing prose.
"""


class QrKeyError(Exception):
    category = "error"


# identity / keystore
class InvalidUserId(QrKeyError, ValueError):
    category = "invalid-user-id"


class UnsupportedAlgorithm(QrKeyError, ValueError):
    category = "unsupported-algorithm"


class KeystoreNotFound(QrKeyError, FileNotFoundError):
    category = "keystore-not-found"


class KeystoreCorrupt(QrKeyError):
    category = "keystore-corrupt"


class BadPassphrase(QrKeyError):
    category = "bad-passphrase"


# qr symbology
class CapacityExceeded(QrKeyError, ValueError):
    category = "capacity-exceeded"


class DecodeError(QrKeyError):
    category = "decode-error"


class NoSymbolFound(DecodeError):
    category = "no-symbol-found"


class FormatInfoUnreadable(DecodeError):
    category = "format-info-unreadable"


class UnrecoverableErrors(DecodeError):
    category = "unrecoverable-errors"


class MalformedSegment(DecodeError):
    category = "malformed-segment"


# image pipeline
class ImageFormatError(QrKeyError, ValueError):
    category = "bad-image"


class PayloadTooLarge(QrKeyError, ValueError):
    category = "payload-too-large"


# portal
class PortalError(QrKeyError):
    category = "portal-error"


class Unauthorized(PortalError):
    category = "unauthorized"


class Forbidden(PortalError):
    category = "forbidden"


class NotFound(PortalError):
    category = "not-found"


class Conflict(PortalError):
    category = "conflict"


class PortalUnreachable(PortalError):
    category = "portal-unreachable"


# key records and flows
class RecordError(QrKeyError, ValueError):
    category = "record-error"


class BadMagic(RecordError):
    category = "bad-magic"


class Truncated(RecordError):
    category = "truncated"


class FingerprintMismatch(RecordError):
    category = "fingerprint-mismatch"


class NoKeyImage(QrKeyError):
    category = "no-key"


class PinMismatch(QrKeyError):
    category = "pin-mismatch"


# messaging
class EnvelopeError(QrKeyError, ValueError):
    category = "envelope-error"


class ArmorError(EnvelopeError):
    category = "armor-error"


class OversizePlaintext(QrKeyError, ValueError):
    category = "oversize-plaintext"


class DecryptFailure(QrKeyError):
    category = "decrypt-failure"


class DigestMismatch(QrKeyError):
    category = "digest-mismatch"


class AuthenticationFailure(QrKeyError):
    category = "authentication-failure"


# sessions
class UnsupportedKeyLength(QrKeyError, ValueError):
    category = "unsupported-key-length"


class NegotiationError(QrKeyError):
    category = "negotiation-error"


class DegenerateKey(NegotiationError):
    category = "degenerate-key"


class SessionNotEstablished(QrKeyError):
    category = "session-not-established"


class ReplayError(QrKeyError):
    category = "replay"
