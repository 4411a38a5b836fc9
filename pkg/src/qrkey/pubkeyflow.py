"""Publish a public key as a QR image in the owner's gallery, and fetch it back.

The gallery holds exactly one ``pubkey-<hex8>.png`` entry per account, where
``hex8`` is the first 8 hex digits of the key fingerprint. Publishing a new
key uploads the new image first and then removes the older ones, so the
gallery never shows two keys and never shows none. That replacement is the
revocation mechanism.
"""

import re
from dataclasses import dataclass

from qrkey import qr
from qrkey.errors import FingerprintMismatch, NoKeyImage, PinMismatch
from qrkey.identity import parse_record, serialize_record

__all__ = [
    "KeyImageName",
    "fetch_key",
    "key_image_bytes",
    "parse_record",
    "publish_key",
    "serialize_record",
]

MODULE_PX = 6
QUIET_ZONE = 4
EC_LEVEL = "H"
_KEY_NAME = re.compile(r"^pubkey-([0-9a-f]{8})\.png$")


@dataclass(frozen=True)
class KeyImageName:
    prefix: str

    def __post_init__(self):
        if not re.fullmatch(r"[0-9a-f]{8}", self.prefix):
            raise ValueError(f"fingerprint prefix must be 8 lowercase hex digits, got {self.prefix!r}")

    def __str__(self):
        return f"pubkey-{self.prefix}.png"

    @classmethod
    def for_record(cls, record):
        return cls(record.fingerprint_hex[:8])

    @classmethod
    def parse(cls, name):
        m = _KEY_NAME.match(name)
        if not m:
            raise ValueError(f"{name!r} is not a key image name")
        return cls(m.group(1))

    @staticmethod
    def matches(name):
        return bool(_KEY_NAME.match(name))

    def agrees_with(self, fingerprint):
        return fingerprint.hex().startswith(self.prefix)


def key_image_bytes(record, module_px=MODULE_PX):
    """PNG bytes of the QR symbol carrying ``record``."""
    symbol = qr.encode(serialize_record(record), ec_level=EC_LEVEL)
    return qr.render(symbol, module_px=module_px, quiet_zone_modules=QUIET_ZONE).to_png()


def publish_key(identity, client):
    """Upload ``identity``'s key image and drop any earlier key images."""
    record = identity.record
    name = KeyImageName.for_record(record)
    client.upload_image(str(name), key_image_bytes(record))
    for old in client.list_gallery(client.user_id):
        if KeyImageName.matches(old) and old != str(name):
            client.delete_image(old)
    return name


def fetch_key(owner_id, client, expected_fingerprint=None):
    """Download, decode and check ``owner_id``'s published key.

    ``expected_fingerprint`` (bytes or hex) pins the key: anything else is
    rejected with :class:`PinMismatch` even if it is internally consistent.
    """
    names = [n for n in client.list_gallery(owner_id) if KeyImageName.matches(n)]
    if not names:
        raise NoKeyImage(f"{owner_id!r} has no pubkey-* image")
    name = names[-1]  # newest wins if a racing publish left two behind
    record = parse_record(qr.decode(client.download_image(owner_id, name)))
    if record.owner_id != owner_id:
        raise FingerprintMismatch(f"key image in {owner_id!r}'s gallery belongs to {record.owner_id!r}")
    if not KeyImageName.parse(name).agrees_with(record.fingerprint):
        raise FingerprintMismatch(f"{name} does not match key fingerprint {record.fingerprint_hex[:8]}")
    if expected_fingerprint is not None:
        pin = expected_fingerprint.hex() if isinstance(expected_fingerprint, bytes) else expected_fingerprint.lower()
        if record.fingerprint_hex != pin:
            raise PinMismatch(f"{owner_id!r} now publishes {record.fingerprint_hex}, pinned {pin}")
    return record
