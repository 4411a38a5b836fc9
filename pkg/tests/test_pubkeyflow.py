import pytest

from qrkey import qr
from qrkey.errors import FingerprintMismatch, NoKeyImage, PinMismatch
from qrkey.identity import generate_identity, serialize_record
from qrkey.portal import HttpPortalClient, RunningPortal
from qrkey.pubkeyflow import KeyImageName, fetch_key, key_image_bytes, publish_key


def test_key_image_name(alice):
    name = KeyImageName.for_record(alice.record)
    assert str(name) == f"pubkey-{alice.record.fingerprint.hex()[:8]}.png"
    assert KeyImageName.parse(str(name)) == name
    assert name.agrees_with(alice.record.fingerprint)
    assert KeyImageName.matches("pubkey-0123abcd.png")
    for bad in ("pubkey-0123ABCD.png", "pubkey-0123abc.png", "pubkey-0123abcd.jpg", "xpubkey-0123abcd.png"):
        assert not KeyImageName.matches(bad)
    with pytest.raises(ValueError):
        KeyImageName("xyz")


def test_key_image_decodes_to_record(alice):
    png = key_image_bytes(alice.record)
    assert qr.decode(png) == serialize_record(alice.record)


def test_publish_and_fetch_through_optimizer(local_client, alice, bob):
    a = local_client("alice")
    b = local_client("bob")
    name = publish_key(alice, a)
    assert a.list_gallery("alice") == [str(name)]
    # the stored image went through lossy recompression
    assert a.download_image("alice", str(name))[:2] == b"\xff\xd8"
    assert fetch_key("alice", b) == alice.record
    assert fetch_key("alice", b, alice.record.fingerprint) == alice.record
    assert fetch_key("alice", b, alice.record.fingerprint_hex.upper()) == alice.record


def test_publish_and_fetch_over_http(alice):
    with RunningPortal() as portal:
        a = HttpPortalClient(portal.url)
        a.create_account("alice")
        publish_key(alice, a)
        assert fetch_key("alice", HttpPortalClient(portal.url)) == alice.record


def test_republish_revokes_old_key(local_client, alice):
    a = local_client("alice")
    publish_key(alice, a)
    a.upload_image("holiday.png", key_image_bytes(alice.record))  # unrelated entry survives
    new = generate_identity("alice", 1_700_000_500)
    name = publish_key(new, a)
    assert sorted(a.list_gallery("alice")) == sorted(["holiday.png", str(name)])
    assert fetch_key("alice", a) == new.record
    with pytest.raises(PinMismatch):
        fetch_key("alice", a, alice.record.fingerprint)


def test_no_key_image(local_client):
    a = local_client("alice")
    with pytest.raises(NoKeyImage):
        fetch_key("alice", a)


def test_record_for_wrong_owner_is_rejected(local_client, bob):
    a = local_client("alice")
    a.upload_image(str(KeyImageName.for_record(bob.record)), key_image_bytes(bob.record))
    with pytest.raises(FingerprintMismatch):
        fetch_key("alice", a)


def test_name_prefix_must_agree(local_client, alice):
    a = local_client("alice")
    a.upload_image("pubkey-00000000.png", key_image_bytes(alice.record))
    with pytest.raises(FingerprintMismatch):
        fetch_key("alice", a)
