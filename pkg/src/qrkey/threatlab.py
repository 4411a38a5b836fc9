"""Attack and carrier experiments that run against a private in-process portal.

Each scenario returns a :class:`ScenarioReport`: an ordered list of
``(actor, action, outcome)`` steps and a verdict. Checkpoints are steps
whose actor is ``"harness"``. Reports never contain key material or
fingerprints, only outcomes, so a fixed seed reproduces the JSON exactly
even though RSA keys come from the OS random source.

Verdicts:

``expected-failure-observed``
    every adversarial attempt failed where the design says it should (for
    control runs: nothing adversarial succeeded and the control held)
``unexpected-success``
    an attack or a doomed carrier succeeded
``error``
    the harness itself misbehaved (e.g. the legitimate path broke)
"""

import base64
import json
import random
from dataclasses import dataclass, field

from qrkey import imagepipe, msgcrypt, qr, session
from qrkey.errors import DecodeError, PinMismatch, QrKeyError
from qrkey.identity import ALG_RSA2048, MODULUS_BYTES, PublicKeyRecord, generate_identity, serialize_record
from qrkey.portal import LocalPortalClient, PortalService
from qrkey.pubkeyflow import fetch_key, key_image_bytes, publish_key

EXPECTED = "expected-failure-observed"
UNEXPECTED = "unexpected-success"
ERROR = "error"

# LSB payloads that come back with more than this fraction of flipped bits
# are unusable; JPEG q75 lands near 0.4, far above it
LSB_BER_THRESHOLD = 0.05
SCENARIO_EPOCH = 1_700_000_000


@dataclass
class ScenarioReport:
    name: str
    steps: list = field(default_factory=list)
    verdict: str = ERROR

    def step(self, actor, action, outcome):
        self.steps.append((actor, action, outcome))

    def checkpoint(self, label, reached):
        self.step("harness", f"checkpoint: {label}", "reached" if reached else "missed")
        return reached

    @property
    def checkpoints(self):
        return {
            action.split(": ", 1)[1]: outcome == "reached"
            for actor, action, outcome in self.steps
            if actor == "harness" and action.startswith("checkpoint: ")
        }

    def to_dict(self):
        return {
            "name": self.name,
            "steps": [{"actor": a, "action": b, "outcome": c} for a, b, c in self.steps],
            "verdict": self.verdict,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["name"], [(s["actor"], s["action"], s["outcome"]) for s in d["steps"]], d["verdict"])


def _portal(profile=imagepipe.DEFAULT_PROFILE):
    return PortalService(profile=profile, clock=lambda: float(SCENARIO_EPOCH))


def _attempt(fn):
    """Run ``fn``; return (succeeded, value or error category)."""
    try:
        return True, fn()
    except QrKeyError as exc:
        return False, exc.category


# -- key substitution -------------------------------------------------------------------


def run_key_substitution(seed=0, pinning=True, substitute=True):
    """Mallory steals bob's portal token and swaps bob's key image for her own."""
    rng = random.Random(seed)
    name = "key-substitution" if substitute else "key-substitution-control"
    report = ScenarioReport(name)
    service = _portal()
    alice_c, bob_c, mallory_c = (LocalPortalClient(service) for _ in range(3))
    for c, user in ((alice_c, "alice"), (bob_c, "bob"), (mallory_c, "mallory")):
        c.create_account(user)
    alice = generate_identity("alice", SCENARIO_EPOCH)
    bob = generate_identity("bob", SCENARIO_EPOCH)

    def message():
        return bytes(rng.getrandbits(8) for _ in range(rng.randint(16, 200)))

    publish_key(bob, bob_c)
    report.step("bob", "publish key image", "ok")
    bob_rec = fetch_key("bob", alice_c)
    pin = bob_rec.fingerprint
    report.step("alice", "fetch bob's key and remember its fingerprint", "ok" if bob_rec == bob.record else "wrong key")

    prior_plain = message()
    prior = msgcrypt.encrypt_for(bob_rec, prior_plain)
    report.step("alice", "send message under bob's key (captured by mallory)", "sent")
    ok, got = _attempt(lambda: msgcrypt.decrypt(bob, prior))
    report.step("bob", "decrypt prior message", "ok" if ok and got == prior_plain else f"failed: {got}")
    legit_ok = ok and got == prior_plain

    mallory_key = generate_identity("bob", SCENARIO_EPOCH)  # fake key claiming bob's name
    if substitute:
        stolen = mallory_c.as_user("bob", bob_c.token)
        publish_key(mallory_key, stolen)
        report.step("mallory", "replace bob's key image using stolen token", "ok")

    if pinning:
        ok, got = _attempt(lambda: fetch_key("bob", alice_c, expected_fingerprint=pin))
        report.step("alice", "pinned fetch of bob's key", "accepted" if ok else got)
        if substitute:
            report.checkpoint("pin-time detection", not ok and got == PinMismatch.category)
        else:
            legit_ok &= ok

    fetched = fetch_key("bob", alice_c)
    report.step("alice", "unpinned fetch of bob's key", "ok")
    new_plain = message()
    new = msgcrypt.encrypt_for(fetched, new_plain)
    report.step("alice", "send new message under fetched key", "sent")
    bob_ok, got = _attempt(lambda: msgcrypt.decrypt(bob, new))
    report.step("bob", "decrypt new message", "ok" if bob_ok and got == new_plain else f"failed: {got}")

    mal_new_ok, got = _attempt(lambda: msgcrypt.decrypt(mallory_key, new))
    mallory_reads_new = mal_new_ok and got == new_plain
    report.step("mallory", "decrypt new message with fake private key", "read" if mallory_reads_new else "failed")
    mal_old_ok, got = _attempt(lambda: msgcrypt.decrypt(mallory_key, prior))
    mallory_reads_prior = mal_old_ok and got == prior_plain
    report.step("mallory", "decrypt prior message with fake private key", "read" if mallory_reads_prior else got)

    if not substitute:
        legit_ok &= bob_ok and not mallory_reads_new and not mallory_reads_prior
        report.verdict = EXPECTED if legit_ok else (UNEXPECTED if mallory_reads_new or mallory_reads_prior else ERROR)
        return report

    c1 = report.checkpoint("new traffic undecryptable by bob", not bob_ok)
    c2 = report.checkpoint("prior traffic safe from mallory", not mallory_reads_prior)

    # bob notices his own failed decryption and restores the original key
    publish_key(bob, bob_c)
    report.step("bob", "republish original key after failed decryption", "ok")
    restored = fetch_key("bob", alice_c, expected_fingerprint=pin if pinning else None)
    again_plain = message()
    again = msgcrypt.encrypt_for(restored, again_plain)
    ok, got = _attempt(lambda: msgcrypt.decrypt(bob, again))
    c3 = report.checkpoint("owner detection and recovery", ok and got == again_plain)
    reached = [c1, c2, c3]
    if pinning:
        reached.append(report.checkpoints["pin-time detection"])

    if not legit_ok:
        report.verdict = ERROR
    elif mallory_reads_prior or bob_ok:
        report.verdict = UNEXPECTED
    else:
        report.verdict = EXPECTED if all(reached) else ERROR
    return report


# -- eavesdropper ------------------------------------------------------------------------


def _eve_attempts(eve, envelope):
    """Every decode path an observer without the parties' private keys has."""
    attempts = [
        lambda: msgcrypt.decrypt(eve, envelope, mode=envelope.mode),
        lambda: session.unwrap_secret(eve, envelope),
        lambda: qr.decode(envelope.to_bytes()),
    ]
    if envelope.mode == msgcrypt.MODE_SESSION_DATA:
        # guessed keys, one per direction
        for role, fill in ((session.RESPONDER, 1), (session.INITIATOR, 2)):
            guess = session.SessionState(role, bytes(32), bytes([fill]) * 32)
            attempts.append(lambda g=guess: session.open(g, envelope))
    return attempts


def run_eavesdropper(sessions=100, seed=0, key_bits=256, messages_per_direction=2):
    """Passively capture whole sessions and try to get at the secrets."""
    rng = random.Random(seed)
    report = ScenarioReport("eavesdropper")
    alice = generate_identity("alice", SCENARIO_EPOCH)
    bob = generate_identity("bob", SCENARIO_EPOCH)
    eve = generate_identity("eve", SCENARIO_EPOCH)

    captured, attempts, successes, leaks = 0, 0, 0, 0
    inversion_ok = True
    for i in range(sessions):
        wire = session.Transcript()
        a_state, env = session.initiate(alice, bob.record, key_bits)
        wire.record("alice", "bob", env)
        b_state, reply = session.accept(bob, alice.record, env)
        wire.record("bob", "alice", reply)
        session.complete(a_state, alice, reply, bob.record)
        for _ in range(messages_per_direction):
            msg = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 256)))
            wire.record("alice", "bob", session.seal(a_state, msg))
            msg = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 256)))
            wire.record("bob", "alice", session.seal(b_state, msg))
        # the harness closes the flow so the capture is a complete session
        for _, receiver, e in wire.events[2:]:
            session.open(b_state if receiver == "bob" else a_state, e)

        blob = wire.wire_bytes()
        for secret in (a_state.own_secret, b_state.own_secret, a_state.session_key):
            leaks += secret in blob
        for e in wire.envelopes():
            captured += 1
            for attempt in _eve_attempts(eve, e):
                attempts += 1
                try:
                    attempt()
                    successes += 1
                except (QrKeyError, ValueError):
                    pass

        if i == 0:
            # sanity inversion: with a private key the same capture does open
            got_a = session.unwrap_secret(bob, wire.events[0][2])
            got_b = session.unwrap_secret(alice, wire.events[1][2])
            inversion_ok = got_a == a_state.own_secret and got_b == b_state.own_secret
            inversion_ok &= session.xor_bytes(got_a, got_b) == a_state.session_key

    report.step("eve", f"capture {sessions} complete sessions", f"{captured} envelopes")
    report.step("eve", "decode attempts without a private key", f"{successes} of {attempts} succeeded")
    report.step("eve", "scan captured bytes for either secret or the session key", f"{leaks} hits")
    report.step("harness", "sanity inversion with both private keys", "secrets recovered" if inversion_ok else "failed")
    report.checkpoint("all decode attempts failed", successes == 0)
    report.checkpoint("no secret substrings on the wire", leaks == 0)
    if not inversion_ok:
        report.verdict = ERROR
    elif successes or leaks:
        report.verdict = UNEXPECTED
    else:
        report.verdict = EXPECTED
    return report


# -- carrier comparison --------------------------------------------------------------------


def seeded_record(seed, owner_id="alice"):
    """A well-formed key record with seeded bytes; carriers only see its bytes."""
    rng = random.Random(seed)
    modulus = bytearray(rng.getrandbits(8) for _ in range(MODULUS_BYTES))
    modulus[0] |= 0x80
    modulus[-1] |= 1
    return PublicKeyRecord.create(owner_id, bytes(modulus), b"\x01\x00\x01", SCENARIO_EPOCH, ALG_RSA2048)


def _carrier_outcomes(profile, seed, cover_size=(800, 600)):
    record = seeded_record(seed)
    payload = serialize_record(record)
    service = _portal(profile)
    client = LocalPortalClient(service)
    client.create_account("alice")
    cover = imagepipe.synthetic_photo(*cover_size, seed=seed)

    block = imagepipe.MetadataBlock({"qrkey": base64.b64encode(payload).decode()})
    meta_file = imagepipe.embed_metadata(cover.to_jpeg(95), block)
    client.upload_image("meta.jpg", meta_file)
    back = imagepipe.extract_metadata(client.download_image("alice", "meta.jpg")).fields.get("qrkey")
    if back is None:
        meta = "absent"
    else:
        meta = "intact" if base64.b64decode(back) == payload else "corrupted"

    client.upload_image("lsb.png", imagepipe.embed_lsb(cover, payload).to_png())
    stored = qr.RasterImage.from_bytes(client.download_image("alice", "lsb.png"))
    ber = imagepipe.bit_error_rate(payload, imagepipe.extract_lsb(stored, len(payload)))
    lsb = "intact" if ber == 0 else ("corrupted" if ber > LSB_BER_THRESHOLD else "degraded")

    client.upload_image("qr.png", key_image_bytes(record))
    try:
        qr_out = "intact" if qr.decode(client.download_image("alice", "qr.png")) == payload else "corrupted"
    except DecodeError:
        qr_out = "unreadable"
    return {"qr": qr_out, "metadata": meta, "lsb": lsb, "lsb_ber": ber}


def _profile_label(profile):
    if profile == imagepipe.LOSSLESS_PROFILE:
        return "lossless"
    if profile == imagepipe.DEFAULT_PROFILE:
        return "default"
    return f"custom(q={profile.jpeg_quality}, jpeg={profile.force_jpeg}, strip={profile.strip_metadata})"


def _destructive(profile):
    return profile.force_jpeg or profile.strip_metadata


def run_carrier_comparison(profile=imagepipe.DEFAULT_PROFILE, seed=0):
    """Push one key payload through metadata, LSB and QR carriers and the portal.

    Under a destructive profile only the QR should survive. Under a profile
    that neither recompresses nor strips, all three should, which places
    the damage in the pipeline rather than in the carriers.
    """
    label = _profile_label(profile)
    report = ScenarioReport("carrier-comparison" if _destructive(profile) else "carrier-comparison-control")
    out = _carrier_outcomes(profile, seed)
    report.step("alice", f"upload key as metadata ({label} profile)", out["metadata"])
    report.step("alice", f"upload key as LSB payload ({label} profile)", f"{out['lsb']} (BER {out['lsb_ber']:.4f})")
    report.step("alice", f"upload key as QR image ({label} profile)", out["qr"])
    if out["qr"] != "intact":
        report.verdict = ERROR
    elif _destructive(profile):
        meta_dead = out["metadata"] == "absent" or not profile.strip_metadata
        lsb_dead = out["lsb"] == "corrupted" or not profile.force_jpeg
        if profile.strip_metadata:
            report.checkpoint("metadata erased", out["metadata"] == "absent")
        if profile.force_jpeg:
            report.checkpoint("LSB payload corrupted", out["lsb"] == "corrupted")
        report.checkpoint("QR payload intact", True)
        report.verdict = EXPECTED if meta_dead and lsb_dead else UNEXPECTED
    else:
        survived = out["metadata"] == "intact" and out["lsb"] == "intact"
        report.checkpoint("all carriers survive", survived)
        report.verdict = EXPECTED if survived else ERROR
    return report


def run_quality_sweep(qualities=(90, 75, 60), seed=0):
    """Carrier comparison at several JPEG qualities of the default profile."""
    report = ScenarioReport("quality-sweep")
    verdicts = []
    for q in qualities:
        profile = imagepipe.OptimizationProfile(jpeg_quality=q)
        out = _carrier_outcomes(profile, seed)
        report.step("portal", f"jpeg quality {q}: QR", out["qr"])
        report.step("portal", f"jpeg quality {q}: metadata", out["metadata"])
        report.step("portal", f"jpeg quality {q}: LSB", f"{out['lsb']} (BER {out['lsb_ber']:.4f})")
        report.checkpoint(f"QR intact at quality {q}", out["qr"] == "intact")
        ok = out["qr"] == "intact"
        doomed_survived = out["metadata"] != "absent" or out["lsb"] != "corrupted"
        verdicts.append(ERROR if not ok else (UNEXPECTED if doomed_survived else EXPECTED))
    report.verdict = next((v for v in (ERROR, UNEXPECTED) if v in verdicts), EXPECTED)
    return report


SCENARIOS = {
    "key-substitution": lambda seed: run_key_substitution(seed),
    "key-substitution-control": lambda seed: run_key_substitution(seed, substitute=False),
    "eavesdropper": lambda seed: run_eavesdropper(seed=seed),
    "carrier-comparison": lambda seed: run_carrier_comparison(seed=seed),
    "carrier-control": lambda seed: run_carrier_comparison(imagepipe.LOSSLESS_PROFILE, seed),
    "quality-sweep": lambda seed: run_quality_sweep(seed=seed),
}


def run_scenario(name, seed=0):
    try:
        runner = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return runner(seed)
