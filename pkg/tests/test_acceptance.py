"""Exit criteria, one test each.

Run with the rest of the suite, alone with ``pytest -m acceptance``, or as a
script (``python3 tests/test_acceptance.py``). Each criterion prints one
PASS/FAIL line in the "acceptance criteria" summary section.
"""

import math
import os
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from conftest import record_acceptance
from qrkey import imagepipe, msgcrypt, session, threatlab
from qrkey.errors import DecodeError, Forbidden, QrKeyError, ReplayError, Unauthorized
from qrkey.identity import generate_identity, record_size, serialize_record
from qrkey.imagepipe import synthetic_photo
from qrkey.portal import HttpPortalClient, LocalPortalClient, PortalService, RunningPortal
from qrkey.portal.service import FRIENDS, PUBLIC
from qrkey.pubkeyflow import fetch_key, publish_key
from qrkey.qr import capacity_table, decode, render, select_version, symbol_from_codewords
from qrkey.qr.blocks import add_error_correction
from qrkey.qr.encoder import data_codeword_stream
from qrkey.qr.tables import block_layout, total_codewords

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parents[1]


@contextmanager
def criterion(number, title):
    """Record PASS if the block completes, FAIL if anything in it raises."""
    detail = {"text": ""}
    try:
        yield detail
    except BaseException:
        record_acceptance(number, title, False, detail["text"])
        raise
    record_acceptance(number, title, True, detail["text"])


# -- 1 -----------------------------------------------------------------------------------------


def test_01_key_survival_through_portal():
    with criterion(1, "100 random keys survive the portal pipeline byte-exact") as d:
        start = time.perf_counter()
        ok = 0
        with RunningPortal(PortalService(profile=imagepipe.DEFAULT_PROFILE)) as portal:
            reader = HttpPortalClient(portal.url)
            for i in range(100):
                ident = generate_identity(f"k{i:03d}")
                owner = HttpPortalClient(portal.url)
                owner.create_account(ident.user_id)
                publish_key(ident, owner)
                stored = owner.download_image(ident.user_id, owner.list_gallery(ident.user_id)[0])
                assert stored[:2] == b"\xff\xd8", "portal did not convert to JPEG"
                fetched = fetch_key(ident.user_id, reader, ident.record.fingerprint)
                ok += serialize_record(fetched) == serialize_record(ident.record)
        elapsed = time.perf_counter() - start
        d["text"] = f"{ok}/100 in {elapsed:.1f} s"
        assert ok == 100
        assert elapsed < 120


# -- 2 -----------------------------------------------------------------------------------------


def _block_positions(version, ec):
    """Interleaved stream positions of each RS block, computed from the block sizes."""
    data_lens, nsym = block_layout(version, ec)
    positions = [[] for _ in data_lens]
    pos = 0
    for i in range(max(data_lens)):
        for b, n in enumerate(data_lens):
            if i < n:
                positions[b].append(pos)
                pos += 1
    for _ in range(nsym):
        for b in range(len(data_lens)):
            positions[b].append(pos)
            pos += 1
    return positions


def _decode_damaged(stream, where, version, ec, rng):
    out = bytearray(stream)
    for p in where:
        out[p] ^= rng.randrange(1, 256)
    return decode(render(symbol_from_codewords(bytes(out), version, ec), module_px=3))


def test_02_error_correction_headroom():
    version, ec = 17, "H"
    rng = random.Random(2024)
    blocks = _block_positions(version, ec)
    t = block_layout(version, ec)[1] // 2
    total = total_codewords(version)
    with criterion(2, "v17-H decodes with 25% of codewords corrupted, 50 trials") as d:
        quarter = [math.ceil(0.25 * len(b)) for b in blocks]
        assert sum(quarter) / total >= 0.25
        per_block_ok = uniform_ok = uniform_reported = beyond_reported = wrong = 0
        for _ in range(50):
            payload = bytes(rng.getrandbits(8) for _ in range(256))
            stream = add_error_correction(data_codeword_stream(payload, version, ec), version, ec)

            # 25% of every block
            where = [p for b, k in zip(blocks, quarter) for p in rng.sample(b, k)]
            per_block_ok += _decode_damaged(stream, where, version, ec, rng) == payload

            # 25% of the whole stream, uniformly
            where = rng.sample(range(total), math.ceil(0.25 * total))
            hit = [len(set(b) & set(where)) for b in blocks]
            try:
                got = _decode_damaged(stream, where, version, ec, rng)
                if got == payload:
                    uniform_ok += 1
                else:
                    wrong += 1
            except DecodeError:
                uniform_reported += 1
                assert max(hit) > t, "failed although every block was within the bound"

            # just above the bound in one block: an error, never wrong bytes
            where = [p for b in blocks[:1] for p in rng.sample(b, t + 1)]
            try:
                wrong += _decode_damaged(stream, where, version, ec, rng) != payload
            except DecodeError:
                beyond_reported += 1
        d["text"] = (
            f"per-block 25%: {per_block_ok}/50; uniform 25%: {uniform_ok} ok, {uniform_reported} reported; "
            f"t+1: {beyond_reported}/50 reported; wrong bytes: {wrong}"
        )
        assert per_block_ok == 50
        assert wrong == 0
        assert beyond_reported == 50


# -- 3 -----------------------------------------------------------------------------------------

# byte-mode capacities at level H from the ISO capacity table
ISO_H_BYTES = {16: 250, 17: 280, 18: 310, 19: 338, 20: 382}


def test_03_version_selection_for_key_record():
    with criterion(3, "version selection for the serialized 2048-bit record at H") as d:
        size = record_size("alice")
        chosen = select_version(size, "H")
        expected = min(v for v, cap in ISO_H_BYTES.items() if cap >= size)
        d["text"] = f"{size}-byte record -> version {chosen}"
        assert chosen == expected
        assert capacity_table()[chosen, "H"] == ISO_H_BYTES[chosen]
        if chosen > 17:
            text = (ROOT / "DISCREPANCIES.md").read_text()
            assert f"version {chosen}" in text and "version 17" in text
            d["text"] += " (exceeds 17, recorded in DISCREPANCIES.md)"


# -- 4 -----------------------------------------------------------------------------------------


def test_04_carrier_comparison():
    with criterion(4, "carriers: QR intact, metadata gone, LSB destroyed; lossless control survives") as d:
        good = control = 0
        for seed in range(20):
            out = threatlab._carrier_outcomes(imagepipe.DEFAULT_PROFILE, seed)
            good += (
                out["qr"] == "intact"
                and out["metadata"] == "absent"
                and out["lsb_ber"] > threatlab.LSB_BER_THRESHOLD
                and threatlab.run_carrier_comparison(seed=seed).verdict == threatlab.EXPECTED
            )
            report = threatlab.run_carrier_comparison(imagepipe.LOSSLESS_PROFILE, seed)
            control += report.checkpoints == {"all carriers survive": True}
        d["text"] = f"destructive {good}/20, control {control}/20"
        assert good == 20
        assert control == 20


# -- 5 -----------------------------------------------------------------------------------------


def _mutation_sweep(raw, open_fn, expected, positions, values):
    silent = accepted = 0
    for i in positions:
        for v in values(raw[i]):
            mutant = raw[:i] + bytes([v]) + raw[i + 1 :]
            try:
                got = open_fn(msgcrypt.Envelope.from_bytes(mutant))
            except QrKeyError:
                continue
            accepted += 1
            silent += got != expected
    return silent, accepted


def test_05_asymmetric_messaging(key_pool, alice, bob):
    people = key_pool + [alice, bob]
    rng = random.Random(5)
    with criterion(5, "1000 round trips per mode, zero silent corruption under mutation") as d:
        ok1 = ok2 = 0
        for _ in range(1000):
            receiver = rng.choice(people)
            msg = os.urandom(rng.randint(0, 4096))
            ok1 += msgcrypt.decrypt(receiver, msgcrypt.encrypt_for(receiver.record, msg)) == msg
        for _ in range(1000):
            sender, receiver = rng.sample(people, 2)
            msg = os.urandom(rng.randint(0, 4096 - 256))
            env = msgcrypt.encrypt_signed(sender, receiver.record, msg)
            ok2 += msgcrypt.decrypt_verify(receiver, sender.record, env) == msg

        fixture = b"transfer 100 to account 12345"
        raw1 = msgcrypt.encrypt_for(bob.record, fixture).to_bytes()
        silent1, acc1 = _mutation_sweep(
            raw1, lambda e: msgcrypt.decrypt(bob, e), fixture, range(len(raw1)), lambda b: (v for v in range(256) if v != b)
        )
        raw2 = msgcrypt.encrypt_signed(alice, bob.record, fixture).to_bytes()
        silent2, acc2 = _mutation_sweep(
            raw2, lambda e: msgcrypt.decrypt_verify(bob, alice.record, e), fixture, range(len(raw2)), lambda b: (b ^ 0x01, b ^ 0x80)
        )
        d["text"] = (
            f"mode1 {ok1}/1000, mode2 {ok2}/1000; mutants: {len(raw1) * 255} + {len(raw2) * 2}, "
            f"accepted {acc1 + acc2}, silent {silent1 + silent2}"
        )
        assert ok1 == 1000 and ok2 == 1000
        assert silent1 == 0 and silent2 == 0


# -- 6 -----------------------------------------------------------------------------------------


def test_06_session_key_agreement(key_pool):
    rng = random.Random(6)
    with criterion(6, "1000 exchanges agree on the session key; XOR identities hold") as d:
        for x in (os.urandom(16), os.urandom(32), bytes(32), b"\xff" * 16):
            zero = bytes(len(x))
            y = os.urandom(len(x))
            assert session.xor_bytes(x, x) == zero
            assert session.xor_bytes(x, zero) == x
            assert session.xor_bytes(x, y) == session.xor_bytes(y, x)
        same = 0
        for _ in range(1000):
            a, b = rng.sample(key_pool, 2)
            bits = rng.choice(session.KEY_BITS)
            sa, env = session.initiate(a, b.record, bits)
            sb, reply = session.accept(b, a.record, env)
            session.complete(sa, a, reply, b.record)
            independent = bytes(p ^ q for p, q in zip(sa.own_secret, sb.own_secret))
            same += sa.session_key == sb.session_key == independent and len(independent) * 8 == bits
        d["text"] = f"{same}/1000 identical"
        assert same == 1000


# -- 7 -----------------------------------------------------------------------------------------


def test_07_session_transport(alice, bob):
    rng = random.Random(7)
    with criterion(7, "10^4 sealed messages: no nonce reuse, no replay, all tampering rejected") as d:
        nonces = set()
        sent = replay_accepted = tamper_accepted = tampered = 0
        for _ in range(10):
            sa, env = session.initiate(alice, bob.record)
            sb, reply = session.accept(bob, alice.record, env)
            session.complete(sa, alice, reply, bob.record)
            for i in range(1000):
                src, dst = (sa, sb) if i % 2 == 0 else (sb, sa)
                msg = os.urandom(rng.randint(0, 300))
                env = session.seal(src, msg)
                nonces.add((src.session_key, env.payload[:12]))
                sent += 1
                before = dst.recv_counter
                raw = bytearray(env.to_bytes())
                pos = rng.randrange(len(raw) - len(env.payload), len(raw))
                raw[pos] ^= 1 << rng.randrange(8)
                tampered += 1
                try:
                    session.open(dst, msgcrypt.Envelope.from_bytes(bytes(raw)))
                    tamper_accepted += 1
                except QrKeyError:
                    pass
                assert dst.recv_counter == before
                assert session.open(dst, env) == msg
                try:
                    session.open(dst, env)
                    replay_accepted += 1
                except ReplayError:
                    pass
        d["text"] = (
            f"{sent} sent, {sent - len(nonces)} nonce reuses, {replay_accepted} replays accepted, "
            f"{tampered - tamper_accepted}/{tampered} tampered rejected"
        )
        assert sent == 10_000
        assert len(nonces) == sent
        assert replay_accepted == 0
        assert tamper_accepted == 0


# -- 8 -----------------------------------------------------------------------------------------


def test_08_attack_reproduction():
    with criterion(8, "key substitution hits all checkpoints deterministically; eavesdropper leaks nothing") as d:
        for seed in (0, 1, 42):
            first = threatlab.run_key_substitution(seed)
            again = threatlab.run_key_substitution(seed)
            assert first.to_json() == again.to_json()
            assert first.verdict == threatlab.EXPECTED
            assert first.checkpoints == {
                "pin-time detection": True,
                "new traffic undecryptable by bob": True,
                "prior traffic safe from mallory": True,
                "owner detection and recovery": True,
            }
        eve = threatlab.run_eavesdropper(sessions=100, seed=8)
        d["text"] = "; ".join(outcome for actor, _, outcome in eve.steps if actor == "eve")
        assert eve.verdict == threatlab.EXPECTED
        assert ("eve", "scan captured bytes for either secret or the session key", "0 hits") in eve.steps


# -- 9 -----------------------------------------------------------------------------------------


def test_09_capacity_table():
    with criterion(9, "capacity table rows match the published figures") as d:
        table = capacity_table()
        rows = {
            "QR code Model 2": ("177x177", "2953", "7089", "4296"),
            "QR code Model 1": ("73x73", "458", "1101", "667"),
            "Micro QR code": ("17x17", "15", "35", "21"),
            "iQR code": ("422x422", "~16928", "40637", "~24626"),
        }
        for name, expected in rows.items():
            fam = table.family(name)
            got = tuple(fam.cell(a) for a in ("max_size", "binary", "numerals", "alphanumeric"))
            assert got == expected, (name, got)
        d["text"] = f"{len(rows)} rows"


# -- 10 ----------------------------------------------------------------------------------------

SMALL = synthetic_photo(48, 32, seed=10).to_png()
EXPECTED_ACCESS = {
    (PUBLIC, "owner"): True,
    (PUBLIC, "friend"): True,
    (PUBLIC, "stranger"): True,
    (PUBLIC, "anonymous"): True,
    (FRIENDS, "owner"): True,
    (FRIENDS, "friend"): True,
    (FRIENDS, "stranger"): False,
    (FRIENDS, "anonymous"): False,
}


def _access_table(make):
    owner, friend, stranger = make("owner"), make("friend"), make("stranger")
    owner.upload_image("pic.png", SMALL)
    owner.add_friend("friend")
    table = {}
    for vis in (PUBLIC, FRIENDS):
        owner.set_visibility(vis)
        for rel, c in (("owner", owner), ("friend", friend), ("stranger", stranger), ("anonymous", owner.anonymous())):
            try:
                c.list_gallery("owner")
                c.download_image("owner", "pic.png")
                table[(vis, rel)] = True
            except Forbidden:
                table[(vis, rel)] = False
    return table


def test_10_portal_access_control():
    rng = random.Random(10)
    with criterion(10, "visibility x relation truth table; 1000 unauthorized ops mutate nothing") as d:
        svc = PortalService()

        def local(user):
            c = LocalPortalClient(svc)
            c.create_account(user)
            return c

        assert _access_table(local) == EXPECTED_ACCESS
        with RunningPortal(PortalService()) as portal:

            def remote(user):
                c = HttpPortalClient(portal.url)
                c.create_account(user)
                return c

            assert _access_table(remote) == EXPECTED_ACCESS

        svc = PortalService()
        users = [f"v{i}" for i in range(4)]
        clients = {u: local(u) for u in users}
        for u in users:
            clients[u].upload_image("pic.png", SMALL)
        mutated = 0
        for _ in range(1000):
            attacker, victim = rng.sample(users, 2)
            token = rng.choice([None, "", "forged", clients[attacker].token, clients[victim].token[:-1]])
            c = LocalPortalClient(svc, victim, token)
            before = svc.fingerprint_state()[victim]
            op = rng.choice(["upload", "delete", "friend", "visibility"])
            try:
                if op == "upload":
                    c.upload_image(rng.choice(["pic.png", "new.png"]), SMALL)
                elif op == "delete":
                    c.delete_image("pic.png")
                elif op == "friend":
                    c.add_friend(attacker)
                else:
                    c.set_visibility(rng.choice([PUBLIC, FRIENDS]))
                mutated += 1
            except (Unauthorized, Forbidden):
                pass
            mutated += svc.fingerprint_state()[victim] != before
            # the attacker's own legitimate activity keeps the state moving
            if rng.random() < 0.2:
                clients[attacker].set_visibility(rng.choice([PUBLIC, FRIENDS]))
        d["text"] = f"8/8 cells local and HTTP; {mutated} of 1000 unauthorized ops changed state"
        assert mutated == 0


if __name__ == "__main__":
    # fresh interpreter, so pytest sees its plugins before anything imports them
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", __file__, "-q", "-p", "no:cacheprovider"], cwd=ROOT))
