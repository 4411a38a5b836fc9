"""``qrkey`` command line.

Settings come from (lowest to highest priority) built-in defaults, a
key=value config file, environment variables, then flags::

    keystore    path of the keystore file       QK_KEYSTORE   --keystore
    portal      portal base URL                 QK_PORTAL     --portal
    key_bits    session key size (128 or 256)
    pinning     on/off: pin peers on first fetch
    max_dimension, jpeg_quality   portal-serve profile overrides

The keystore passphrase is read from ``QK_PASSPHRASE`` or prompted for.
Portal bearer tokens live in ``tokens.json`` next to the keystore.

On failure the command exits with status 2 and prints
``error: <category>: <message>`` on stderr.
"""

import argparse
import getpass
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from qrkey import __version__, imagepipe, msgcrypt, pubkeyflow, session, threatlab
from qrkey.errors import BadPassphrase, KeystoreNotFound, QrKeyError
from qrkey.identity import Identity, Keystore, generate_identity, load_keystore, save_keystore
from qrkey.portal import HttpPortalClient, PortalService, make_server
from qrkey.qr import capacity_table

DEFAULT_CONFIG = Path("~/.config/qrkey/config")
EXIT_ERROR = 2
EXIT_VERDICT = 1


@dataclass(frozen=True)
class Config:
    keystore: Path = Path("~/.qrkey/keystore.qks")
    portal: str = "http://127.0.0.1:8650"
    key_bits: int = 256
    pinning: bool = True
    max_dimension: int = imagepipe.DEFAULT_PROFILE.max_dimension
    jpeg_quality: int = imagepipe.DEFAULT_PROFILE.jpeg_quality

    @property
    def profile(self):
        return replace(imagepipe.DEFAULT_PROFILE, max_dimension=self.max_dimension, jpeg_quality=self.jpeg_quality)


_TRUE = {"1", "on", "true", "yes"}
_FALSE = {"0", "off", "false", "no"}


def parse_config_text(text, base=None):
    cfg = base or Config()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in Config.__dataclass_fields__:
            raise ValueError(f"config line {lineno}: expected one of {', '.join(Config.__dataclass_fields__)}")
        if key == "keystore":
            values[key] = Path(value)
        elif key == "pinning":
            if value.lower() not in _TRUE | _FALSE:
                raise ValueError(f"config line {lineno}: pinning must be on or off")
            values[key] = value.lower() in _TRUE
        elif key in ("key_bits", "max_dimension", "jpeg_quality"):
            values[key] = int(value)
        else:
            values[key] = value
    cfg = replace(cfg, **values)
    if cfg.key_bits not in session.KEY_BITS:
        raise ValueError("key_bits must be 128 or 256")
    return cfg


def load_config(path=None, env=None):
    env = os.environ if env is None else env
    explicit = path or env.get("QK_CONFIG")
    cfg = Config()
    cfg_path = Path(explicit or DEFAULT_CONFIG).expanduser()
    if cfg_path.exists():
        cfg = parse_config_text(cfg_path.read_text(), cfg)
    elif explicit:
        raise FileNotFoundError(f"config file {cfg_path} not found")
    if env.get("QK_KEYSTORE"):
        cfg = replace(cfg, keystore=Path(env["QK_KEYSTORE"]))
    if env.get("QK_PORTAL"):
        cfg = replace(cfg, portal=env["QK_PORTAL"])
    return cfg


# -- shared plumbing ---------------------------------------------------------------------


class Context:
    def __init__(self, cfg, stdin, stdout):
        self.cfg = cfg
        self.stdin = stdin
        self.stdout = stdout
        self.keystore_path = Path(cfg.keystore).expanduser()
        self._store = None
        self._passphrase = None

    def passphrase(self):
        if self._passphrase is None:
            value = os.environ.get("QK_PASSPHRASE")
            if value is None:
                if not sys.stdin.isatty():
                    raise BadPassphrase("set QK_PASSPHRASE or run interactively")
                value = getpass.getpass("keystore passphrase: ")
            self._passphrase = value
        return self._passphrase

    def store(self, create=False):
        if self._store is None:
            try:
                self._store = load_keystore(self.keystore_path, self.passphrase())
            except KeystoreNotFound:
                if not create:
                    raise
                self._store = Keystore(self.keystore_path)
        return self._store

    def save(self):
        save_keystore(self._store, self.passphrase())

    def identity(self, user=None):
        store = self.store()
        if user:
            try:
                return store.identity(user)
            except KeyError:
                raise CliError("unknown-identity", f"no local identity {user!r}") from None
        ids = store.identities()
        if len(ids) != 1:
            raise CliError("ambiguous-identity", "pass --as <user>; the keystore holds %d identities" % len(ids))
        return ids[0]

    @property
    def tokens_path(self):
        return self.keystore_path.with_name("tokens.json")

    def tokens(self):
        try:
            return json.loads(self.tokens_path.read_text())
        except FileNotFoundError:
            return {}

    def save_token(self, user, token):
        tokens = self.tokens()
        tokens[user] = token
        self.tokens_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.tokens_path.with_name(".tokens.json.tmp")
        tmp.write_text(json.dumps(tokens, indent=2, sort_keys=True))
        os.chmod(tmp, 0o600)
        os.replace(tmp, self.tokens_path)

    def client(self, user=None):
        token = self.tokens().get(user) if user else None
        return HttpPortalClient(self.cfg.portal, user, token)

    def peer(self, peer, requester=None):
        """Peer record from the keystore, fetched from the portal on first use."""
        store = self.store()
        entry = store.entries.get(peer)
        if entry is not None:
            return entry.record if isinstance(entry, Identity) else entry
        record = pubkeyflow.fetch_key(peer, self.client(requester))
        store.add_peer(record)
        self.save()
        return record

    def read_input(self):
        return self.stdin.buffer.read() if hasattr(self.stdin, "buffer") else self.stdin.read().encode()

    def write_bytes(self, data):
        out = getattr(self.stdout, "buffer", None)
        if out is not None:
            out.write(data)
            out.flush()
        else:
            self.stdout.write(data.decode("utf-8", "replace"))

    def write_text(self, text):
        self.stdout.write(text if text.endswith("\n") else text + "\n")


class CliError(QrKeyError):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _read_envelope(ctx, path):
    text = Path(path).read_text() if path and path != "-" else ctx.read_input().decode("ascii", "replace")
    return msgcrypt.dearmor(text)


def _write_text_file(path, text):
    Path(path).write_text(text + "\n")


# -- commands --------------------------------------------------------------------------------


def cmd_keygen(ctx, args):
    store = ctx.store(create=True)
    if args.user in store.entries and not args.force:
        raise CliError("exists", f"{args.user!r} already in keystore; pass --force to replace")
    ident = generate_identity(args.user)
    store.entries.pop(args.user, None)
    store.add_identity(ident)
    ctx.save()
    ctx.write_text(f"{args.user} {ident.record.fingerprint_hex}")


def cmd_publish(ctx, args):
    ident = ctx.identity(args.user)
    client = ctx.client(args.user)
    if client.token is None:
        token = client.create_account(args.user)
        ctx.save_token(args.user, token)
    name = pubkeyflow.publish_key(ident, client)
    ctx.write_text(str(name))


def cmd_fetch(ctx, args):
    store = ctx.store(create=True)
    pin = args.pin
    known = store.entries.get(args.peer)
    if isinstance(known, Identity):
        raise CliError("exists", f"{args.peer!r} is a local identity")
    if pin is None and ctx.cfg.pinning and known is not None and not args.repin:
        pin = known.fingerprint_hex
    record = pubkeyflow.fetch_key(args.peer, ctx.client(args.as_user), expected_fingerprint=pin)
    store.add_peer(record)
    ctx.save()
    ctx.write_text(f"{record.owner_id} {record.fingerprint_hex}")


def cmd_encrypt(ctx, args):
    receiver = ctx.peer(args.peer, args.as_user)
    data = ctx.read_input()
    if args.sign:
        env = msgcrypt.encrypt_signed(ctx.identity(args.as_user), receiver, data)
    else:
        env = msgcrypt.encrypt_for(receiver, data)
    ctx.write_text(msgcrypt.armor(env))


def cmd_decrypt(ctx, args):
    env = msgcrypt.dearmor(ctx.read_input().decode("ascii", "replace"))
    me = ctx.identity(args.as_user)
    if env.mode == msgcrypt.MODE_SIGNED:
        sender = args.sender or env.sender_id
        data = msgcrypt.decrypt_verify(me, ctx.peer(sender, me.user_id), env)
    else:
        if args.sender:
            raise CliError("unauthenticated", "message is not signed; cannot confirm the sender")
        data = msgcrypt.decrypt(me, env)
    ctx.write_bytes(data)


def cmd_session_init(ctx, args):
    me = ctx.identity(args.as_user)
    state, env = session.initiate(me, ctx.peer(args.peer, me.user_id), args.bits or ctx.cfg.key_bits, args.authenticated)
    _write_text_file(args.state, state.to_json())
    _write_text_file(args.out, msgcrypt.armor(env))


def cmd_session_accept(ctx, args):
    me = ctx.identity(args.as_user)
    env = _read_envelope(ctx, args.input)
    peer = ctx.peer(args.peer or env.sender_id, me.user_id)
    state, reply = session.accept(me, peer, env, key_bits=args.bits, authenticated=args.authenticated)
    _write_text_file(args.state, state.to_json())
    _write_text_file(args.out, msgcrypt.armor(reply))


def cmd_session_send(ctx, args):
    state = session.SessionState.from_json(Path(args.state).read_text())
    env = session.seal(state, ctx.read_input())
    _write_text_file(args.state, state.to_json())
    ctx.write_text(msgcrypt.armor(env))


def cmd_session_recv(ctx, args):
    """Finish the handshake (mode 3) or open session data (mode 4)."""
    state = session.SessionState.from_json(Path(args.state).read_text())
    env = _read_envelope(ctx, args.input)
    if env.mode == msgcrypt.MODE_SECRET_EXCHANGE:
        if state.established:
            raise CliError("already-established", "session already has the peer's secret")
        me = ctx.identity(args.as_user or state.own_id)
        session.complete(state, me, env, ctx.peer(state.peer_id, me.user_id))
        _write_text_file(args.state, state.to_json())
        print("session established", file=sys.stderr)
        return
    data = session.open(state, env)
    _write_text_file(args.state, state.to_json())
    ctx.write_bytes(data)


def cmd_portal_serve(ctx, args):
    service = PortalService(profile=ctx.cfg.profile, snapshot_path=args.snapshot)
    server = make_server(service, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"portal listening on http://{host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_attack_demo(ctx, args):
    report = threatlab.run_scenario(args.scenario, args.seed)
    ctx.write_text(report.to_json())
    return 0 if report.verdict == threatlab.EXPECTED else EXIT_VERDICT


def cmd_capacity(ctx, args):
    ctx.write_text(capacity_table().format_families())


COMMANDS = {
    "keygen": (cmd_keygen, "generate an identity (2048-bit key) into the keystore"),
    "publish": (cmd_publish, "publish a key as a QR image in the portal gallery"),
    "fetch": (cmd_fetch, "fetch and verify a peer's key from the portal"),
    "encrypt": (cmd_encrypt, "encrypt stdin for a peer; armored text on stdout"),
    "decrypt": (cmd_decrypt, "decrypt armored text from stdin"),
    "session-init": (cmd_session_init, "start a session: write state and secret-exchange files"),
    "session-accept": (cmd_session_accept, "answer a session request"),
    "session-send": (cmd_session_send, "seal stdin under an established session"),
    "session-recv": (cmd_session_recv, "finish a handshake or open session data"),
    "portal-serve": (cmd_portal_serve, "run the mock portal HTTP service"),
    "attack-demo": (cmd_attack_demo, "run a threat scenario and print its JSON report"),
    "capacity": (cmd_capacity, "print QR capacity figures for the symbol families"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="qrkey", description="Public keys as QR images on a social portal.")
    p.add_argument("--version", action="version", version=f"qrkey {__version__}")
    p.add_argument("--config", help="key=value config file (default ~/.config/qrkey/config)")
    p.add_argument("--keystore", help="keystore path (overrides config and QK_KEYSTORE)")
    p.add_argument("--portal", help="portal base URL (overrides config and QK_PORTAL)")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name):
        func, helptext = COMMANDS[name]
        sp = sub.add_parser(name, help=helptext, description=helptext)
        sp.set_defaults(func=func)
        return sp

    def as_user(sp, helptext="local identity to act as"):
        sp.add_argument("--as", dest="as_user", metavar="USER", help=helptext)

    sp = add("keygen")
    sp.add_argument("user")
    sp.add_argument("--force", action="store_true", help="replace an existing identity")

    add("publish").add_argument("user")

    sp = add("fetch")
    sp.add_argument("peer")
    sp.add_argument("--pin", metavar="FP", help="required full fingerprint (hex)")
    sp.add_argument("--repin", action="store_true", help="accept a changed key despite the stored pin")
    as_user(sp, "fetch with this account's portal token")

    sp = add("encrypt")
    sp.add_argument("peer")
    sp.add_argument("--sign", action="store_true", help="sign as the sender (mode 2)")
    as_user(sp, "sender identity for --sign")

    sp = add("decrypt")
    sp.add_argument("--from", dest="sender", metavar="PEER", help="require a valid signature by PEER")
    as_user(sp)

    sp = add("session-init")
    sp.add_argument("peer")
    sp.add_argument("--state", required=True, help="session state file to write")
    sp.add_argument("--out", required=True, help="armored secret-exchange file for the peer")
    sp.add_argument("--bits", type=int, choices=session.KEY_BITS)
    sp.add_argument("--authenticated", action="store_true", help="sign the secret (mode 2 inside)")
    as_user(sp)

    sp = add("session-accept")
    sp.add_argument("peer", nargs="?", help="initiator (default: sender named in the request)")
    sp.add_argument("--in", dest="input", required=True, help="armored request file ('-' for stdin)")
    sp.add_argument("--state", required=True)
    sp.add_argument("--out", required=True, help="armored reply file for the initiator")
    sp.add_argument("--bits", type=int, choices=session.KEY_BITS)
    sp.add_argument("--authenticated", action="store_true")
    as_user(sp)

    sp = add("session-send")
    sp.add_argument("--state", required=True)

    sp = add("session-recv")
    sp.add_argument("--state", required=True)
    sp.add_argument("--in", dest="input", default="-", help="armored file ('-' for stdin)")
    as_user(sp)

    sp = add("portal-serve")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8650)
    sp.add_argument("--snapshot", help="persist portal state to this JSON file")

    sp = add("attack-demo")
    sp.add_argument("scenario", choices=sorted(threatlab.SCENARIOS))
    sp.add_argument("--seed", type=int, default=0)

    add("capacity")
    return p


def main(argv=None, stdin=None, stdout=None, stderr=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.keystore:
            cfg = replace(cfg, keystore=Path(args.keystore))
        if args.portal:
            cfg = replace(cfg, portal=args.portal)
        return args.func(Context(cfg, stdin, stdout), args) or 0
    except QrKeyError as exc:
        print(f"error: {exc.category}: {exc}", file=stderr)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: invalid-argument: {exc}", file=stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
