"""In-memory social portal: accounts, galleries, friends, visibility.

Every mutation needs the owner's bearer token. Reads resolve the requester
from a token when one is given; anonymous readers only see public
galleries. Uploaded files are always replaced by the optimization
pipeline's output before they are stored.
"""

import base64
import hashlib
import json
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from qrkey import imagepipe
from qrkey.errors import Conflict, Forbidden, ImageFormatError, NotFound, Unauthorized
from qrkey.identity import validate_user_id
from qrkey.raster import RasterImage, sniff_format

PUBLIC = "public"
FRIENDS = "friends"
VISIBILITIES = (PUBLIC, FRIENDS)
MAX_UPLOAD_BYTES = 20 * 1024 * 1024
_NAME = re.compile(r"^[A-Za-z0-9._-]{1,128}$")


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    image: bytes = field(repr=False)
    uploaded_at: float
    width: int
    height: int
    format: str

    def info(self):
        return {
            "name": self.name,
            "uploaded_at": self.uploaded_at,
            "width": self.width,
            "height": self.height,
            "format": self.format,
            "size": len(self.image),
            "sha256": hashlib.sha256(self.image).hexdigest(),
        }


@dataclass
class Account:
    user_id: str
    auth_token: str = field(repr=False)
    gallery: dict = field(default_factory=dict)  # name -> GalleryEntry, oldest first
    visibility: str = PUBLIC
    friends: set = field(default_factory=set)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)


def validate_name(name):
    if not isinstance(name, str) or not _NAME.match(name) or name in (".", ".."):
        raise ValueError(f"invalid gallery entry name {name!r}")
    return name


class PortalService:
    def __init__(self, profile=imagepipe.DEFAULT_PROFILE, snapshot_path=None, clock=time.time):
        self.profile = profile
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.clock = clock
        self._accounts = {}
        self._tokens = {}
        self._lock = threading.RLock()
        if self.snapshot_path and self.snapshot_path.exists():
            self._restore(json.loads(self.snapshot_path.read_text()))

    # -- lookup --------------------------------------------------------------------

    def _account(self, user_id):
        with self._lock:
            account = self._accounts.get(user_id)
        if account is None:
            raise NotFound(f"no account {user_id!r}")
        return account

    def _owner(self, token, account_id=None):
        if not token:
            raise Unauthorized("missing bearer token")
        with self._lock:
            user_id = self._tokens.get(token)
        if user_id is None:
            raise Unauthorized("invalid bearer token")
        if account_id is not None and account_id != user_id:
            raise Forbidden(f"token does not belong to {account_id!r}")
        return self._accounts[user_id]

    def authenticate(self, token, account_id=None):
        """Raise unless ``token`` is valid (and belongs to ``account_id`` if given)."""
        return self._owner(token, account_id).user_id

    def whoami(self, token):
        return self._owner(token).user_id

    def _check_read(self, owner, token):
        requester = None
        if token:
            requester = self._owner(token).user_id
        if owner.visibility == PUBLIC or requester == owner.user_id or requester in owner.friends:
            return
        raise Forbidden(f"{owner.user_id!r} shares the gallery with friends only")

    # -- accounts ------------------------------------------------------------------

    def create_account(self, user_id):
        validate_user_id(user_id)
        with self._lock:
            if user_id in self._accounts:
                raise Conflict(f"account {user_id!r} already exists")
            token = secrets.token_urlsafe(32)
            self._accounts[user_id] = Account(user_id, token)
            self._tokens[token] = user_id
        self._autosave()
        return token

    def accounts(self):
        with self._lock:
            return sorted(self._accounts)

    # -- gallery ---------------------------------------------------------------------

    def upload_image(self, token, name, data, account_id=None):
        account = self._owner(token, account_id)
        validate_name(name)
        data = bytes(data)
        if len(data) > MAX_UPLOAD_BYTES:
            raise ImageFormatError(f"upload of {len(data)} bytes exceeds {MAX_UPLOAD_BYTES}")
        stored = imagepipe.optimize(data, self.profile)  # outside the lock: slow
        image = RasterImage.from_bytes(stored)
        entry = GalleryEntry(name, stored, self.clock(), image.width, image.height, sniff_format(stored))
        with account.lock:
            account.gallery.pop(name, None)
            account.gallery[name] = entry
        self._autosave()
        return entry

    def delete_image(self, token, name, account_id=None):
        account = self._owner(token, account_id)
        with account.lock:
            if account.gallery.pop(name, None) is None:
                raise NotFound(f"{account.user_id!r} has no entry {name!r}")
        self._autosave()

    def list_gallery(self, owner_id, token=None):
        owner = self._account(owner_id)
        self._check_read(owner, token)
        with owner.lock:
            return list(owner.gallery)

    def gallery_entry(self, owner_id, name, token=None):
        owner = self._account(owner_id)
        self._check_read(owner, token)
        with owner.lock:
            entry = owner.gallery.get(name)
        if entry is None:
            raise NotFound(f"{owner_id!r} has no entry {name!r}")
        return entry

    def download_image(self, owner_id, name, token=None):
        return self.gallery_entry(owner_id, name, token).image

    # -- social graph ------------------------------------------------------------------

    def add_friend(self, token, friend_id, account_id=None):
        account = self._owner(token, account_id)
        self._account(friend_id)
        with account.lock:
            account.friends.add(friend_id)
        self._autosave()

    def remove_friend(self, token, friend_id, account_id=None):
        account = self._owner(token, account_id)
        with account.lock:
            account.friends.discard(friend_id)
        self._autosave()

    def set_visibility(self, token, mode, account_id=None):
        account = self._owner(token, account_id)
        if mode not in VISIBILITIES:
            raise ValueError(f"visibility must be one of {VISIBILITIES}")
        with account.lock:
            account.visibility = mode
        self._autosave()

    # -- state ---------------------------------------------------------------------------

    def fingerprint_state(self):
        """Digest of all observable state (tokens excluded), for before/after checks."""
        with self._lock:
            accounts = list(self._accounts.values())
        state = {}
        for a in accounts:
            with a.lock:
                state[a.user_id] = (
                    a.visibility,
                    tuple(sorted(a.friends)),
                    tuple((n, hashlib.sha256(e.image).hexdigest()) for n, e in a.gallery.items()),
                )
        return state

    def snapshot(self):
        with self._lock:
            accounts = list(self._accounts.values())
        out = []
        for a in accounts:
            with a.lock:
                out.append(
                    {
                        "user_id": a.user_id,
                        "token": a.auth_token,
                        "visibility": a.visibility,
                        "friends": sorted(a.friends),
                        "gallery": [
                            {
                                "name": e.name,
                                "uploaded_at": e.uploaded_at,
                                "image": base64.b64encode(e.image).decode("ascii"),
                            }
                            for e in a.gallery.values()
                        ],
                    }
                )
        return {"accounts": out}

    def save_snapshot(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.snapshot()))
        os.chmod(tmp, 0o600)  # holds bearer tokens
        os.replace(tmp, path)

    def _autosave(self):
        if self.snapshot_path:
            with self._lock:
                self.save_snapshot(self.snapshot_path)

    def _restore(self, snap):
        for a in snap["accounts"]:
            account = Account(a["user_id"], a["token"], visibility=a["visibility"], friends=set(a["friends"]))
            for e in a["gallery"]:
                data = base64.b64decode(e["image"])
                image = RasterImage.from_bytes(data)
                account.gallery[e["name"]] = GalleryEntry(
                    e["name"], data, e["uploaded_at"], image.width, image.height, sniff_format(data)
                )
            self._accounts[account.user_id] = account
            self._tokens[account.auth_token] = account.user_id

    @classmethod
    def from_snapshot(cls, path, **kwargs):
        service = cls(**kwargs)
        service._restore(json.loads(Path(path).read_text()))
        return service
