"""Portal clients: one over HTTP, one calling a service in-process.

Both expose the same methods and raise the same portal errors, so flows in
:mod:`qrkey.pubkeyflow` work against either. A client carries at most one
account's credentials; ``as_user`` derives a client for another account.
"""

import base64
import json
import urllib.error
import urllib.request
from urllib.parse import quote

from qrkey.errors import (
    Conflict,
    Forbidden,
    ImageFormatError,
    NotFound,
    PortalError,
    PortalUnreachable,
    Unauthorized,
)

_BY_CATEGORY = {
    cls.category: cls for cls in (Unauthorized, Forbidden, NotFound, Conflict, ImageFormatError)
}


class LocalPortalClient:
    def __init__(self, service, user_id=None, token=None):
        self.service = service
        self.user_id = user_id
        self.token = token

    def as_user(self, user_id, token):
        return type(self)(self.service, user_id, token)

    def anonymous(self):
        return type(self)(self.service)

    def create_account(self, user_id):
        token = self.service.create_account(user_id)
        if self.token is None:
            self.user_id, self.token = user_id, token
        return token

    def upload_image(self, name, data):
        return self.service.upload_image(self.token, name, data, self.user_id).info()

    def delete_image(self, name):
        self.service.delete_image(self.token, name, self.user_id)

    def list_gallery(self, owner_id):
        return self.service.list_gallery(owner_id, self.token)

    def download_image(self, owner_id, name):
        return self.service.download_image(owner_id, name, self.token)

    def add_friend(self, friend_id):
        self.service.add_friend(self.token, friend_id, self.user_id)

    def set_visibility(self, mode):
        self.service.set_visibility(self.token, mode, self.user_id)


class HttpPortalClient:
    def __init__(self, base_url, user_id=None, token=None, timeout=30.0):
        self.base_url = base_url.rstrip("/")
        self.user_id = user_id
        self.token = token
        self.timeout = timeout

    def as_user(self, user_id, token):
        return type(self)(self.base_url, user_id, token, self.timeout)

    def anonymous(self):
        return type(self)(self.base_url, timeout=self.timeout)

    def _request(self, method, path, body=None, query=""):
        url = self.base_url + path + (f"?{query}" if query else "")
        data = None if body is None else json.dumps(body).encode()
        req = urllib.request.Request(url, data=data, method=method)
        if data is not None:
            req.add_header("Content-Type", "application/json")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read(), resp.headers.get("Content-Type", "")
        except urllib.error.HTTPError as exc:
            raw = exc.read()
            try:
                err = json.loads(raw)
            except ValueError:
                err = {"error": "portal-error", "message": raw.decode("utf-8", "replace")}
            cls = _BY_CATEGORY.get(err.get("error"), PortalError)
            raise cls(err.get("message", f"HTTP {exc.code}")) from None
        except (urllib.error.URLError, OSError) as exc:
            raise PortalUnreachable(f"cannot reach portal at {self.base_url}: {exc}") from exc

    def _json(self, method, path, body=None, query=""):
        raw, _ = self._request(method, path, body, query)
        return json.loads(raw) if raw else None

    def _account_path(self, owner_id, *rest):
        return "/accounts/" + "/".join(quote(p, safe="") for p in (owner_id, *rest))

    def create_account(self, user_id):
        token = self._json("POST", "/accounts", {"user_id": user_id})["token"]
        if self.token is None:
            self.user_id, self.token = user_id, token
        return token

    def upload_image(self, name, data):
        body = {"name": name, "image": base64.b64encode(bytes(data)).decode("ascii")}
        return self._json("POST", self._account_path(self.user_id or "", "gallery"), body)

    def delete_image(self, name):
        self._request("DELETE", self._account_path(self.user_id or "", "gallery", name))

    def list_gallery(self, owner_id):
        query = "" if self.token else f"as={quote(self.user_id or '')}"
        return self._json("GET", self._account_path(owner_id, "gallery"), query=query)["names"]

    def download_image(self, owner_id, name):
        query = "" if self.token else f"as={quote(self.user_id or '')}"
        raw, _ = self._request("GET", self._account_path(owner_id, "gallery", name), query=query)
        return raw

    def add_friend(self, friend_id):
        self._request("POST", self._account_path(self.user_id or "", "friends"), {"friend_id": friend_id})

    def set_visibility(self, mode):
        self._request("POST", self._account_path(self.user_id or "", "visibility"), {"mode": mode})
