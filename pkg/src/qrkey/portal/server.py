"""REST front end for :class:`PortalService` on the stdlib HTTP server.

Routes (JSON bodies; images travel as base64 inside JSON on upload and as
raw bytes on download)::

    POST   /accounts                        {"user_id"}          -> {"token"}
    POST   /accounts/{id}/gallery           {"name", "image"}    -> entry info   (auth)
    GET    /accounts/{id}/gallery[?as=..]                        -> {"names"}
    GET    /accounts/{id}/gallery/{name}[?as=..]                 -> image bytes
    DELETE /accounts/{id}/gallery/{name}                         -> 204          (auth)
    POST   /accounts/{id}/friends           {"friend_id"}        -> 204          (auth)
    POST   /accounts/{id}/visibility        {"mode"}             -> 204          (auth)

The ``as`` parameter only labels anonymous requests; it grants nothing
beyond public visibility. Friend and owner access needs the bearer token.
"""

import base64
import binascii
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from qrkey.errors import Conflict, Forbidden, NotFound, QrKeyError, Unauthorized
from qrkey.portal.service import MAX_UPLOAD_BYTES, PortalService

log = logging.getLogger(__name__)

STATUS = {Unauthorized: 401, Forbidden: 403, NotFound: 404, Conflict: 409}


def status_for(exc):
    for cls, code in STATUS.items():
        if isinstance(exc, cls):
            return code
    return 400


class _BadRequest(QrKeyError):
    category = "bad-request"


class PortalHandler(BaseHTTPRequestHandler):
    service: PortalService = None
    server_version = "qrkey-portal/0.1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    # -- plumbing -----------------------------------------------------------------------

    def _token(self):
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer ") :].strip() or None
        return None

    def _json_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_UPLOAD_BYTES * 2:
            raise _BadRequest("request body too large")
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw or b"{}")
        except ValueError as exc:
            raise _BadRequest(f"invalid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise _BadRequest("JSON body must be an object")
        return body

    def _send(self, code, body=b"", content_type="application/json"):
        if isinstance(body, (dict, list)):
            body = json.dumps(body).encode()
        self.send_response(code)
        if body:
            self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _route(self, method):
        parts = urlsplit(self.path)
        segs = [unquote(s) for s in parts.path.strip("/").split("/") if s]
        query = parse_qs(parts.query)
        token = self._token()
        svc = self.service

        if segs == ["accounts"] and method == "POST":
            body = self._json_body()
            return 201, {"token": svc.create_account(_field(body, "user_id"))}
        if len(segs) < 3 or segs[0] != "accounts":
            raise NotFound(f"no route for {method} {parts.path}")
        account_id, resource, rest = segs[1], segs[2], segs[3:]
        if method != "GET":
            svc.authenticate(token, account_id)  # before the body is even read

        if resource == "gallery" and not rest:
            if method == "GET":
                # query "as" is accepted for logging only
                log.debug("anonymous read labelled %s", query.get("as"))
                return 200, {"names": svc.list_gallery(account_id, token)}
            if method == "POST":
                body = self._json_body()
                try:
                    data = base64.b64decode(_field(body, "image"), validate=True)
                except (binascii.Error, ValueError) as exc:
                    raise _BadRequest("image must be base64") from exc
                entry = svc.upload_image(token, _field(body, "name"), data, account_id)
                return 201, entry.info()
        if resource == "gallery" and len(rest) == 1:
            if method == "GET":
                entry = svc.gallery_entry(account_id, rest[0], token)
                return 200, entry
            if method == "DELETE":
                svc.delete_image(token, rest[0], account_id)
                return 204, b""
        if resource == "friends" and not rest and method == "POST":
            svc.add_friend(token, _field(self._json_body(), "friend_id"), account_id)
            return 204, b""
        if resource == "visibility" and not rest and method == "POST":
            svc.set_visibility(token, _field(self._json_body(), "mode"), account_id)
            return 204, b""
        raise NotFound(f"no route for {method} {parts.path}")

    def _dispatch(self, method):
        try:
            code, result = self._route(method)
        except (QrKeyError, ValueError) as exc:
            category = getattr(exc, "category", "bad-request")
            self._send(status_for(exc), {"error": category, "message": str(exc)})
            return
        except Exception:  # pragma: no cover - keep the server alive
            log.exception("unhandled error")
            self._send(500, {"error": "internal", "message": "internal server error"})
            return
        if hasattr(result, "image"):
            ctype = "image/jpeg" if result.format == "JPEG" else "image/png"
            self._send(code, result.image, ctype)
        else:
            self._send(code, result)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")


def _field(body, key):
    value = body.get(key)
    if not isinstance(value, str):
        raise _BadRequest(f"missing string field {key!r}")
    return value


def make_server(service=None, host="127.0.0.1", port=0):
    """Bind a threaded server; ``port=0`` picks a free port."""
    handler = type("BoundPortalHandler", (PortalHandler,), {"service": service or PortalService()})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class RunningPortal:
    """Context manager serving a portal on a background thread."""

    def __init__(self, service=None, host="127.0.0.1", port=0):
        self.server = make_server(service, host, port)
        self.service = self.server.RequestHandlerClass.service
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self._thread.join()
