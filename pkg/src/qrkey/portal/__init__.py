"""Mock social portal: service, HTTP server and clients."""

from qrkey.portal.client import HttpPortalClient, LocalPortalClient
from qrkey.portal.server import RunningPortal, make_server
from qrkey.portal.service import FRIENDS, PUBLIC, GalleryEntry, PortalService

__all__ = [
    "FRIENDS",
    "PUBLIC",
    "GalleryEntry",
    "HttpPortalClient",
    "LocalPortalClient",
    "PortalService",
    "RunningPortal",
    "make_server",
]
