"""Public keys distributed as QR images through a social-portal gallery."""

__version__ = "0.1.0"
