"""HTTP service wrapping the reconstruction library."""

from .app import app

__all__ = ["app"]
