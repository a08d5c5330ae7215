"""HTTP service wrapping the run pipeline."""

from .app import create_app

__all__ = ["create_app"]
