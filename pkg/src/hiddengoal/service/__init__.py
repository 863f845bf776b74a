"""HTTP service wrapping the training and evaluation harness."""

from .app import app, create_app

__all__ = ["app", "create_app"]
