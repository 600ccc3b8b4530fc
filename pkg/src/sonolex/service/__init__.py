"""HTTP service layer. Run with ``uvicorn sonolex.service:app``."""

from .app import app, create_app

__all__ = ["app", "create_app"]
