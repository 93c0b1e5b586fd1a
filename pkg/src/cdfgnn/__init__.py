"""cdfgnn simulator package."""

from .app import create_parser, run

__all__ = ["create_parser", "run"]
