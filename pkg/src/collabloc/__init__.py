"""Collaborative, privacy-preserving room-level localization."""

__version__ = "0.1.0"
