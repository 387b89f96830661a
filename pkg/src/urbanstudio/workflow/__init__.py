"""Event-sourced design sessions and their HTTP API."""

from .store import DesignSession, SessionStore, StageState

__all__ = ["DesignSession", "SessionStore", "StageState"]
