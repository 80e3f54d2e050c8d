"""Exception types raised across the plumeSwarm package."""

from typing import Optional


class SwarmError(Exception):
    """Base class for all plumeSwarm errors."""


class ConfigError(SwarmError, ValueError):
    """Invalid or inconsistent configuration value."""


class CapacityError(SwarmError):
    """A fixed-capacity swarm tree has no slot left for a new drone."""


class SwarmLostError(SwarmError):
    """Every drone in the swarm has failed."""


class OutputError(SwarmError, OSError):
    """An artifact could not be written."""

    def __init__(self, path: str, reason: Optional[str] = None):
        self.path = path
        message = f"Cannot write {path}"
        if reason:
            message += f": {reason}"
        super().__init__(message)
