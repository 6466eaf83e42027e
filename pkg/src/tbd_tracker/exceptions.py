"""
Exception hierarchy for the track-before-detect engine
"""

from pathlib import Path


class TbdError(Exception):
    """Base class for all engine errors"""


class ConfigurationError(TbdError, ValueError):
    """A model or configuration value is invalid"""


class UsageError(TbdError, ValueError):
    """An operation was called with arguments it cannot accept"""


class FrameIOError(TbdError, OSError):
    """Reading or writing an image or record file failed"""

    def __init__(self, path: str | Path, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")
