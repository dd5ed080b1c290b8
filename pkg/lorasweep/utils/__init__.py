"""
lorasweep Utilities and Configuration.

This module provides configuration management and the command-line entry point.
"""

from .config import CheckpointLimits, ToolkitConfig

__all__ = ["CheckpointLimits", "ToolkitConfig"]
