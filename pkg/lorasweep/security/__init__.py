"""
lorasweep errors and resource limits.

Limits live in ``lorasweep.security.limits``; import it directly, it depends on
the configuration module which itself raises errors defined here.
"""

from .exceptions import CheckpointError, ConfigError, LoraSweepError, SecurityError

__all__ = ["CheckpointError", "ConfigError", "LoraSweepError", "SecurityError"]
