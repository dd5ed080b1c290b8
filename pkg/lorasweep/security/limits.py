"""
Resource limits for checkpoint headers.

Headers are validated before JSON decoding so a hostile length prefix cannot
make the reader allocate unbounded memory.
"""

from ..utils.config import CheckpointLimits
from .exceptions import MalformedHeader, SecurityError

LENGTH_PREFIX_SPAN = (0, 8)


class LimitValidator:
    """Validates checkpoint headers against configured limits."""

    def __init__(self, limits: CheckpointLimits):
        self.limits = limits

    def validate_header_length(self, header_len: int, file_size: int) -> None:
        """Validate the u64 header length prefix against limits and file size."""
        if header_len > self.limits.max_header_size:
            raise SecurityError(
                f"Header length {header_len} exceeds limit "
                f"{self.limits.max_header_size}",
                offset=LENGTH_PREFIX_SPAN,
            )
        if 8 + header_len > file_size:
            raise MalformedHeader(
                f"Header length {header_len} runs past end of file "
                f"({file_size} bytes)",
                offset=LENGTH_PREFIX_SPAN,
                suggestions=["The file may be truncated or not a tensor checkpoint"],
            )

    def validate_tensor_count(self, count: int) -> None:
        """Validate the number of tensor entries declared in a header."""
        if count > self.limits.max_tensors:
            raise SecurityError(
                f"Tensor count {count} exceeds limit {self.limits.max_tensors}"
            )
