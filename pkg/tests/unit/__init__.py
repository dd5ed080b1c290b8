"""Unit tests for lorasweep components."""
