"""Integration tests for lorasweep end-to-end workflows."""
