"""Harness unit tests."""
