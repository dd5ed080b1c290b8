"""Tensorstore unit tests."""
