"""Reporting unit tests."""
