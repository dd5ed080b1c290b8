"""Scoring unit tests."""
