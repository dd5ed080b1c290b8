"""Merging unit tests."""
