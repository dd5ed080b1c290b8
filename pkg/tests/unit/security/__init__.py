"""Security and validation unit tests."""
