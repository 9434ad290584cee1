"""Temporal graph features and malicious-account detection for transaction ledgers."""

__version__ = "0.1.0"
