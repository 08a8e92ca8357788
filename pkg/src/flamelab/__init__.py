"""Desk-scale simulation lab for one-shot signatures and key-fire cloning."""

__version__ = "0.1.0"
