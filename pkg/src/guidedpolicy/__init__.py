"""Dialogue policy training guided by an offline-learned reward model."""

__version__ = "0.1.0"
