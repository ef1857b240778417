"""Desk-scale simulator of semi-supervised federated learning for keyword spotting."""

__version__ = "0.1.0"
