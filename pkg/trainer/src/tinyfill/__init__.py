"""Desk-scale encoder-decoder for the trackfill infilling language."""

__version__ = "0.1.0"
