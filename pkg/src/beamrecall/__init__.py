"""Separate simultaneous conversations from mic-array recordings and recall
what you missed through natural-language queries."""

__version__ = "0.1.0"
