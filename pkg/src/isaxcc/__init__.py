"""Retargetable ISAX offloading compiler."""

__version__ = "0.1.0"
