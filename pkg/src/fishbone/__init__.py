"""Fishbone: rib-spine control structures for mesh deformation, dynamics, and animation."""

__version__ = "0.1.0"
