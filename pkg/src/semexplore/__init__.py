"""Semantics-aware RRT exploration in a deterministic 2D indoor simulator."""

__version__ = "0.1.0"
