"""Per-agent MPC pipeline.

This module defines the controller graph.
"""

from .graph import graph

__all__ = ["graph"]
