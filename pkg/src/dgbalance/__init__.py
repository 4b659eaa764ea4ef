"""SFC-based dynamic load balancing for element solvers with mixed per-element cost."""

__version__ = "0.1.0"
