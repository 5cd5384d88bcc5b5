"""Camera-based lane detection and MPC lateral control for a small-scale car."""

__version__ = "0.1.0"
