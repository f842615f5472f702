"""Graph-based synthetic document layout generation."""

__version__ = "0.1.0"
