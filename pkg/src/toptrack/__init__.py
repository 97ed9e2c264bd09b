"""Graph-constrained multi-sensor people tracking with active sensing."""

__version__ = "0.1.0"
