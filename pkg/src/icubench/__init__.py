"""Benchmarking engine for four ICU prediction tasks on eICU-shaped data."""

from .schema import Task, canonical_schema, total_ohe_width

__version__ = "0.1.0"

__all__ = ["Task", "canonical_schema", "total_ohe_width", "__version__"]
