"""Incremental compliance monitoring over event streams."""

__version__ = "0.1.0"
