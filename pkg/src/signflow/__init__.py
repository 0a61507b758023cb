"""Continuous sign-language recognition from holistic landmark streams."""

__version__ = "0.1.0"
