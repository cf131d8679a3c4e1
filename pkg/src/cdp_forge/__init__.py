"""Learned illumination patterns for coded diffraction phase retrieval."""

__version__ = "0.1.0"
