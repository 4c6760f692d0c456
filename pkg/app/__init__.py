"""Adversarial texture attacks on rendered 3D objects."""

__version__ = "0.1.0"
