"""Nonlocal Ohta-Kawasaki bubble analysis in one dimension."""

__version__ = "0.1.0"
