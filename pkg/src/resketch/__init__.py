"""Retrieve-sketch-edit code generation toolkit."""

__version__ = "0.1.0"
