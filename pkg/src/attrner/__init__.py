"""Attribute-injected named entity recognition on a small self-contained encoder."""

__version__ = "0.1.0"
