"""Molecular property prediction with bidirectional message-passing networks."""

__version__ = "0.1.0"
