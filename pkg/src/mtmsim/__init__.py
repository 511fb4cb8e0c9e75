"""Distributed transient circuit simulation by transmission-line tearing."""

__version__ = "0.1.0"
