"""Guided pentest agent engine: task tree, pipeline, gateway, store, service."""

__version__ = "0.1.0"
