"""Compiler and guided simulator for guarded-event state-machine models."""

__version__ = "0.1.0"
