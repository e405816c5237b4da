"""Weak-supervision data pipeline and mixed Chinese/Latin ASR scoring."""

__version__ = "0.1.0"
