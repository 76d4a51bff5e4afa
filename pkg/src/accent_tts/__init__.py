"""Accented TTS with a conditional variational posterior encoder."""

__version__ = "0.1.0"
