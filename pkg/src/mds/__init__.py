"""Tools for the musical distribution shift transcription benchmark."""

__version__ = "0.1.0"
