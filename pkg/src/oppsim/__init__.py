"""Discrete-event simulation of opportunistic content dissemination."""
__version__ = "0.1.0"
