"""Discrete orthogonal polynomial ensembles with a hard wall."""

__version__ = "0.1.0"
