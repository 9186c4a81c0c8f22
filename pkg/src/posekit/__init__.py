"""Disentangled shape/pose embeddings with bin-and-delta rotation coding."""

__version__ = "0.1.0"
