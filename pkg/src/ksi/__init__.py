"""Keller-Segel self-similar expander spectral toolkit."""
