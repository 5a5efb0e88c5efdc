"""Generative multi-route planning: learned link costs + iterative shortest-path search."""

__version__ = "0.1.0"
