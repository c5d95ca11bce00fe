"""Consistency-model training laboratory on 2D synthetic mixtures."""

__version__ = "0.1.0"
