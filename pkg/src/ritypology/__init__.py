"""Typology of research infrastructures: Ward clustering of binary
attributes followed by canonical discriminant analysis of indicator
ratings."""

__version__ = "0.1.0"
