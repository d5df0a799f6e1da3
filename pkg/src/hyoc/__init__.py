"""Optimal control toolkit for hybrid systems in linear-complementarity form."""

__version__ = "0.1.0"
