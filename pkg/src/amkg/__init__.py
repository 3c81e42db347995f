"""Ontology-guided mathematical knowledge graphs for equation-based extrapolation."""

__version__ = "0.1.0"
