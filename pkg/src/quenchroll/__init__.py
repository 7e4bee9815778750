"""Heteroclinic roll-to-zero profiles of the Swift-Hohenberg equation with a quenched parameter."""
__version__ = "0.1.0"
