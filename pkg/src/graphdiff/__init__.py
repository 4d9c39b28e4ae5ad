"""Atom diffraction through graphene: beam budgets, transit dynamics, synthetic images, ring analysis."""

__version__ = "0.1.0"
