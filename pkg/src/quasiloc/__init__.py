"""Quasi-local operators on finite metric spaces: measurement, decomposition and certified banded approximation."""
