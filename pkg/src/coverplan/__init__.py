"""Optimal roadside sensor placement."""
