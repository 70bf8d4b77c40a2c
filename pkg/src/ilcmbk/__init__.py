"""Iterative learning of admittance gains for robot contact tasks."""
