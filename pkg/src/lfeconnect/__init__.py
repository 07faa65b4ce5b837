"""Connecting solutions of the Lorentz force equation in product spacetimes."""
