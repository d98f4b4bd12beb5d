"""Kinetic (monad) construction of one-particle quantum mechanics."""

__version__ = "0.1.0"
