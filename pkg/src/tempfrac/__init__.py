"""Tau-matrix approximate-inverse preconditioning for tempered fractional diffusion."""

__version__ = "0.1.0"
