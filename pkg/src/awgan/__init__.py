"""Adaptive weighted discriminator training for GANs, at toy scale."""

__version__ = "0.1.0"
