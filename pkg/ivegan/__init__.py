"""Invariant-encoding GAN and a vanilla GAN baseline, built on a small
numpy autodiff tape."""

__version__ = "0.1.0"
