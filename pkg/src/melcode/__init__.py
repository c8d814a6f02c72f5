"""Learned low-dimensional codes for Mel log spectra via stacked denoising autoencoders."""

__version__ = "0.1.0"
