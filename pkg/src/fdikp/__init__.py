"""Frequency-domain inverse kernel prediction for defocus deblurring, in numpy."""

__version__ = "0.1.0"
