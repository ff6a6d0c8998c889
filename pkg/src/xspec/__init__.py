"""Cross-spectral dataset registration, annotation transfer, and evaluation."""

__version__ = "0.1.0"
