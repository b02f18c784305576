"""Point-cloud ray optics for outdoor-to-indoor radio propagation."""

__version__ = "0.1.0"
