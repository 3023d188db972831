"""Physical Brownian motion in a magnetic field as a rough path."""

__version__ = "0.1.0"
