"""Monte Carlo laboratory for blind massive digital over-the-air computation."""

__version__ = "0.1.0"
