"""Health-investment timing in a Merton consumption/portfolio model."""

__version__ = "0.1.0"
