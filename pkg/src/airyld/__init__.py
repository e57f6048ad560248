"""Edge random-matrix simulation and large-deviation toolkit."""

__version__ = "0.1.0"
