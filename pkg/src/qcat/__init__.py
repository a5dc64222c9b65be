"""Forum question classification toolkit."""

__version__ = "0.1.0"
