"""Publication-style figures from ibcmps CSV artifacts."""

__version__ = "0.1.0"
