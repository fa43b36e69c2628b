"""Infinite-boundary-condition MPS toolkit.

Ground states of infinite spin chains, finite evolution windows embedded in
them, and spectral functions extracted from real-time correlators.
"""

__version__ = "0.1.0"
