"""steiner-laminar - Exact Steiner trees by laminar-family decomposition."""

__version__ = "0.1.0"
