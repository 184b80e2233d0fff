"""Adaptive federated Byzantine agreement: reputation-driven quorum-slice regeneration with a core fallback."""

__version__ = "0.1.0"
