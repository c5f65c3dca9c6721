"""Permissioned proof-of-authority chain with public-chain anchoring."""

__version__ = "0.1.0"
