"""Covert messaging over Monero-style stealth addresses and masked amounts."""

__version__ = "0.1.0"
