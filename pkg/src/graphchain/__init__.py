"""GraphChain: a per-transaction block graph mined in parallel by elected leaders."""

__version__ = "0.1.0"
