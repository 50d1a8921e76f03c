"""Policy synthesis for finite-horizon MDPs with hard density constraints."""

__version__ = "0.1.0"
