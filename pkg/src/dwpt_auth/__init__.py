"""Authentication protocols for dynamic wireless EV charging: simulator, attacks, cost model."""

__version__ = "0.1.0"
