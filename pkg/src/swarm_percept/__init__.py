"""Collective perception of a vibrating-tile floor by a robot swarm."""
__version__ = "0.1.0"
