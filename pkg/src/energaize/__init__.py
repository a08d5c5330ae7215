"""Renewable-energy-community simulator with a multi-agent actor-critic
controller for EV charging and dwelling storage."""

__version__ = "0.1.0"
