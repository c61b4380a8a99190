"""Household battery control with federated actor-critic agents and an LP dispatch oracle."""

__version__ = "0.1.0"
