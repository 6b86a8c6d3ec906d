"""Simulated three-party additive secret-sharing engine."""
