"""Deterministic simulator for decentralized graph-federated learning."""

__version__ = "0.1.0"
