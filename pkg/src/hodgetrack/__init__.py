"""Harmonic 1-forms by gossip Hodge decomposition, and homology classification
of trajectories on triangulated sensor-network domains."""

__version__ = "0.1.0"
