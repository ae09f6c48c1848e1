"""Leaderless consensus of networked Euler-Lagrange arms with adaptive
internal-model disturbance rejection."""

__version__ = "0.1.0"
