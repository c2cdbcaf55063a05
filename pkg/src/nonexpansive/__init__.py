"""Finite-horizon analysis of nonexpansive maps on proper metric spaces.

Orbits are classified as relatively compact or compactly divergent, limit
retractions and the group of iterate limits are estimated on recurrent
anchors, and the disk and polydisc come with Poincaré and chain-based
Kobayashi distances.
"""

__version__ = "0.1.0"
