"""Desk-scale degradation-aware full-scene restoration.

Pipeline: synthesize controlled degradations, learn a content-invariant
degradation code from HQ-LQ face pairs, map it to multi-scale
conditioning tokens, and drive a one-step conditional restorer for the
whole scene.
"""

__version__ = "0.1.0"
