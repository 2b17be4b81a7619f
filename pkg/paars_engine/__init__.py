"""
PAARS engine: token-based contact detection with differentially private
exposure scores and PSI-gated retrieval.
"""

__version__ = "1.0.0"
