"""
aurora_qd

Quality-Diversity toolkit for a planar unicycle robot: AURORA with learned
descriptors, hand-coded (HC-x) and mean-streams (MeS) baselines, and a
coverage-based evaluation harness.
"""

__version__ = "0.1.0"
