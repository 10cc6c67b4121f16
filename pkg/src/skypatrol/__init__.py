"""Deterministic 2-D drone patrol laboratory.

Simulates a downward-looking drone observing a ground navigator, auto-labels
the observations from inter-frame geometric consistency, trains a small
mixture-density patrol network, and closes the loop with an instruction-fusing
controller.
"""

__version__ = "0.1.0"
