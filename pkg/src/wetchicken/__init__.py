"""Batch model-based reinforcement learning on the Wet-Chicken benchmark."""

__version__ = "0.1.0"
