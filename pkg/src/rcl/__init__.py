"""Reinforced continual learning: controller-driven expansion of a frozen,
timestamped task network."""

__version__ = "0.1.0"
