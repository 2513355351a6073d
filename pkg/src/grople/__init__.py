"""GroPLE - group-preserving label embedding for multi-label classification."""

__version__ = "0.1.0"
