"""Dual-graph text-to-SQL parser, trainable end to end at desk scale."""

__version__ = "0.1.0"
