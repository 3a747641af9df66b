"""Weakly-supervised multimodal insight extraction toolkit."""

__version__ = "0.1.0"
