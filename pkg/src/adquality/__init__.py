"""Audio-ad quality prediction: acoustic features, engagement labels and models."""

__version__ = "0.1.0"
