"""Similarity-dissimilarity weighted multi-label supervised contrastive learning."""

__version__ = "0.1.0"
