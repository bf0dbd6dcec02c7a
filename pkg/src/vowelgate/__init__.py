"""Hybrid GMM / probabilistic-SVM vowel detection and recognition."""

__version__ = "0.1.0"
