"""Categorical encoders for imbalanced binary targets, with a GBDT benchmark harness."""
__version__ = "0.1.0"
