"""pruneforge: layer-by-layer CNN kernel pruning with progressive retraining."""

__version__ = "0.1.0"
