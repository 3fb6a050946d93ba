"""Box-supervised instance mask recovery with fused colour/texture affinities."""

__version__ = "0.1.0"
