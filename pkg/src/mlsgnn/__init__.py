"""Semi-supervised node classification over fused feature, topology and semantic graphs."""

__version__ = "0.1.0"
