"""Channel-aware M-ary distributed detection with J-divergence power allocation."""

__version__ = "0.1.0"
