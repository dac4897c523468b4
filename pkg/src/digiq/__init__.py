"""Fixed-point digital-state simulation of sparse quantum linear algebra."""
__version__ = "0.1.0"
