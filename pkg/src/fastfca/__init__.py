"""Neural FastFCA blind source separation with a FastMNMF baseline."""
__version__ = "0.1.0"
