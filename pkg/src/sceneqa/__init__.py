"""Question answering about indoor scenes over possible symbolic fact worlds."""

__version__ = "0.1.0"
