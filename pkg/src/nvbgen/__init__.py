"""Speech-driven non-verbal facial behavior generation toolkit."""

__version__ = "0.1.0"
