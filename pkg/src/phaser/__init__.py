"""Phase-augmented, magnitude/phase separately encoded time-series classification."""

__version__ = "0.1.0"
