"""navhint: grounded navigation instructions with hallucination detection and remedy."""

__version__ = "0.1.0"
