"""Design-space exploration for wafer-scale LLM training systems."""

__version__ = "0.1.0"
