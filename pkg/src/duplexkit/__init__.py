"""duplexkit: desk-scale full-duplex spoken-dialogue pipeline toolkit."""

from .core import AudioBuffer, RunConfig, TimeGrid

__version__ = "0.1.0"
__all__ = ["AudioBuffer", "RunConfig", "TimeGrid", "__version__"]
