"""Multi-satellite massive-MIMO random access simulator.

Sparse terrestrial-satellite channel generation, training-sequence-padded
framing, OAMP-MMV joint activity detection and channel estimation, 2D-ESPRIT
channel refinement, and cooperative multi-satellite data detection with
perfect or quantized backhaul.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalError

__all__ = ["ConfigError", "NumericalError", "__version__"]
