"""Width-switchable learned image codec.

One model, several operating points: every layer can execute at any of the
registered channel widths, trading rate, distortion, memory and compute at
runtime, with a bit-exact range-coded bitstream and an optional
quality-progressive mode.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .model import CodecConfig, SlimAutoencoder, desk_config, full_config, psnr

__all__ = [
    "CodecConfig",
    "SlimAutoencoder",
    "active_backend",
    "desk_config",
    "full_config",
    "psnr",
    "__version__",
]
