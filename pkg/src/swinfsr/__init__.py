"""SwinFSR stereo image super-resolution, built on a small numpy autodiff engine."""

from .model import PRESETS, SwinFSR, SwinFsrConfig, build, count_params
from .tensor import Tensor, no_grad

__all__ = ["PRESETS", "SwinFSR", "SwinFsrConfig", "Tensor", "build", "count_params", "no_grad"]
__version__ = "0.1.0"
