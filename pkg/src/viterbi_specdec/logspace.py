"""
Log-domain helpers.

Probabilities are clamped to a floor before taking logs so that exact zeros
never produce -inf scores.
"""

import math

import numpy as np
import numpy.typing as npt

DEFAULT_LOG_FLOOR = 1e-12


def floored_log(
    probs: npt.ArrayLike, floor: float = DEFAULT_LOG_FLOOR
) -> npt.NDArray[np.float64]:
    """log(max(p, floor)) elementwise."""
    arr = np.asarray(probs, dtype=np.float64)
    return np.log(np.maximum(arr, floor))


def floored_log_scalar(p: float, floor: float = DEFAULT_LOG_FLOOR) -> float:
    return math.log(max(p, floor))


def has_nan(*arrays: npt.NDArray[np.float64] | None) -> bool:
    return any(a is not None and bool(np.isnan(a).any()) for a in arrays)
