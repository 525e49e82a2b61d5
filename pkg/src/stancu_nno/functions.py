"""Named test functions for the experiment commands."""
from __future__ import annotations

import numpy as np

from .signals import EcgModel


def kink_wave(s):
    """``|s - 0.5| + sin(6 pi s)``: oscillatory with a kink at 0.5."""
    s = np.asarray(s, dtype=float)
    return np.abs(s - 0.5) + np.sin(6.0 * np.pi * s)


def identity(s):
    return np.asarray(s, dtype=float)


def constant(value: float):
    def f(*coords):
        return np.full(np.shape(coords[0]), float(value))

    return f


def named_function(name: str, value: float = 7.3):
    """Look up a test function by name: ``kink``, ``identity``, ``constant`` or ``ecg``."""
    if name == "kink":
        return kink_wave
    if name == "identity":
        return identity
    if name == "constant":
        return constant(value)
    if name == "ecg":
        return EcgModel()
    raise KeyError(name)


FUNCTION_NAMES = ("kink", "identity", "constant", "ecg")
