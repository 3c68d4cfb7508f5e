"""Pixel-domain quality measures."""

import math

from cnnpost.tensor import Plane, mse

PEAK = 255.0


def psnr(a: Plane, b: Plane) -> float:
    """10 log10(255^2 / MSE) in dB; identical planes give math.inf."""
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / error)


__all__ = ["PEAK", "mse", "psnr"]
