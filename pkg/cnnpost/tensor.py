"""
Dense feature maps and 8-bit sample planes.

A ``Tensor`` is a rank-3 (channels, height, width) array of real samples; it holds
network inputs, targets and every intermediate activation. A ``Plane`` is the
storage form of one luminance or chrominance channel. Both are immutable values:
their backing arrays are flagged read-only on construction.
"""

from dataclasses import dataclass

import numpy as np

from cnnpost.errors import NumericError, ShapeMismatchError, SpecError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Tensor:
    """Rank-3 feature map in (channel, row, column) order."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise SpecError(f"Tensor needs a non-empty (channels, height, width) array, got shape {self.data.shape}")
        if not np.issubdtype(self.data.dtype, np.floating):
            raise SpecError(f"Tensor data must be floating point, got {self.data.dtype}")
        if not np.all(np.isfinite(self.data)):
            raise NumericError("Tensor contains NaN or Inf values")

    @classmethod
    def from_array(cls, array: np.ndarray, dtype: type[np.floating] = np.float64) -> "Tensor":
        array = np.asarray(array, dtype=dtype)
        if array.ndim == 2:
            array = array[np.newaxis]
        return cls(_frozen(np.array(array, dtype=dtype, copy=True)))

    @classmethod
    def zeros(cls, channels: int, height: int, width: int, dtype: type[np.floating] = np.float64) -> "Tensor":
        return cls(_frozen(np.zeros((channels, height, width), dtype=dtype)))

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels, self.height, self.width

    def __len__(self) -> int:
        return self.data.size


@dataclass(frozen=True, eq=False)
class Plane:
    """One 8-bit sample plane (Y, U or V)."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.samples.ndim != 2 or min(self.samples.shape) < 1:
            raise SpecError(f"Plane needs a non-empty (height, width) array, got shape {self.samples.shape}")
        if self.samples.dtype != np.uint8:
            raise SpecError(f"Plane samples must be uint8, got {self.samples.dtype}")

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Plane":
        """Wrap 8-bit samples; floating-point input is rounded half-up first."""
        array = np.asarray(array)
        if np.issubdtype(array.dtype, np.floating):
            if not np.all(np.isfinite(array)):
                raise SpecError("Plane samples must be finite")
            array = np.floor(array + 0.5)
        if array.dtype != np.uint8:
            if np.any(array < 0) or np.any(array > 255):
                raise SpecError("Plane samples must lie in [0, 255]")
            array = array.astype(np.uint8)
        return cls(_frozen(np.array(array, copy=True)))

    @classmethod
    def zeros(cls, height: int, width: int) -> "Plane":
        return cls(_frozen(np.zeros((height, width), dtype=np.uint8)))

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Plane):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.samples, other.samples))

    def __hash__(self) -> int:
        return hash((self.shape, self.samples.tobytes()))


def plane_to_tensor(p: Plane, dtype: type[np.floating] = np.float64) -> Tensor:
    """Scale 8-bit samples to [0, 1]."""
    return Tensor(_frozen(p.samples.astype(dtype)[np.newaxis] / dtype(255.0)))


def quantize_samples(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values back to uint8: multiply by 255, round half-up, clamp."""
    scaled = np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def tensor_to_plane(t: Tensor) -> Plane:
    if t.channels != 1:
        raise SpecError(f"expected single channel, got {t.channels} channels")
    return Plane(_frozen(quantize_samples(t.data[0])))


def _checked(result: np.ndarray) -> Tensor:
    if not np.all(np.isfinite(result)):
        raise NumericError("Elementwise operation produced NaN or Inf")
    return Tensor(_frozen(result))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError("add", a.shape, b.shape)
    return _checked(a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError("sub", a.shape, b.shape)
    return _checked(a.data - b.data)


def scale(a: Tensor, factor: float) -> Tensor:
    return _checked(a.data * a.data.dtype.type(factor))


def mse(a: Plane, b: Plane) -> float:
    """Mean squared sample difference between two planes."""
    if a.shape != b.shape:
        raise ShapeMismatchError("mse", a.shape, b.shape)
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    return float(np.mean(diff * diff))
