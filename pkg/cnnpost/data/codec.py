"""
Block-transform codec proxy.

Stands in for intra coding with the in-loop filters switched off: 8x8 orthonormal
DCT per block, uniform scalar quantization with an HEVC-like step size, inverse
transform. The result carries the blocking and ringing artifacts the networks
are trained to remove, and gets coarser as the QP grows.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from cnnpost.errors import ConfigError
from cnnpost.tensor import Plane

BLOCK = 8
QP_MIN, QP_MAX = 0, 51
TRAINING_QPS = (22, 27, 32, 37)


@dataclass(frozen=True)
class QualityLevel:
    qp: int

    def __post_init__(self) -> None:
        if not QP_MIN <= self.qp <= QP_MAX:
            raise ConfigError(f"QP must lie in [{QP_MIN}, {QP_MAX}], got {self.qp}")

    @property
    def qstep(self) -> float:
        """Quantizer step size; doubles every 6 QP and is 1 at QP 4."""
        return float(2.0 ** ((self.qp - 4) / 6.0))


def _to_blocks(samples: np.ndarray) -> np.ndarray:
    """Pad by edge replication to a multiple of 8 and view as (rows, cols, 8, 8)."""
    h, w = samples.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    padded = np.pad(samples, ((0, ph), (0, pw)), mode="edge")
    rows, cols = padded.shape[0] // BLOCK, padded.shape[1] // BLOCK
    return padded.reshape(rows, BLOCK, cols, BLOCK).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray, height: int, width: int) -> np.ndarray:
    rows, cols = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(rows * BLOCK, cols * BLOCK)[:height, :width]


def quantize(coefficients: np.ndarray, qstep: float) -> np.ndarray:
    """round(c / qstep) * qstep, rounding halves away from zero."""
    levels = np.sign(coefficients) * np.floor(np.abs(coefficients) / qstep + 0.5)
    return levels * qstep


def degrade(p: Plane, q: QualityLevel) -> Plane:
    blocks = _to_blocks(p.samples.astype(np.float64))
    coefficients = dctn(blocks, axes=(-2, -1), norm="ortho")
    reconstructed = idctn(quantize(coefficients, q.qstep), axes=(-2, -1), norm="ortho")
    samples = _from_blocks(reconstructed, p.height, p.width)
    return Plane.from_array(np.clip(np.floor(samples + 0.5), 0, 255).astype(np.uint8))
