"""
Binary model files.

Layout (all integers little-endian):

    magic        4 bytes  b"CNNP"
    version      uint16
    name         uint16 length + UTF-8 bytes
    residue      uint8
    layer count  uint16
    per layer    relu uint8, in_channels uint16, branch count uint16,
                 per branch: filters uint16, kernel_h uint8, kernel_w uint8
    payload      per layer, per branch: weights (out, in, kh, kw) then biases, float32
    checksum     uint32 CRC-32 over every preceding byte
"""

import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from cnnpost.errors import (
    BadMagicError,
    ChecksumError,
    ModelFileError,
    SpecError,
    TruncatedModelError,
    VersionMismatchError,
)
from cnnpost.nn.graph import BranchSpec, LayerSpec, ModelParams, NetworkSpec
from cnnpost.nn.layers import ConvParams

logger = logging.getLogger(__name__)

MAGIC = b"CNNP"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")
CHECKSUM_SIZE = 4


def _encode_header(spec: NetworkSpec) -> bytes:
    name = spec.name.encode("utf-8")
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(name)), name]
    parts.append(struct.pack("<BH", int(spec.residue), len(spec.layers)))
    for layer in spec.layers:
        parts.append(struct.pack("<BHH", int(layer.relu), layer.in_channels, len(layer.branches)))
        for b in layer.branches:
            parts.append(struct.pack("<HBB", b.filters, b.kernel_h, b.kernel_w))
    return b"".join(parts)


def payload_size(spec: NetworkSpec) -> int:
    """Bytes of float32 weights and biases."""
    weights = biases = 0
    for layer in spec.layers:
        for b in layer.branches:
            weights += layer.in_channels * b.filters * b.kernel_h * b.kernel_w
            biases += b.filters
    return PAYLOAD_DTYPE.itemsize * (weights + biases)


def encode_model(params: ModelParams, spec: NetworkSpec) -> bytes:
    params.check_matches(spec)
    parts = [_encode_header(spec)]
    for conv in params:
        parts.append(conv.weights.astype(PAYLOAD_DTYPE).tobytes(order="C"))
        parts.append(conv.biases.astype(PAYLOAD_DTYPE).tobytes(order="C"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(params: ModelParams, spec: NetworkSpec, path: str | Path) -> int:
    """Write a model file and return the number of bytes written."""
    data = encode_model(params, spec)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    logger.info(f"Saved '{spec.name}' to {path} ({len(data)} bytes)")
    return len(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise TruncatedModelError(f"Model file ends inside the header at byte {len(self.data)}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise TruncatedModelError(
                f"Model file is truncated: needs {self.offset + size} bytes, has {len(self.data)}"
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def _parse_header(reader: _Reader) -> NetworkSpec:
    (name_len,) = reader.take("<H")
    try:
        name = reader.raw(name_len).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelFileError(f"Model name is not valid UTF-8: {e}") from e
    residue, n_layers = reader.take("<BH")
    layers = []
    for _ in range(n_layers):
        relu, in_channels, n_branches = reader.take("<BHH")
        branches = tuple(BranchSpec(*reader.take("<HBB")) for _ in range(n_branches))
        layers.append(LayerSpec(in_channels, branches, relu=bool(relu)))
    return NetworkSpec(name, tuple(layers), residue=bool(residue))


def _check_length(data: bytes, expected: int) -> None:
    if len(data) < expected:
        raise TruncatedModelError(f"Model file is truncated: needs {expected} bytes, has {len(data)}")
    if len(data) > expected:
        raise ModelFileError(f"Model file has {len(data) - expected} unexpected trailing bytes")


def decode_model(data: bytes) -> tuple[ModelParams, NetworkSpec]:
    """
    Parse model bytes. Checks run in order: magic, version, checksum, descriptors.

    The checksum covers the descriptor table, so a corrupted header is reported as
    ChecksumError. When the checksum fails, the header is parsed only to tell a file
    that is too short (TruncatedModelError) or too long from one that is corrupted.
    """
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"Not a model file: expected magic {MAGIC!r}, found {data[:len(MAGIC)]!r}")
    reader = _Reader(data)
    reader.offset = len(MAGIC)
    (version,) = reader.take("<H")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(version, FORMAT_VERSION)
    header_start = reader.offset
    if len(data) < header_start + CHECKSUM_SIZE:
        raise TruncatedModelError(f"Model file ends inside the header at byte {len(data)}")

    (stored,) = struct.unpack_from("<I", data, len(data) - CHECKSUM_SIZE)
    actual = zlib.crc32(data[:-CHECKSUM_SIZE])
    if stored != actual:
        try:
            spec = _parse_header(reader)
        except TruncatedModelError:
            raise
        except (ModelFileError, SpecError) as e:
            raise ChecksumError(f"Model checksum mismatch with a corrupted header: {e}") from e
        _check_length(data, reader.offset + payload_size(spec) + CHECKSUM_SIZE)
        raise ChecksumError(f"Model checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")

    try:
        spec = _parse_header(reader)
    except SpecError as e:
        raise ModelFileError(f"Model descriptor table is invalid: {e}") from e
    _check_length(data, reader.offset + payload_size(spec) + CHECKSUM_SIZE)

    params_layers = []
    for layer in spec.layers:
        convs = []
        for b in layer.branches:
            w_shape = (b.filters, layer.in_channels, b.kernel_h, b.kernel_w)
            w = np.frombuffer(reader.raw(PAYLOAD_DTYPE.itemsize * int(np.prod(w_shape))), dtype=PAYLOAD_DTYPE)
            bias = np.frombuffer(reader.raw(PAYLOAD_DTYPE.itemsize * b.filters), dtype=PAYLOAD_DTYPE)
            convs.append(ConvParams(w.reshape(w_shape).astype(np.float32), bias.astype(np.float32)))
        params_layers.append(convs)
    return ModelParams(params_layers), spec


def load_model(path: str | Path) -> tuple[ModelParams, NetworkSpec]:
    """Read a model file; parameters come back as float32 arrays."""
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"Model file not found: {path}")
    params, spec = decode_model(path.read_bytes())
    logger.debug(f"Loaded '{spec.name}' from {path}")
    return params, spec
