"""
Training corpora: paired original/degraded planes cut into 35x35 samples.

Tiles are taken without overlap at offsets (35i, 35j) in row-major order;
right and bottom remainders narrower than a tile are dropped so every sample
has the same shape.
"""

import hashlib
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, overload

import numpy as np
from pydantic import BaseModel

from cnnpost.data.codec import QualityLevel, degrade
from cnnpost.data.io import load_plane
from cnnpost.errors import EmptyDatasetError, ShapeMismatchError
from cnnpost.tensor import Plane, Tensor, plane_to_tensor, quantize_samples

logger = logging.getLogger(__name__)

TILE = 35
IMAGE_SUFFIXES = (".pgm",)


@dataclass(frozen=True, eq=False)
class SamplePair:
    degraded: Tensor
    original: Tensor
    source_id: str
    top: int
    left: int

    def __post_init__(self) -> None:
        for name, t in (("degraded", self.degraded), ("original", self.original)):
            if t.shape != (1, TILE, TILE):
                raise ShapeMismatchError(f"{name} sample", t.shape, (1, TILE, TILE))


def tile_pairs(original: Plane, degraded: Plane, source_id: str = "") -> list[SamplePair]:
    if original.shape != degraded.shape:
        raise ShapeMismatchError("tile_pairs", original.shape, degraded.shape)
    orig = plane_to_tensor(original).data[0]
    deg = plane_to_tensor(degraded).data[0]
    samples = []
    for top in range(0, original.height - TILE + 1, TILE):
        for left in range(0, original.width - TILE + 1, TILE):
            window = np.s_[top:top + TILE, left:left + TILE]
            samples.append(SamplePair(
                degraded=Tensor.from_array(deg[window]),
                original=Tensor.from_array(orig[window]),
                source_id=source_id,
                top=top,
                left=left,
            ))
    return samples


def untile(samples: Sequence[SamplePair], height: int, width: int, degraded: bool = True) -> Plane:
    """Reassemble full tiles into the cropped plane they were cut from."""
    rows, cols = height // TILE, width // TILE
    out = np.zeros((rows * TILE, cols * TILE), dtype=np.uint8)
    for s in samples:
        t = s.degraded if degraded else s.original
        out[s.top:s.top + TILE, s.left:s.left + TILE] = quantize_samples(t.data[0])
    return Plane.from_array(out)


class SourceEntry(BaseModel):
    file: str
    height: int
    width: int
    tiles: int


class CorpusManifest(BaseModel):
    qp: int
    seed: int
    tile_size: int = TILE
    total_tiles: int
    sources: list[SourceEntry]
    checksum: str

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "CorpusManifest":
        return cls.model_validate_json(Path(path).read_text())


def corpus_checksum(samples: Sequence[SamplePair]) -> str:
    """SHA-256 over the 8-bit bytes of every degraded and original tile, in corpus order."""
    digest = hashlib.sha256()
    for s in samples:
        digest.update(quantize_samples(s.degraded.data).tobytes())
        digest.update(quantize_samples(s.original.data).tobytes())
    return digest.hexdigest()


@dataclass
class Corpus(Sequence[SamplePair]):
    samples: list[SamplePair]
    manifest: CorpusManifest
    originals: dict[str, Plane] = field(default_factory=dict, repr=False)

    @overload
    def __getitem__(self, index: int) -> SamplePair: ...
    @overload
    def __getitem__(self, index: slice) -> list[SamplePair]: ...

    def __getitem__(self, index: int | slice) -> SamplePair | list[SamplePair]:
        return self.samples[index]

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[SamplePair]:
        return iter(self.samples)


def list_images(image_dir: str | Path) -> list[Path]:
    return sorted(p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def build_corpus(image_dir: str | Path, q: QualityLevel, seed: int = 0, threads: int = 1) -> Corpus:
    """Degrade and tile every image of a directory.

    Images are processed concurrently when threads > 1, but the corpus is always
    ordered by (file name, tile index). Building is fully deterministic: ``seed``
    only records the training seed in the manifest and does not change the samples.
    """
    image_dir = Path(image_dir)
    files = list_images(image_dir) if image_dir.is_dir() else []
    if not files:
        raise EmptyDatasetError(f"No PGM images found in {image_dir}")

    def process(path: Path) -> tuple[Plane, list[SamplePair]]:
        original = load_plane(path)
        return original, tile_pairs(original, degrade(original, q), source_id=path.name)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(process, files))
    else:
        results = [process(p) for p in files]

    samples: list[SamplePair] = []
    sources = []
    for path, (original, tiles) in zip(files, results):
        logger.debug(f"{path.name}: {original.width}x{original.height}, {len(tiles)} tiles")
        samples.extend(tiles)
        sources.append(SourceEntry(file=path.name, height=original.height, width=original.width, tiles=len(tiles)))

    manifest = CorpusManifest(
        qp=q.qp,
        seed=seed,
        total_tiles=len(samples),
        sources=sources,
        checksum=corpus_checksum(samples),
    )
    logger.info(f"Built corpus from {len(files)} images at QP {q.qp}: {len(samples)} samples")
    return Corpus(samples, manifest, {path.name: original for path, (original, _) in zip(files, results)})


def split_holdout(
    samples: Sequence[SamplePair], fraction: float, seed: int = 0
) -> tuple[list[SamplePair], list[SamplePair]]:
    """Hold out whole source images so no held-out tile shares an image with training."""
    sources = sorted({s.source_id for s in samples})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sources))
    n_held = min(len(sources) - 1, math.ceil(fraction * len(sources))) if fraction > 0 else 0
    held_ids = {sources[i] for i in order[:max(n_held, 0)]}
    train = [s for s in samples if s.source_id not in held_ids]
    held = [s for s in samples if s.source_id in held_ids]
    return train, held


def synthetic_image(height: int, width: int, seed: int = 0) -> Plane:
    """Deterministic natural-looking content: smooth shading, hard-edged shapes and texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    angle = rng.uniform(0, 2 * np.pi)
    image = 90 + 60 * (np.cos(angle) * xx / width + np.sin(angle) * yy / height)

    for _ in range(rng.integers(4, 9)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        level = rng.uniform(-70, 70)
        if rng.random() < 0.5:
            radius = rng.uniform(0.08, 0.3) * min(height, width)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius ** 2
        else:
            hh, hw = rng.uniform(0.05, 0.25) * height, rng.uniform(0.05, 0.25) * width
            mask = (np.abs(yy - cy) < hh) & (np.abs(xx - cx) < hw)
        image[mask] += level

    freq = rng.uniform(0.15, 0.6, size=2)
    texture_mask = (xx / width + yy / height) > rng.uniform(0.6, 1.4)
    image += texture_mask * 18 * np.sin(freq[0] * xx) * np.cos(freq[1] * yy)
    image += rng.normal(0, 2.0, size=image.shape)
    return Plane.from_array(np.clip(np.floor(image + 0.5), 0, 255).astype(np.uint8))
