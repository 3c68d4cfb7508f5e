"""Per-frame filtering time of trained networks on synthetic frames."""

import logging
import time
from dataclasses import asdict, dataclass

from cnnpost.data.corpus import synthetic_image
from cnnpost.errors import ConfigError
from cnnpost.nn.graph import ModelParams, NetworkSpec, filter_plane
from cnnpost.zoo import mac_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchResult:
    model: str
    width: int
    height: int
    frames: int
    threads: int
    total_seconds: float
    macs_per_frame: int

    @property
    def seconds_per_frame(self) -> float:
        return self.total_seconds / self.frames

    def to_dict(self) -> dict:
        return {**asdict(self), "seconds_per_frame": self.seconds_per_frame}


def benchmark(
    params: ModelParams,
    spec: NetworkSpec,
    width: int = 176,
    height: int = 144,
    frames: int = 10,
    threads: int = 1,
    seed: int = 0,
) -> BenchResult:
    """Time luminance filtering of `frames` synthetic frames after one untimed warmup frame."""
    if frames < 1:
        raise ConfigError(f"Benchmark needs at least one frame, got {frames}")
    if width < 1 or height < 1:
        raise ConfigError(f"Invalid frame size {width}x{height}")
    inputs = [synthetic_image(height, width, seed + i) for i in range(frames + 1)]

    filter_plane(spec, params, inputs[0], threads)
    start = time.perf_counter()
    for frame in inputs[1:]:
        filter_plane(spec, params, frame, threads)
    total = time.perf_counter() - start

    result = BenchResult(
        model=spec.name,
        width=width,
        height=height,
        frames=frames,
        threads=threads,
        total_seconds=total,
        macs_per_frame=mac_count(spec, height, width),
    )
    logger.info(f"{spec.name}: {result.seconds_per_frame:.4f} s/frame at {width}x{height}")
    return result


def relative_speed(results: list[BenchResult]) -> list[float]:
    """Speed of every result relative to the first one (>1 means faster)."""
    if not results:
        return []
    reference = results[0].seconds_per_frame
    return [reference / r.seconds_per_frame if r.seconds_per_frame > 0 else float("inf") for r in results]
