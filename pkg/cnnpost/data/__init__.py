"""Image ingestion, the block-transform codec proxy and training corpora."""

from cnnpost.data.codec import TRAINING_QPS, QualityLevel, degrade
from cnnpost.data.corpus import (
    TILE,
    Corpus,
    CorpusManifest,
    SamplePair,
    build_corpus,
    split_holdout,
    synthetic_image,
    tile_pairs,
    untile,
)
from cnnpost.data.io import (
    PlaneFormat,
    count_yuv420_frames,
    load_plane,
    load_yuv420_frame,
    save_pgm,
    save_raw,
    write_yuv420_frame,
)

__all__ = [
    "TRAINING_QPS",
    "TILE",
    "Corpus",
    "CorpusManifest",
    "PlaneFormat",
    "QualityLevel",
    "SamplePair",
    "build_corpus",
    "count_yuv420_frames",
    "degrade",
    "load_plane",
    "load_yuv420_frame",
    "save_pgm",
    "save_raw",
    "split_holdout",
    "synthetic_image",
    "tile_pairs",
    "untile",
    "write_yuv420_frame",
]
