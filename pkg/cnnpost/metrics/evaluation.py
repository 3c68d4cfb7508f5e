"""Before/after PSNR of a trained filter over decoded planes."""

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from cnnpost.errors import EmptyDatasetError, ShapeMismatchError
from cnnpost.metrics.quality import psnr
from cnnpost.nn.graph import ModelParams, NetworkSpec, filter_plane
from cnnpost.tensor import Plane

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalRecord:
    label: str
    plane: str
    psnr_before: float
    psnr_after: float

    @property
    def delta(self) -> float:
        if math.isinf(self.psnr_before) and math.isinf(self.psnr_after):
            return 0.0
        return self.psnr_after - self.psnr_before


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else math.nan


@dataclass
class EvalReport:
    model: str
    records: list[EvalRecord] = field(default_factory=list)

    @property
    def mean_before(self) -> float:
        return _mean([r.psnr_before for r in self.records])

    @property
    def mean_after(self) -> float:
        return _mean([r.psnr_after for r in self.records])

    @property
    def mean_delta(self) -> float:
        return _mean([r.delta for r in self.records])

    def per_plane(self) -> dict[str, dict[str, float]]:
        planes: dict[str, list[EvalRecord]] = {}
        for r in self.records:
            planes.setdefault(r.plane, []).append(r)
        return {
            plane: {
                "psnr_before": _mean([r.psnr_before for r in recs]),
                "psnr_after": _mean([r.psnr_after for r in recs]),
                "delta": _mean([r.delta for r in recs]),
            }
            for plane, recs in planes.items()
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [{**asdict(r), "delta": r.delta} for r in self.records]
        return pd.DataFrame(rows, columns=["label", "plane", "psnr_before", "psnr_after", "delta"])

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.4f")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "pairs": len(self.records),
            "mean_psnr_before": self.mean_before,
            "mean_psnr_after": self.mean_after,
            "mean_delta": self.mean_delta,
            "planes": self.per_plane(),
            "records": self.to_frame().to_dict(orient="records"),
        }

    def format_table(self) -> str:
        frame = self.to_frame().rename(columns={
            "psnr_before": "PSNR before (dB)", "psnr_after": "PSNR after (dB)", "delta": "Delta (dB)",
        })
        lines = [frame.to_string(index=False, float_format=lambda v: f"{v:.4f}")]
        lines.append(
            f"Mean PSNR: {self.mean_before:.4f} dB -> {self.mean_after:.4f} dB ({self.mean_delta:+.4f} dB)"
        )
        return "\n".join(lines)


def combined_frame(reports: Sequence[EvalReport], model_files: Sequence[str]) -> pd.DataFrame:
    """Per-pair rows of several reports, tagged with the model name and file."""
    frames = [
        report.to_frame().assign(model=report.model, model_file=path)
        for report, path in zip(reports, model_files, strict=True)
    ]
    frame = pd.concat(frames, ignore_index=True)
    return frame[["model", "model_file", "label", "plane", "psnr_before", "psnr_after", "delta"]]


def evaluate_filter(
    params: ModelParams,
    spec: NetworkSpec,
    pairs: Sequence[tuple[Plane, Plane]],
    labels: Sequence[str] | None = None,
    planes: Sequence[str] | None = None,
    threads: int = 1,
) -> EvalReport:
    """Filter every degraded plane and compare both versions against the original.

    `pairs` holds (degraded, original) planes; `planes` tags each pair with Y/U/V
    for per-plane summaries (default Y).
    """
    if not pairs:
        raise EmptyDatasetError("evaluate_filter needs at least one (degraded, original) pair")
    labels = list(labels) if labels is not None else [f"pair{i}" for i in range(len(pairs))]
    planes = list(planes) if planes is not None else ["Y"] * len(pairs)
    if len(labels) != len(pairs) or len(planes) != len(pairs):
        raise ShapeMismatchError("evaluation labels", (len(labels), len(planes)), (len(pairs), len(pairs)))

    report = EvalReport(model=spec.name)
    for label, plane, (degraded, original) in zip(labels, planes, pairs):
        filtered = filter_plane(spec, params, degraded, threads)
        record = EvalRecord(label, plane, psnr(degraded, original), psnr(filtered, original))
        logger.debug(f"{label} [{plane}]: {record.psnr_before:.4f} dB -> {record.psnr_after:.4f} dB")
        report.records.append(record)
    logger.info(
        f"Evaluated '{spec.name}' on {len(pairs)} planes: mean delta {report.mean_delta:+.4f} dB"
    )
    return report
