"""
Bjontegaard delta metrics over rate-distortion curves.

The classic measure fits a cubic through the four points of each curve
(log10 rate as a function of PSNR for BD-rate, the other way round for
BD-PSNR), integrates both fits in closed form over the common interval and
compares the averages. The piecewise variant swaps the cubic for a monotone
piecewise-cubic (PCHIP) interpolant and accepts any number of points >= 2.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from cnnpost.errors import CurveError, NoOverlapError, NonMonotonicCurveError, NumericError

logger = logging.getLogger(__name__)

CLASSIC_POINTS = 4
MIN_PSNR_SPAN = 0.5
RD_COLUMNS = ("qp", "bitrate", "psnr")
GROUP_COLUMNS = ("class", "sequence", "plane")
PLANE_ORDER = ("Y", "U", "V")


@dataclass(frozen=True)
class RdPoint:
    bitrate: float
    psnr: float
    qp: int | None = None

    def __post_init__(self) -> None:
        if not self.bitrate > 0 or not math.isfinite(self.bitrate):
            raise CurveError(f"Bitrate must be positive and finite, got {self.bitrate}")
        if not math.isfinite(self.psnr):
            raise CurveError(f"PSNR must be finite, got {self.psnr}")


@dataclass(frozen=True)
class RdCurve:
    """Rate-distortion points ordered by increasing bitrate.

    Both bitrate and PSNR must increase strictly along the curve.
    """

    points: tuple[RdPoint, ...]
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise CurveError(f"Curve '{self.label}' needs at least 2 points, got {len(self.points)}")
        ordered = tuple(sorted(self.points, key=lambda p: p.bitrate))
        object.__setattr__(self, "points", ordered)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.bitrate <= prev.bitrate or cur.psnr <= prev.psnr:
                raise NonMonotonicCurveError(
                    f"Curve '{self.label}' is not strictly increasing: "
                    f"({prev.bitrate:g}, {prev.psnr:.4f} dB) is followed by ({cur.bitrate:g}, {cur.psnr:.4f} dB)"
                )

    @classmethod
    def from_pairs(cls, bitrates: list[float] | np.ndarray, psnrs: list[float] | np.ndarray, label: str = "") -> "RdCurve":
        if len(bitrates) != len(psnrs):
            raise CurveError(f"Curve '{label}': {len(bitrates)} bitrates but {len(psnrs)} PSNR values")
        return cls(tuple(RdPoint(float(r), float(q)) for r, q in zip(bitrates, psnrs)), label)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, label: str = "") -> "RdCurve":
        qps = frame["qp"] if "qp" in frame else [None] * len(frame)
        points = tuple(
            RdPoint(float(r), float(q), None if qp is None or pd.isna(qp) else int(qp))
            for qp, r, q in zip(qps, frame["bitrate"], frame["psnr"])
        )
        return cls(points, label)

    @classmethod
    def from_csv(cls, path: str | Path) -> "RdCurve":
        """Read a `qp,bitrate,psnr` CSV holding a single curve."""
        table = load_rd_table(path)
        groups = table.groupby(list(GROUP_COLUMNS), sort=False)
        if groups.ngroups != 1:
            raise CurveError(f"{path} holds {groups.ngroups} curves; use load_rd_table for grouped files")
        return cls.from_frame(table, label=Path(path).stem)

    @property
    def bitrates(self) -> np.ndarray:
        return np.array([p.bitrate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])

    @property
    def log_rates(self) -> np.ndarray:
        return np.log10(self.bitrates)

    def scaled(self, rate_factor: float = 1.0, psnr_offset: float = 0.0) -> "RdCurve":
        return RdCurve(
            tuple(RdPoint(p.bitrate * rate_factor, p.psnr + psnr_offset, p.qp) for p in self.points),
            self.label,
        )


def load_rd_table(path: str | Path) -> pd.DataFrame:
    """Read RD points from CSV; missing class/sequence/plane columns get defaults."""
    try:
        table = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CurveError(f"Cannot read RD table {path}: {e}") from e
    table.columns = [str(c).strip().lower() for c in table.columns]
    missing = [c for c in RD_COLUMNS[1:] if c not in table.columns]
    if missing:
        raise CurveError(f"{path} lacks column(s) {', '.join(missing)}; expected header qp,bitrate,psnr")
    defaults = {"class": "-", "sequence": Path(path).stem, "plane": "Y"}
    for column, value in defaults.items():
        if column not in table.columns:
            table[column] = value
    if "qp" not in table.columns:
        table["qp"] = pd.NA
    table["plane"] = table["plane"].astype(str).str.upper()
    return table


@dataclass(frozen=True)
class Cubic:
    """p(x) = sum_k coeffs[k] * (x - center)^k."""

    coeffs: np.ndarray
    center: float

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x) - self.center, self.coeffs)

    def integral(self, lo: float, hi: float) -> float:
        anti = np.polynomial.polynomial.polyint(self.coeffs)
        return float(
            np.polynomial.polynomial.polyval(hi - self.center, anti)
            - np.polynomial.polynomial.polyval(lo - self.center, anti)
        )


def fit_cubic(x: np.ndarray, y: np.ndarray) -> Cubic:
    """Interpolating cubic through exactly four points (Vandermonde system, partial pivoting)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != (CLASSIC_POINTS,) or y.shape != (CLASSIC_POINTS,):
        raise CurveError(
            f"The cubic fit needs exactly {CLASSIC_POINTS} points, got {x.size}; use the piecewise variant"
        )
    center = float(np.mean(x))
    vander = np.vander(x - center, CLASSIC_POINTS, increasing=True)
    try:
        coeffs = np.linalg.solve(vander, y)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Cubic fit is singular: {e}") from e
    return Cubic(coeffs, center)


def _common_interval(a: np.ndarray, b: np.ndarray, what: str) -> tuple[float, float]:
    lo = max(float(a.min()), float(b.min()))
    hi = min(float(a.max()), float(b.max()))
    if hi <= lo:
        raise NoOverlapError(
            f"Curves do not overlap in {what}: [{a.min():.4f}, {a.max():.4f}] vs [{b.min():.4f}, {b.max():.4f}]"
        )
    return lo, hi


def _warn_narrow(curve: RdCurve) -> None:
    span = float(curve.psnrs[-1] - curve.psnrs[0])
    if span < MIN_PSNR_SPAN:
        logger.warning(f"Curve '{curve.label}' spans only {span:.3f} dB; the fit is poorly conditioned")


def _integrate(x: np.ndarray, y: np.ndarray, lo: float, hi: float, piecewise: bool) -> float:
    if piecewise:
        return float(PchipInterpolator(x, y).integrate(lo, hi))
    return fit_cubic(x, y).integral(lo, hi)


def _check_shape(anchor: RdCurve, test: RdCurve, piecewise: bool) -> None:
    if piecewise:
        return
    for curve in (anchor, test):
        if len(curve.points) != CLASSIC_POINTS:
            raise CurveError(
                f"Curve '{curve.label}' has {len(curve.points)} points; the classic measure needs "
                f"{CLASSIC_POINTS} (one per QP) unless the piecewise variant is selected"
            )


def bd_rate(anchor: RdCurve, test: RdCurve, piecewise: bool = False) -> float:
    """Average bitrate difference in percent at equal PSNR; negative means the test saves bits."""
    _check_shape(anchor, test, piecewise)
    _warn_narrow(anchor)
    _warn_narrow(test)
    lo, hi = _common_interval(anchor.psnrs, test.psnrs, "PSNR")
    int_anchor = _integrate(anchor.psnrs, anchor.log_rates, lo, hi, piecewise)
    int_test = _integrate(test.psnrs, test.log_rates, lo, hi, piecewise)
    return (10.0 ** ((int_test - int_anchor) / (hi - lo)) - 1.0) * 100.0


def bd_psnr(anchor: RdCurve, test: RdCurve, piecewise: bool = False) -> float:
    """Average PSNR difference in dB at equal bitrate."""
    _check_shape(anchor, test, piecewise)
    lo, hi = _common_interval(anchor.log_rates, test.log_rates, "log-rate")
    int_anchor = _integrate(anchor.log_rates, anchor.psnrs, lo, hi, piecewise)
    int_test = _integrate(test.log_rates, test.psnrs, lo, hi, piecewise)
    return (int_test - int_anchor) / (hi - lo)


def _plane_sort_key(plane: str) -> tuple[int, str]:
    return (PLANE_ORDER.index(plane) if plane in PLANE_ORDER else len(PLANE_ORDER), plane)


def bd_rate_table(anchor: pd.DataFrame, test: pd.DataFrame, piecewise: bool = False) -> pd.DataFrame:
    """BD-rate per (class, sequence) and plane, with per-class averages and an overall row.

    Both frames use the `load_rd_table` layout. Only groups present in both are compared.
    """
    keys = list(GROUP_COLUMNS)
    anchor_groups = dict(tuple(anchor.groupby(keys, sort=False)))
    rows = []
    for key, test_group in test.groupby(keys, sort=False):
        if key not in anchor_groups:
            logger.warning(f"No anchor curve for {'/'.join(map(str, key))}; skipped")
            continue
        label = "/".join(map(str, key))
        rate = bd_rate(
            RdCurve.from_frame(anchor_groups[key], f"anchor {label}"),
            RdCurve.from_frame(test_group, f"test {label}"),
            piecewise=piecewise,
        )
        rows.append({"class": key[0], "sequence": key[1], "plane": key[2], "bd_rate": rate})
    if not rows:
        raise CurveError("Anchor and test tables share no (class, sequence, plane) curve")

    long = pd.DataFrame(rows)
    planes = sorted(long["plane"].unique(), key=_plane_sort_key)
    wide = long.pivot_table(index=["class", "sequence"], columns="plane", values="bd_rate", sort=False)
    wide = wide.reindex(columns=planes).reset_index()
    wide.columns.name = None

    parts = [wide]
    averages = wide.groupby("class", sort=False)[planes].mean().reset_index()
    if len(averages) > 1 or averages["class"].iloc[0] != "-":
        averages.insert(1, "sequence", "Average")
        parts.append(averages)
    overall = pd.DataFrame([{"class": "Overall", "sequence": "All", **wide[planes].mean().to_dict()}])
    parts.append(overall)
    return pd.concat(parts, ignore_index=True)


def format_bd_table(table: pd.DataFrame, decimals: int = 1) -> str:
    return table.to_string(index=False, float_format=lambda v: f"{v:.{decimals}f}", na_rep="-")
