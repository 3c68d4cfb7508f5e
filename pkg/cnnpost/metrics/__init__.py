"""
Quality and rate-distortion metrics.

Usage:
    from cnnpost.metrics import RdCurve, bd_rate

    anchor = RdCurve.from_csv("anchor.csv")
    test = RdCurve.from_csv("test.csv")
    print(f"{bd_rate(anchor, test):.1f}%")
"""

from cnnpost.metrics.bjontegaard import (
    Cubic,
    RdCurve,
    RdPoint,
    bd_psnr,
    bd_rate,
    bd_rate_table,
    fit_cubic,
    format_bd_table,
    load_rd_table,
)
from cnnpost.metrics.evaluation import EvalRecord, EvalReport, evaluate_filter
from cnnpost.metrics.quality import mse, psnr

__all__ = [
    "Cubic",
    "EvalRecord",
    "EvalReport",
    "RdCurve",
    "RdPoint",
    "bd_psnr",
    "bd_rate",
    "bd_rate_table",
    "evaluate_filter",
    "fit_cubic",
    "format_bd_table",
    "load_rd_table",
    "mse",
    "psnr",
]
