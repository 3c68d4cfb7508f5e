#!/usr/bin/env python3
"""
Main CLI for cnnpost: train, apply and evaluate artifact-reduction networks.
"""

import copy
import json
import logging
import sys
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Optional

import click
import typer
from dotenv import load_dotenv
from pydantic import ValidationError

from cnnpost.bench import benchmark, relative_speed
from cnnpost.config import CnnpostSettings
from cnnpost.data.codec import QualityLevel, degrade
from cnnpost.data.corpus import build_corpus, list_images, synthetic_image
from cnnpost.data.io import (
    PlaneFormat,
    count_yuv420_frames,
    load_plane,
    load_yuv420_frame,
    save_pgm,
    save_raw,
    write_yuv420_frame,
)
from cnnpost.errors import CnnpostError, ConfigError, FineTuneRequiredError
from cnnpost.metrics.bjontegaard import (
    RdCurve,
    bd_psnr,
    bd_rate,
    bd_rate_table,
    format_bd_table,
    load_rd_table,
)
from cnnpost.metrics.evaluation import EvalReport, combined_frame, evaluate_filter
from cnnpost.metrics.quality import psnr
from cnnpost.model_io import load_model, payload_size, save_model
from cnnpost.nn.graph import ModelParams, NetworkSpec, filter_plane
from cnnpost.tensor import Plane
from cnnpost.trainer import FINE_TUNE_SOURCE, TrainConfig, load_train_config, train
from cnnpost.zoo import MODELS, build_model, describe, param_count

app = typer.Typer(
    name="cnnpost",
    help="Convolutional post-processing filters for block-coded images",
    no_args_is_help=True,
)

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
PLANE_NAMES = ("Y", "U", "V")


class ColoredFormatter(logging.Formatter):
    """Custom formatter that adds colors based on logger name and level."""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
    }

    # Module-specific colors (for logger names)
    SERVICE_COLORS = {
        'cnnpost.trainer': '\033[94m',                 # Blue
        'cnnpost.data.corpus': '\033[92m',             # Light Green
        'cnnpost.metrics.bjontegaard': '\033[95m',     # Light Magenta
        'cnnpost.metrics.evaluation': '\033[96m',      # Light Cyan
        'cnnpost.model_io': '\033[93m',                # Light Yellow
        'cnnpost.bench': '\033[97m',                   # White
    }

    RESET = '\033[0m'

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.use_colors = hasattr(sys.stderr, 'isatty') and sys.stderr.isatty()

    def format(self, record: logging.LogRecord) -> str:
        if not self.use_colors:
            return super().format(record)

        record_copy = copy.copy(record)
        service_color = self.SERVICE_COLORS.get(record_copy.name, '')
        level_color = self.COLORS.get(record_copy.levelname, '')
        if service_color:
            record_copy.name = f"{service_color}{record_copy.name}{self.RESET}"
        if level_color:
            record_copy.levelname = f"{level_color}{record_copy.levelname}{self.RESET}"
        return super().format(record_copy)


def setup_logging(log_level: str = "INFO") -> None:
    """Configure logging for the application."""
    formatter = ColoredFormatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    handler = logging.StreamHandler()
    handler.setFormatter(formatter)
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        handlers=[handler],
        force=True,
    )


class PlaneChoice(str, Enum):
    y = "y"
    u = "u"
    v = "v"
    all = "all"

    @property
    def indices(self) -> list[int]:
        return [0, 1, 2] if self is PlaneChoice.all else [PLANE_NAMES.index(self.value.upper())]


@contextmanager
def _reported_errors() -> Iterator[None]:
    """Turn library and file-system errors into a one-line message and the matching exit code."""
    try:
        yield
    except CnnpostError as e:
        logger.debug("Full traceback:", exc_info=True)
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(e.exit_code)
    except OSError as e:
        logger.debug("Full traceback:", exc_info=True)
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(2)


def _settings(ctx: typer.Context) -> CnnpostSettings:
    if isinstance(ctx.obj, CnnpostSettings):
        return ctx.obj
    return CnnpostSettings()


def _write_report(settings: CnnpostSettings, command: str, data: dict, report: Path | None) -> None:
    path = report
    if path is None and settings.report_dir is not None:
        path = settings.report_dir / f"{command}.json"
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    logger.info(f"Wrote {command} report to {path}")


def _load_params(model_file: Path, settings: CnnpostSettings) -> tuple[ModelParams, NetworkSpec]:
    params, spec = load_model(model_file)
    return params.astype(settings.dtype), spec


def _resolve_format(path: Path, format: PlaneFormat | None) -> PlaneFormat:
    return format if format is not None else PlaneFormat.guess(path)


def _save_plane(plane: Plane, path: Path, format: PlaneFormat) -> int:
    return save_pgm(plane, path) if format is PlaneFormat.PGM else save_raw(plane, path)


def _frame_indices(path: Path, width: int, height: int, frame: int | None) -> list[int]:
    if frame is not None:
        return [frame]
    count = count_yuv420_frames(path, width, height)
    if count == 0:
        raise ConfigError(f"{path} holds no complete {width}x{height} 4:2:0 frame")
    return list(range(count))


def _require_geometry(width: int | None, height: int | None, format: PlaneFormat) -> tuple[int, int]:
    if width is None or height is None:
        raise ConfigError(f"--width and --height are required for {format.value} input")
    return width, height


ReportOption = Annotated[Optional[Path], typer.Option("--report", help="Write a JSON report to this file")]
FormatOption = Annotated[
    Optional[PlaneFormat], typer.Option("--format", help="Input format (default: from the file suffix)")
]
WidthOption = Annotated[Optional[int], typer.Option("--width", help="Frame width for raw/yuv420 input")]
HeightOption = Annotated[Optional[int], typer.Option("--height", help="Frame height for raw/yuv420 input")]


@app.callback()
def configure(
    ctx: typer.Context,
    log_level: Annotated[
        Optional[str], typer.Option("--log-level", help="Logging level (overrides settings)")
    ] = None,
    settings_file: Annotated[
        Optional[Path], typer.Option("--settings", help="Path to a TOML settings file")
    ] = None,
) -> None:
    """Load settings and configure logging for every subcommand."""
    env_file = Path.cwd() / ".env"
    if env_file.exists():
        load_dotenv(env_file)

    if settings_file is not None and not settings_file.exists():
        typer.echo(f"Error: settings file not found: {settings_file}", err=True)
        typer.echo("You can copy from configs/example_config.toml as a template", err=True)
        raise typer.Exit(EXIT_USAGE)

    overrides: dict[str, Any] = {}
    if settings_file is not None:
        overrides["_toml_file"] = settings_file
    if log_level is not None:
        overrides["log_level"] = log_level
    try:
        settings = CnnpostSettings(**overrides)
    except ValidationError as e:
        typer.echo(f"Error loading configuration: {e}", err=True)
        raise typer.Exit(EXIT_USAGE)

    setup_logging(settings.log_level)
    logger.debug(f"Settings: {settings.to_dict()}")
    ctx.obj = settings


@app.command("train")
def cmd_train(
    ctx: typer.Context,
    qp: Annotated[int, typer.Option("--qp", help="Quantization parameter the network is trained for")],
    images: Annotated[Path, typer.Option("--images", help="Directory of original PGM images")],
    model: Annotated[str, typer.Option("--model", help=f"Network: {', '.join(MODELS)}")] = "vrcnn",
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Model file to write (default: <model_dir>/<model>_qp<qp>.cnn)")
    ] = None,
    config: Annotated[
        Optional[str], typer.Option("--config", help="Preset name (qp22, qp27, qp32, qp37, smoke) or a JSON/TOML override file")
    ] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Seed for initialization and shuffling")] = None,
    init_from: Annotated[
        Optional[Path], typer.Option("--init-from", help="Start from this model file (fine-tuning)")
    ] = None,
    training_log: Annotated[
        Optional[Path], typer.Option("--log", help="JSON training log (default: next to the model file)")
    ] = None,
    report: ReportOption = None,
) -> None:
    """Build a proxy-degraded corpus and train one per-QP network."""
    settings = _settings(ctx)
    with _reported_errors():
        quality = QualityLevel(qp)
        spec = build_model(model)
        cfg = load_train_config(config, qp)
        updates: dict[str, Any] = {}
        if seed is not None:
            updates["seed"] = seed
        if init_from is not None:
            updates["init_from"] = init_from
        if updates:
            cfg = TrainConfig.model_validate({**cfg.model_dump(), **updates})

        if qp in FINE_TUNE_SOURCE and cfg.init_from is None:
            source_qp = FINE_TUNE_SOURCE[qp]
            candidate = settings.model_dir / f"{spec.name}_qp{source_qp}.cnn"
            if not candidate.exists():
                raise FineTuneRequiredError(qp, source_qp, str(candidate))
            cfg = TrainConfig.model_validate({**cfg.model_dump(), "init_from": candidate})

        out = out or settings.model_dir / f"{spec.name}_qp{qp}.cnn"
        training_log = training_log or out.with_suffix(".json")

        corpus = build_corpus(images, quality, seed=cfg.seed, threads=settings.threads)
        epochs: list[dict[str, float]] = []

        def on_epoch(epoch: int, lr: float, loss: float) -> None:
            epochs.append({"epoch": epoch + 1, "lr": lr, "loss": loss})

        start = time.perf_counter()
        params, history = train(corpus, spec, cfg, dtype=settings.dtype, on_epoch=on_epoch)
        elapsed = time.perf_counter() - start
        written = save_model(params, spec, out)

        log = {
            "model": spec.name,
            "qp": qp,
            "numeric_mode": settings.numeric_mode,
            "config": cfg.model_dump(mode="json"),
            "corpus": corpus.manifest.model_dump(mode="json"),
            "epochs": epochs,
            "iterations": len(history),
            "final_loss": epochs[-1]["loss"],
            "wall_clock_seconds": elapsed,
            "model_file": str(out),
            "model_bytes": written,
        }
        training_log.parent.mkdir(parents=True, exist_ok=True)
        training_log.write_text(json.dumps(log, indent=2, sort_keys=True) + "\n")

    typer.echo(f"Trained {spec.name} at QP {qp} on {len(corpus)} samples in {elapsed:.1f} s")
    typer.echo(f"Final loss: {epochs[-1]['loss']:.6f}")
    typer.echo(f"Model file: {out} ({written} bytes)")
    typer.echo(f"Training log: {training_log}")
    _write_report(settings, "train", log, report)


@app.command("apply")
def cmd_apply(
    ctx: typer.Context,
    model_file: Annotated[Path, typer.Option("--model-file", help="Trained model file")],
    input: Annotated[Path, typer.Option("--input", help="Decoded PGM, raw plane or YUV 4:2:0 file")],
    output: Annotated[Path, typer.Option("--output", help="Filtered output, same format as the input")],
    format: FormatOption = None,
    width: WidthOption = None,
    height: HeightOption = None,
    plane: Annotated[PlaneChoice, typer.Option("--plane", help="Planes to filter in YUV input")] = PlaneChoice.y,
    frame: Annotated[Optional[int], typer.Option("--frame", help="Only this YUV frame (default: all)")] = None,
    report: ReportOption = None,
) -> None:
    """Filter decoded pixels with a trained network. No side information is read."""
    settings = _settings(ctx)
    with _reported_errors():
        params, spec = _load_params(model_file, settings)
        fmt = _resolve_format(input, format)
        frames: list[int] = []
        if fmt is PlaneFormat.YUV420:
            width, height = _require_geometry(width, height, fmt)
            frames = _frame_indices(input, width, height, frame)
            written = 0
            for n, index in enumerate(frames):
                planes = list(load_yuv420_frame(input, width, height, index))
                for i in plane.indices:
                    planes[i] = filter_plane(spec, params, planes[i], settings.threads)
                written += write_yuv420_frame((planes[0], planes[1], planes[2]), output, append=n > 0)
        else:
            source = load_plane(input, fmt, width, height)
            width, height = source.width, source.height
            written = _save_plane(filter_plane(spec, params, source, settings.threads), output, fmt)

    typer.echo(f"Filtered {input} with {spec.name} -> {output} ({written} bytes)")
    _write_report(settings, "apply", {
        "model": spec.name,
        "model_file": str(model_file),
        "input": str(input),
        "output": str(output),
        "format": fmt.value,
        "width": width,
        "height": height,
        "planes": [PLANE_NAMES[i] for i in plane.indices] if fmt is PlaneFormat.YUV420 else ["Y"],
        "frames": frames,
        "bytes_written": written,
    }, report)


@app.command("degrade")
def cmd_degrade(
    ctx: typer.Context,
    input: Annotated[Path, typer.Option("--input", help="Original PGM, raw plane or YUV 4:2:0 file")],
    output: Annotated[Path, typer.Option("--output", help="Degraded output, same format as the input")],
    qp: Annotated[int, typer.Option("--qp", help="Quantization parameter of the codec proxy")],
    format: FormatOption = None,
    width: WidthOption = None,
    height: HeightOption = None,
    report: ReportOption = None,
) -> None:
    """Run pixels through the block-transform codec proxy."""
    settings = _settings(ctx)
    with _reported_errors():
        quality = QualityLevel(qp)
        fmt = _resolve_format(input, format)
        measures: list[dict[str, Any]] = []
        if fmt is PlaneFormat.YUV420:
            width, height = _require_geometry(width, height, fmt)
            for n, index in enumerate(_frame_indices(input, width, height, None)):
                originals = load_yuv420_frame(input, width, height, index)
                degraded = tuple(degrade(p, quality) for p in originals)
                write_yuv420_frame((degraded[0], degraded[1], degraded[2]), output, append=n > 0)
                for name, a, b in zip(PLANE_NAMES, originals, degraded):
                    measures.append({"frame": index, "plane": name, "psnr": psnr(b, a)})
        else:
            original = load_plane(input, fmt, width, height)
            degraded_plane = degrade(original, quality)
            _save_plane(degraded_plane, output, fmt)
            measures.append({"frame": 0, "plane": "Y", "psnr": psnr(degraded_plane, original)})

    for m in measures:
        typer.echo(f"frame {m['frame']} {m['plane']}: PSNR {m['psnr']:.4f} dB")
    typer.echo(f"Degraded {input} at QP {qp} -> {output}")
    _write_report(settings, "degrade", {
        "input": str(input), "output": str(output), "qp": qp, "format": fmt.value, "planes": measures,
    }, report)


def _pgm_dir_pairs(degraded: Path, original: Path) -> tuple[list[tuple[Plane, Plane]], list[str]]:
    pairs = []
    labels = []
    for path in list_images(degraded):
        reference = original / path.name
        if not reference.exists():
            raise ConfigError(f"No original for {path.name} in {original}")
        pairs.append((load_plane(path), load_plane(reference)))
        labels.append(path.name)
    return pairs, labels


@app.command("eval")
def cmd_eval(
    ctx: typer.Context,
    model_file: Annotated[
        list[Path], typer.Option("--model-file", help="Trained model file (repeat to compare models)")
    ],
    degraded: Annotated[Path, typer.Option("--degraded", help="Decoded file, or a directory of PGMs")],
    original: Annotated[Path, typer.Option("--original", help="Original file, or a directory of PGMs")],
    format: FormatOption = None,
    width: WidthOption = None,
    height: HeightOption = None,
    plane: Annotated[PlaneChoice, typer.Option("--plane", help="Planes to evaluate in YUV input")] = PlaneChoice.y,
    csv: Annotated[Optional[Path], typer.Option("--csv", help="Write per-pair results as CSV")] = None,
    report: ReportOption = None,
) -> None:
    """PSNR of decoded pixels before and after filtering, for one or more models."""
    settings = _settings(ctx)
    with _reported_errors():
        tags: list[str] | None = None
        if degraded.is_dir():
            pairs, labels = _pgm_dir_pairs(degraded, original)
        else:
            fmt = _resolve_format(degraded, format)
            if fmt is PlaneFormat.YUV420:
                width, height = _require_geometry(width, height, fmt)
                pairs, labels, tags = [], [], []
                for index in _frame_indices(degraded, width, height, None):
                    dec = load_yuv420_frame(degraded, width, height, index)
                    ref = load_yuv420_frame(original, width, height, index)
                    for i in plane.indices:
                        pairs.append((dec[i], ref[i]))
                        labels.append(f"frame{index}")
                        tags.append(PLANE_NAMES[i])
            else:
                pairs = [(load_plane(degraded, fmt, width, height), load_plane(original, fmt, width, height))]
                labels = [degraded.name]
        results: list[EvalReport] = []
        for path in model_file:
            params, spec = _load_params(path, settings)
            results.append(evaluate_filter(params, spec, pairs, labels, tags, threads=settings.threads))
        if csv is not None:
            if len(results) == 1:
                results[0].to_csv(csv)
            else:
                combined_frame(results, [str(p) for p in model_file]).to_csv(csv, index=False, float_format="%.4f")

    if len(results) == 1:
        typer.echo(results[0].format_table())
        _write_report(settings, "eval", results[0].to_dict(), report)
        return
    for n, (path, result) in enumerate(zip(model_file, results)):
        if n:
            typer.echo("")
        typer.echo(f"Model: {result.model} ({path})")
        typer.echo(result.format_table())
    _write_report(settings, "eval", {
        "models": [{**r.to_dict(), "model_file": str(p)} for p, r in zip(model_file, results)],
    }, report)


@app.command("bdrate")
def cmd_bdrate(
    ctx: typer.Context,
    anchor: Annotated[Path, typer.Option("--anchor", help="Anchor RD points (CSV: qp,bitrate,psnr)")],
    test: Annotated[Path, typer.Option("--test", help="Test RD points (CSV: qp,bitrate,psnr)")],
    piecewise: Annotated[
        bool, typer.Option("--piecewise", help="Piecewise-cubic fit; accepts any number of points")
    ] = False,
    csv: Annotated[Optional[Path], typer.Option("--csv", help="Write the BD-rate table as CSV")] = None,
    report: ReportOption = None,
) -> None:
    """Bjontegaard delta rate (and PSNR) of a test curve against an anchor."""
    settings = _settings(ctx)
    with _reported_errors():
        anchor_table = load_rd_table(anchor)
        test_table = load_rd_table(test)
        keys = ["class", "sequence", "plane"]
        grouped = max(anchor_table.groupby(keys).ngroups, test_table.groupby(keys).ngroups) > 1
        if grouped:
            table = bd_rate_table(anchor_table, test_table, piecewise=piecewise)
            if csv is not None:
                table.to_csv(csv, index=False, float_format="%.4f")
            data: dict[str, Any] = {"piecewise": piecewise, "table": table.to_dict(orient="records")}
        else:
            anchor_curve = RdCurve.from_frame(anchor_table, anchor.stem)
            test_curve = RdCurve.from_frame(test_table, test.stem)
            rate = bd_rate(anchor_curve, test_curve, piecewise=piecewise)
            delta = bd_psnr(anchor_curve, test_curve, piecewise=piecewise)
            data = {"piecewise": piecewise, "bd_rate": rate, "bd_psnr": delta}

    if grouped:
        typer.echo(format_bd_table(table))
    else:
        typer.echo(f"BD-rate: {rate:.1f}%")
        typer.echo(f"BD-PSNR: {delta:+.4f} dB")
    _write_report(settings, "bdrate", data, report)


@app.command("params")
def cmd_params(
    ctx: typer.Context,
    model: Annotated[str, typer.Option("--model", help=f"Network: {', '.join(MODELS)}")] = "vrcnn",
    report: ReportOption = None,
) -> None:
    """Per-module parameter breakdown of a network."""
    settings = _settings(ctx)
    with _reported_errors():
        spec = build_model(model)
        rows = describe(spec)
        weights, biases = param_count(spec)

    typer.echo(f"{'Layer':<7}{'Module':<8}{'Filter size':<13}{'Filters':>8}{'Parameters':>12}")
    for row in rows:
        typer.echo(f"{row.layer:<7}{row.module:<8}{row.filter_size:<13}{row.filters:>8}{row.parameters:>12}")
    size = payload_size(spec)
    typer.echo(f"Biases {biases}")
    typer.echo(f"Model size {size} bytes ({size / 1024:.1f} KiB float32)")
    typer.echo(f"Total parameters {weights}")
    _write_report(settings, "params", {
        "model": spec.name,
        "modules": [asdict(row) for row in rows],
        "weights": weights,
        "biases": biases,
        "payload_bytes": size,
    }, report)


@app.command("bench")
def cmd_bench(
    ctx: typer.Context,
    model_file: Annotated[
        list[Path], typer.Option("--model-file", help="Model file to time; repeat to compare several")
    ],
    width: Annotated[int, typer.Option("--width", help="Frame width")] = 176,
    height: Annotated[int, typer.Option("--height", help="Frame height")] = 144,
    frames: Annotated[int, typer.Option("--frames", help="Timed frames per model")] = 10,
    threads: Annotated[Optional[int], typer.Option("--threads", help="Worker threads (default: settings)")] = None,
    report: ReportOption = None,
) -> None:
    """Mean per-frame filtering time, with multiply-accumulate counts."""
    settings = _settings(ctx)
    with _reported_errors():
        results = []
        for path in model_file:
            params, spec = _load_params(path, settings)
            results.append(benchmark(params, spec, width, height, frames, threads or settings.threads))
        speeds = relative_speed(results)

    typer.echo(f"{'Model':<14}{'s/frame':>10}{'MACs/frame':>16}{'Relative speed':>16}")
    for result, speed in zip(results, speeds):
        typer.echo(f"{result.model:<14}{result.seconds_per_frame:>10.4f}{result.macs_per_frame:>16}{speed:>16.2f}")
    _write_report(settings, "bench", {
        "results": [{**r.to_dict(), "relative_speed": s} for r, s in zip(results, speeds)],
        "reference": results[0].model,
    }, report)


@app.command("synth")
def cmd_synth(
    ctx: typer.Context,
    out: Annotated[Path, typer.Option("--out", help="Directory to write PGM images into")],
    count: Annotated[int, typer.Option("--count", help="Number of images")] = 4,
    width: Annotated[int, typer.Option("--width", help="Image width")] = 176,
    height: Annotated[int, typer.Option("--height", help="Image height")] = 144,
    seed: Annotated[int, typer.Option("--seed", help="Seed of the first image")] = 0,
    report: ReportOption = None,
) -> None:
    """Write synthetic training images (a stand-in for a natural-image set)."""
    settings = _settings(ctx)
    with _reported_errors():
        if count < 1 or width < 1 or height < 1:
            raise ConfigError("--count, --width and --height must be positive")
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for i in range(count):
            path = out / f"synth_{i:03d}.pgm"
            save_pgm(synthetic_image(height, width, seed + i), path)
            files.append(str(path))

    typer.echo(f"Wrote {count} {width}x{height} images to {out}")
    _write_report(settings, "synth", {"files": files, "width": width, "height": height, "seed": seed}, report)


def main() -> None:
    """Entry point for the cnnpost CLI."""
    try:
        code = app(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click.Abort:
        typer.echo("Aborted!", err=True)
        sys.exit(EXIT_USAGE)
    sys.exit(code or 0)


if __name__ == "__main__":
    main()
