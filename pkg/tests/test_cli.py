"""
Tests for the command-line interface.
"""

import json
import sys
from pathlib import Path

import pytest
from typer.testing import CliRunner

from cnnpost.cli import app, main
from cnnpost.data.corpus import synthetic_image
from cnnpost.data.io import load_plane, save_pgm, write_yuv420_frame
from cnnpost.model_io import save_model
from cnnpost.nn.graph import init_params
from cnnpost.zoo import build_vrcnn

runner = CliRunner()

ANCHOR_CSV = "qp,bitrate,psnr\n22,9100,38.8\n27,4500,36.4\n32,2300,33.9\n37,1200,31.2\n"


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run every command in an empty directory, logging only warnings, with no other CNNPOST_* overrides."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("CNNPOST_LOG_LEVEL", "WARNING")
    for name in ("CNNPOST_NUMERIC_MODE", "CNNPOST_THREADS", "CNNPOST_MODEL_DIR",
                 "CNNPOST_REPORT_DIR"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def passthrough_model(tmp_path):
    """VRCNN with every weight and bias zero: output equals input."""
    spec = build_vrcnn()
    path = tmp_path / "zero.cnn"
    save_model(init_params(spec, 0).zeros_like(), spec, path)
    return path


def test_params_vrcnn():
    result = runner.invoke(app, ["params"])
    assert result.exit_code == 0, result.output
    lines = result.output.strip().splitlines()
    assert lines[0].split() == ["Layer", "Module", "Filter", "size", "Filters", "Parameters"]
    assert lines[1].split() == ["1", "conv1", "5x5", "64", "1600"]
    assert "Biases 161" in result.output
    assert lines[-1] == "Total parameters 54512"


def test_params_arcnn_report(tmp_path):
    report = tmp_path / "params.json"
    result = runner.invoke(app, ["params", "--model", "arcnn", "--report", str(report)])
    assert result.exit_code == 0, result.output
    assert result.output.strip().splitlines()[-1] == "Total parameters 106448"
    data = json.loads(report.read_text())
    assert (data["weights"], data["biases"]) == (106448, 113)


def test_unknown_model():
    result = runner.invoke(app, ["params", "--model", "resnet"])
    assert result.exit_code == 2
    assert "Unknown model" in result.output


def test_bdrate_identical_curves(tmp_path):
    (tmp_path / "a.csv").write_text(ANCHOR_CSV)
    result = runner.invoke(app, ["bdrate", "--anchor", "a.csv", "--test", "a.csv"])
    assert result.exit_code == 0, result.output
    assert "BD-rate: 0.0%" in result.output
    assert "BD-PSNR: +0.0000 dB" in result.output


def test_bdrate_saving(tmp_path):
    (tmp_path / "a.csv").write_text(ANCHOR_CSV)
    (tmp_path / "t.csv").write_text("qp,bitrate,psnr\n22,8190,38.8\n27,4050,36.4\n32,2070,33.9\n37,1080,31.2\n")
    result = runner.invoke(app, ["bdrate", "--anchor", "a.csv", "--test", "t.csv"])
    assert result.exit_code == 0, result.output
    assert "BD-rate: -10.0%" in result.output


def test_bdrate_non_monotonic_is_data_error(tmp_path):
    (tmp_path / "a.csv").write_text(ANCHOR_CSV)
    (tmp_path / "bad.csv").write_text("qp,bitrate,psnr\n22,9100,30.0\n27,4500,36.4\n32,2300,33.9\n37,1200,31.2\n")
    result = runner.invoke(app, ["bdrate", "--anchor", "a.csv", "--test", "bad.csv"])
    assert result.exit_code == 2
    assert "not strictly increasing" in result.output


def test_train_qp22_requires_qp27_model(tmp_path):
    result = runner.invoke(app, ["train", "--qp", "22", "--images", str(tmp_path)])
    assert result.exit_code == 1
    assert "QP 27" in result.output


@pytest.fixture
def short_training(tmp_path):
    """One 70x35 synthetic image and a two-epoch override file."""
    images = tmp_path / "images"
    assert runner.invoke(app, ["synth", "--out", str(images), "--count", "1", "--width", "70",
                               "--height", "35"]).exit_code == 0
    override = tmp_path / "short.json"
    override.write_text(json.dumps({"epochs": 2, "lr_stage_epochs": 1, "batch_size": 2}))
    return images, override


def test_train_writes_model_and_log(tmp_path, short_training):
    images, override = short_training
    result = runner.invoke(app, ["train", "--qp", "37", "--images", str(images), "--config", str(override),
                                 "--out", str(tmp_path / "m.cnn"), "--seed", "3"])
    assert result.exit_code == 0, result.output
    log = json.loads((tmp_path / "m.json").read_text())
    assert log["qp"] == 37
    assert log["config"]["seed"] == 3
    assert log["corpus"]["total_tiles"] == 2
    assert [e["epoch"] for e in log["epochs"]] == [1, 2]
    assert log["iterations"] == 2
    assert (tmp_path / "m.cnn").stat().st_size == log["model_bytes"]


def test_train_qp22_fine_tunes_from_discovered_qp27_model(tmp_path, short_training):
    images, override = short_training
    result = runner.invoke(app, ["train", "--qp", "27", "--images", str(images), "--config", str(override)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "models" / "vrcnn_qp27.cnn").exists()

    result = runner.invoke(app, ["train", "--qp", "22", "--images", str(images), "--config", str(override)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "models" / "vrcnn_qp22.cnn").exists()
    log = json.loads((tmp_path / "models" / "vrcnn_qp22.json").read_text())
    assert log["qp"] == 22
    assert Path(log["config"]["init_from"]) == Path("models/vrcnn_qp27.cnn")


def test_train_twice_is_byte_identical(tmp_path, short_training):
    images, override = short_training
    outputs = []
    for name in ("a", "b"):
        result = runner.invoke(app, ["train", "--qp", "37", "--images", str(images), "--config", str(override),
                                     "--out", f"{name}.cnn", "--seed", "5"])
        assert result.exit_code == 0, result.output
        log = json.loads((tmp_path / f"{name}.json").read_text())
        for volatile in ("wall_clock_seconds", "model_file"):
            log.pop(volatile)
        outputs.append(((tmp_path / f"{name}.cnn").read_bytes(), log))
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1] == outputs[1][1]


def test_degrade_then_eval_with_passthrough_model(tmp_path, passthrough_model):
    save_pgm(synthetic_image(40, 48, seed=1), tmp_path / "orig.pgm")
    result = runner.invoke(app, ["degrade", "--input", "orig.pgm", "--output", "deg.pgm", "--qp", "37"])
    assert result.exit_code == 0, result.output
    assert "frame 0 Y: PSNR" in result.output

    result = runner.invoke(app, ["eval", "--model-file", str(passthrough_model), "--degraded", "deg.pgm",
                                 "--original", "orig.pgm", "--csv", "eval.csv"])
    assert result.exit_code == 0, result.output
    assert result.output.strip().splitlines()[-1].endswith("(+0.0000 dB)")
    assert (tmp_path / "eval.csv").read_text().startswith("label,plane,psnr_before,psnr_after,delta")


def test_apply_input_directory_is_data_error(tmp_path, passthrough_model):
    (tmp_path / "x.pgm").mkdir()
    result = runner.invoke(app, ["apply", "--model-file", str(passthrough_model), "--input", "x.pgm",
                                 "--output", "out.pgm"])
    assert result.exit_code == 2
    assert "Error:" in result.output
    assert not (tmp_path / "out.pgm").exists()


def test_apply_passthrough_pgm(tmp_path, passthrough_model):
    source = synthetic_image(30, 20, seed=2)
    save_pgm(source, tmp_path / "in.pgm")
    result = runner.invoke(app, ["apply", "--model-file", str(passthrough_model), "--input", "in.pgm",
                                 "--output", "out.pgm"])
    assert result.exit_code == 0, result.output
    assert load_plane(tmp_path / "out.pgm") == source


def test_apply_yuv_all_planes(tmp_path, passthrough_model):
    frames = []
    for seed in range(2):
        frames.append((synthetic_image(16, 24, seed), synthetic_image(8, 12, seed + 10), synthetic_image(8, 12, seed + 20)))
    for n, frame in enumerate(frames):
        write_yuv420_frame(frame, tmp_path / "in.yuv", append=n > 0)
    result = runner.invoke(app, ["apply", "--model-file", str(passthrough_model), "--input", "in.yuv",
                                 "--output", "out.yuv", "--width", "24", "--height", "16", "--plane", "all"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out.yuv").read_bytes() == (tmp_path / "in.yuv").read_bytes()


def test_apply_yuv_needs_geometry(passthrough_model, tmp_path):
    (tmp_path / "in.yuv").write_bytes(bytes(576))
    result = runner.invoke(app, ["apply", "--model-file", str(passthrough_model), "--input", "in.yuv",
                                 "--output", "out.yuv"])
    assert result.exit_code == 1
    assert "--width and --height" in result.output


def test_eval_pgm_directories(tmp_path, passthrough_model):
    (tmp_path / "orig").mkdir()
    (tmp_path / "dec").mkdir()
    for i in range(2):
        plane = synthetic_image(24, 24, seed=i)
        save_pgm(plane, tmp_path / "orig" / f"img{i}.pgm")
        save_pgm(plane, tmp_path / "dec" / f"img{i}.pgm")
    result = runner.invoke(app, ["eval", "--model-file", str(passthrough_model), "--degraded", "dec",
                                 "--original", "orig", "--report", "eval.json"])
    assert result.exit_code == 0, result.output
    data = json.loads((tmp_path / "eval.json").read_text())
    assert data["pairs"] == 2
    assert [r["label"] for r in data["records"]] == ["img0.pgm", "img1.pgm"]


def test_eval_compares_several_models(tmp_path, passthrough_model):
    spec = build_vrcnn()
    save_model(init_params(spec, 4), spec, tmp_path / "random.cnn")
    save_pgm(synthetic_image(24, 24, seed=0), tmp_path / "orig.pgm")
    save_pgm(synthetic_image(24, 24, seed=1), tmp_path / "deg.pgm")
    result = runner.invoke(app, ["eval", "--model-file", str(passthrough_model), "--model-file", "random.cnn",
                                 "--degraded", "deg.pgm", "--original", "orig.pgm",
                                 "--csv", "eval.csv", "--report", "eval.json"])
    assert result.exit_code == 0, result.output
    headers = [line for line in result.output.splitlines() if line.startswith("Model: ")]
    assert headers == [f"Model: vrcnn ({passthrough_model})", "Model: vrcnn (random.cnn)"]
    assert sum(line.startswith("Mean PSNR:") for line in result.output.splitlines()) == 2

    data = json.loads((tmp_path / "eval.json").read_text())
    assert [m["model_file"] for m in data["models"]] == [str(passthrough_model), "random.cnn"]
    assert data["models"][0]["mean_delta"] == 0.0
    csv_lines = (tmp_path / "eval.csv").read_text().splitlines()
    assert csv_lines[0] == "model,model_file,label,plane,psnr_before,psnr_after,delta"
    assert len(csv_lines) == 3


def test_synth(tmp_path):
    result = runner.invoke(app, ["synth", "--out", "imgs", "--count", "3", "--width", "40", "--height", "36"])
    assert result.exit_code == 0, result.output
    files = sorted(p.name for p in (tmp_path / "imgs").iterdir())
    assert files == ["synth_000.pgm", "synth_001.pgm", "synth_002.pgm"]
    assert load_plane(tmp_path / "imgs" / "synth_001.pgm").shape == (36, 40)


def test_bench(passthrough_model):
    result = runner.invoke(app, ["bench", "--model-file", str(passthrough_model), "--model-file",
                                 str(passthrough_model), "--width", "16", "--height", "16", "--frames", "1"])
    assert result.exit_code == 0, result.output
    rows = result.output.strip().splitlines()
    assert rows[0].split()[0] == "Model"
    assert len(rows) == 3
    assert rows[1].split()[-1] == "1.00"


def test_missing_model_file_is_data_error(tmp_path):
    save_pgm(synthetic_image(8, 8), tmp_path / "in.pgm")
    result = runner.invoke(app, ["apply", "--model-file", "absent.cnn", "--input", "in.pgm", "--output", "o.pgm"])
    assert result.exit_code == 2
    assert "not found" in result.output


def test_malformed_pgm_is_data_error(tmp_path, passthrough_model):
    (tmp_path / "bad.pgm").write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    result = runner.invoke(app, ["apply", "--model-file", str(passthrough_model), "--input", "bad.pgm",
                                 "--output", "o.pgm"])
    assert result.exit_code == 2


def test_missing_settings_file():
    result = runner.invoke(app, ["--settings", "nope.toml", "params"])
    assert result.exit_code == 1
    assert "settings file not found" in result.output


def test_invalid_log_level():
    result = runner.invoke(app, ["--log-level", "CHATTY", "params"])
    assert result.exit_code == 1


def test_settings_file_sets_report_dir(tmp_path):
    (tmp_path / "run.toml").write_text('report_dir = "reports"\n')
    result = runner.invoke(app, ["--settings", "run.toml", "params", "--model", "vdsr"])
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / "reports" / "params.json").read_text())["weights"] == 664704


def test_main_maps_usage_errors_to_exit_1(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["cnnpost", "train"])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 1


def test_main_success(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["cnnpost", "params"])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 0


def test_main_reports_data_errors(monkeypatch, tmp_path):
    (tmp_path / "a.csv").write_text("qp,bitrate\n22,100\n")
    monkeypatch.setattr(sys, "argv", ["cnnpost", "bdrate", "--anchor", "a.csv", "--test", "a.csv"])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 2
