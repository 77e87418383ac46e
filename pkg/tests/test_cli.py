import csv
import json

import numpy as np
import pytest

from mot3d.calibration import ClassNoise, NoiseModel, save_noise_model
from mot3d.cli import build_parser, main
from mot3d.core import Detection, Observation
from mot3d.dataset_io import write_detections

SUBCOMMANDS = ("calibrate", "track", "evaluate", "simulate", "ablate", "plot")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full simulate -> calibrate -> track run shared by the module."""
    root = tmp_path_factory.mktemp("cli-pipeline")
    paths = {
        "cal_gt": str(root / "cal_gt.json"),
        "cal_det": str(root / "cal_det.json"),
        "gt": str(root / "gt.json"),
        "det": str(root / "det.json"),
        "noise": str(root / "noise.json"),
        "tracks": str(root / "tracks.json"),
    }
    assert main(["simulate", "--preset", "standard-calibration",
                 "--out-ground-truth", paths["cal_gt"],
                 "--out-detections", paths["cal_det"]]) == 0
    assert main(["calibrate", "--ground-truth", paths["cal_gt"],
                 "--detections", paths["cal_det"],
                 "--out", paths["noise"]]) == 0
    assert main(["simulate", "--preset", "standard",
                 "--out-ground-truth", paths["gt"],
                 "--out-detections", paths["det"]]) == 0
    assert main(["track", "--detections", paths["det"],
                 "--noise-model", paths["noise"],
                 "--out", paths["tracks"]]) == 0
    return paths


def test_help_and_version_exit_zero(capsys):
    for argv in (["--help"], ["--version"],
                 *[[name, "--help"] for name in SUBCOMMANDS]):
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        assert excinfo.value.code == 0, argv
    capsys.readouterr()


def test_no_subcommand_prints_help(capsys):
    assert main([]) == 1
    assert "simulate" in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    for argv in (["track"],                      # missing required args
                 ["bogus"],                      # unknown subcommand
                 ["simulate", "--preset", "nope",
                  "--out-detections", "d", "--out-ground-truth", "g"],
                 ["track", "--detections", "d", "--out", "o",
                  "--matcher", "brute"]):
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        assert excinfo.value.code == 1, argv
    capsys.readouterr()


def test_pipeline_files_exist(pipeline):
    for key in ("cal_gt", "cal_det", "gt", "det", "noise", "tracks"):
        with open(pipeline[key]) as handle:
            data = json.load(handle)
        assert isinstance(data, dict) and data
    with open(pipeline["tracks"]) as handle:
        meta = json.load(handle)["_meta"]
    assert meta["tool"] == "mot3d-track"
    assert meta["configuration"]["matcher"] == "greedy"


def test_track_reports_lifecycle(pipeline, tmp_path, capsys):
    out = tmp_path / "again.json"
    assert main(["track", "--detections", pipeline["det"],
                 "--noise-model", pipeline["noise"],
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "tracked 3 scenes" in printed
    assert "tracks born" in printed


def test_track_output_is_reproducible(pipeline, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        assert main(["track", "--detections", pipeline["det"],
                     "--noise-model", pipeline["noise"],
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_parallel_jobs_match_serial(pipeline, tmp_path):
    serial = tmp_path / "serial.json"
    parallel = tmp_path / "parallel.json"
    assert main(["track", "--detections", pipeline["det"],
                 "--noise-model", pipeline["noise"],
                 "--jobs", "1", "--out", str(serial)]) == 0
    assert main(["track", "--detections", pipeline["det"],
                 "--noise-model", pipeline["noise"],
                 "--jobs", "2", "--out", str(parallel)]) == 0
    assert serial.read_bytes() == parallel.read_bytes()


def test_negative_jobs_rejected(pipeline, tmp_path, capsys):
    assert main(["track", "--detections", pipeline["det"],
                 "--noise-model", pipeline["noise"],
                 "--jobs", "-1", "--out", str(tmp_path / "t.json")]) == 1
    assert "--jobs" in capsys.readouterr().err


def test_noise_source_is_exclusive_and_required(pipeline, tmp_path, capsys):
    out = str(tmp_path / "t.json")
    assert main(["track", "--detections", pipeline["det"],
                 "--noise-model", pipeline["noise"],
                 "--default-covariance", "--out", out]) == 1
    assert "not both" in capsys.readouterr().err
    assert main(["track", "--detections", pipeline["det"], "--out", out]) == 1
    assert "noise model is required" in capsys.readouterr().err


def test_degenerate_noise_exits_two(tmp_path, capsys):
    zeros = NoiseModel({"car": ClassNoise(np.zeros(11), np.zeros(7), np.zeros(11))})
    noise_path = tmp_path / "zeros.json"
    save_noise_model(zeros, str(noise_path))
    detections = {"s": {f: [Detection(Observation(0, 0, 0, 0, 4, 2, 1.5),
                                      "car", 0.9, f, "s")] for f in (0, 1)}}
    det_path = tmp_path / "det.json"
    write_detections(detections, str(det_path))
    code = main(["track", "--detections", str(det_path),
                 "--noise-model", str(noise_path),
                 "--out", str(tmp_path / "t.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert "numerical error" in err
    assert "condition" in err


def test_evaluate_reports_per_class(pipeline, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(["evaluate", "--tracks", pipeline["tracks"],
                 "--ground-truth", pipeline["gt"],
                 "--out", str(report_path)]) == 0
    printed = capsys.readouterr().out
    assert "overall" in printed
    for label in ("bus", "car", "pedestrian"):
        assert label in printed
    data = json.loads(report_path.read_text())
    assert 0.0 <= data["overall_amota"] <= 1.0
    assert data["_meta"]["n_samples"] == 40


def test_evaluate_rejects_bad_sample_count(pipeline, capsys):
    assert main(["evaluate", "--tracks", pipeline["tracks"],
                 "--ground-truth", pipeline["gt"], "--n-samples", "1"]) == 1
    assert "at least 2" in capsys.readouterr().err


def test_simulate_requires_exactly_one_source(tmp_path, capsys):
    base = ["simulate", "--out-detections", str(tmp_path / "d.json"),
            "--out-ground-truth", str(tmp_path / "g.json")]
    assert main(base) == 1
    assert "exactly one" in capsys.readouterr().err
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "scene_id": "tiny", "frame_count": 3,
        "objects": [{"class_label": "car", "x": 0.0, "y": 0.0, "vx": 1.0}],
    }))
    assert main(base + ["--spec", str(spec_path), "--preset", "noiseless"]) == 1
    assert "exactly one" in capsys.readouterr().err
    assert main(base + ["--spec", str(spec_path)]) == 0


def test_simulate_seed_override(tmp_path):
    def run(seed, tag):
        det = tmp_path / f"d{tag}.json"
        gt = tmp_path / f"g{tag}.json"
        args = ["simulate", "--preset", "standard",
                "--out-detections", str(det), "--out-ground-truth", str(gt)]
        if seed is not None:
            args += ["--seed", str(seed)]
        assert main(args) == 0
        return det.read_bytes()

    default = run(None, "a")
    explicit = run(11, "b")  # the preset's own seed
    other = run(99, "c")
    assert default == explicit
    assert other != default


def test_ablate_writes_grid_csv(tmp_path, capsys):
    det = tmp_path / "det.json"
    gt = tmp_path / "gt.json"
    assert main(["simulate", "--preset", "noiseless",
                 "--out-detections", str(det),
                 "--out-ground-truth", str(gt)]) == 0
    out = tmp_path / "grid.csv"
    assert main(["ablate", "--detections", str(det), "--ground-truth", str(gt),
                 "--affinities", "mahalanobis,iou@0.25",
                 "--matchers", "greedy",
                 "--noise", "default",
                 "--n-samples", "5",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "maha+greedy+default" in printed
    with open(out, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:2] == ["configuration", "overall"]
    names = [row[0] for row in rows[1:]]
    assert names == ["maha+greedy+default", "iou@0.25+greedy+default"]
    for row in rows[1:]:
        assert 0.0 <= float(row[1]) <= 1.0


def test_ablate_rejects_bad_tokens(tmp_path, capsys):
    det = tmp_path / "det.json"
    gt = tmp_path / "gt.json"
    assert main(["simulate", "--preset", "turning",
                 "--out-detections", str(det),
                 "--out-ground-truth", str(gt)]) == 0
    base = ["ablate", "--detections", str(det), "--ground-truth", str(gt),
            "--out", str(tmp_path / "o.csv"), "--noise", "default"]
    assert main(base + ["--affinities", "overlap"]) == 1
    assert main(base + ["--matchers", "brute"]) == 1
    assert main(base + ["--angular", "sometimes"]) == 1
    capsys.readouterr()


def test_plot_directory_and_single_file(pipeline, tmp_path, capsys):
    out_dir = tmp_path / "plots"
    assert main(["plot", "--tracks", pipeline["tracks"],
                 "--ground-truth", pipeline["gt"],
                 "--out", str(out_dir)]) == 0
    rendered = sorted(p.name for p in out_dir.iterdir())
    assert len(rendered) == 3
    assert all(name.endswith(".svg") for name in rendered)
    # multiple scenes cannot land in one file
    assert main(["plot", "--tracks", pipeline["tracks"],
                 "--out", str(tmp_path / "one.svg")]) == 1
    assert "scenes" in capsys.readouterr().err
    # a scene filter makes the single file legal
    scene = rendered[0][:-len(".svg")]
    single = tmp_path / "single.svg"
    assert main(["plot", "--tracks", pipeline["tracks"], "--scene", scene,
                 "--out", str(single)]) == 0
    assert single.read_text().startswith("<svg")
    assert main(["plot", "--tracks", pipeline["tracks"], "--scene", "ghost",
                 "--out", str(tmp_path / "g.svg")]) == 1
    assert "ghost" in capsys.readouterr().err


def test_parser_prog_name():
    parser = build_parser()
    assert parser.prog == "mot3d"
