import json
import subprocess
import sys

import numpy as np
import pytest

from cellws import BinaryVolume, ScalarVolume, read_volume, write_volume
from cellws.cli import main


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    rc = main([
        "phantom", "--dims", "24", "24", "24", "--cells", "4", "--seed", "7",
        "--out-dir", str(out),
    ])
    assert rc == 0
    return out


def _run(capsys, argv):
    rc = main(argv)
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if captured.out.strip() else None
    return rc, payload


def test_phantom_command_writes_volumes_and_sidecar(phantom_dir, capsys):
    rc, payload = _run(capsys, [
        "phantom", "--dims", "20", "20", "20", "--cells", "3", "--seed", "5",
        "--noise-sigma", "0.05", "--out-dir", str(phantom_dir / "noisy"),
    ])
    assert rc == 0
    assert payload["n_cells"] == 3
    for name in ("gt", "centroid", "membrane", "background"):
        path = phantom_dir / "noisy" / f"{name}.nrrd"
        assert str(path) == payload["files"][name]
        read_volume(str(path))
    sidecar = json.loads((phantom_dir / "noisy" / "phantom.json").read_text())
    assert sidecar["rng_seed"] == 5
    assert len(sidecar["seeds"]) == 3


def test_segment_sws_command(phantom_dir, capsys, tmp_path):
    out = tmp_path / "sws.nrrd"
    rc, payload = _run(capsys, [
        "segment", "--method", "sws",
        "--centroid", str(phantom_dir / "centroid.nrrd"),
        "--membrane", str(phantom_dir / "membrane.nrrd"),
        "--background", str(phantom_dir / "background.nrrd"),
        "--output", str(out),
    ])
    assert rc == 0
    assert payload["method"] == "sws"
    (result,) = payload["results"]
    assert result["output"] == str(out)
    assert result["instances"] == 4
    assert result["labeled_voxels"] > 0
    assert "wall_time_s" in result
    labels = read_volume(str(out))
    assert labels.instance_count() == 4


@pytest.mark.parametrize("method", ["ws", "sv"])
def test_segment_boundary_only_methods(phantom_dir, capsys, tmp_path, method):
    out = tmp_path / f"{method}.nrrd"
    rc, payload = _run(capsys, [
        "segment", "--method", method,
        "--membrane", str(phantom_dir / "membrane.nrrd"),
        "--background", str(phantom_dir / "background.nrrd"),
        "--output", str(out),
    ])
    assert rc == 0
    assert payload["results"][0]["instances"] == 4


def test_segment_batch_thread_count_does_not_change_outputs(phantom_dir, capsys, tmp_path):
    def batch(threads, tag):
        outs = [tmp_path / f"{tag}{i}.nrrd" for i in range(2)]
        argv = ["--threads", str(threads), "segment", "--method", "ws"]
        for o in outs:
            argv += [
                "--membrane", str(phantom_dir / "membrane.nrrd"),
                "--background", str(phantom_dir / "background.nrrd"),
                "--output", str(o),
            ]
        rc, payload = _run(capsys, argv)
        assert rc == 0
        return outs, payload

    outs1, p1 = batch(1, "a")
    outs4, p4 = batch(4, "b")
    for o1, o4 in zip(outs1, outs4):
        assert o1.read_bytes() == o4.read_bytes()
    for r1, r4 in zip(p1["results"], p4["results"]):
        assert r1["instances"] == r4["instances"]
        assert r1["labeled_voxels"] == r4["labeled_voxels"]


def test_evaluate_command_self_comparison(phantom_dir, capsys, tmp_path):
    report_json = tmp_path / "report.json"
    report_csv = tmp_path / "layers.csv"
    rc, payload = _run(capsys, [
        "evaluate",
        "--gt", str(phantom_dir / "gt.nrrd"),
        "--pred", str(phantom_dir / "gt.nrrd"),
        "--report-json", str(report_json),
        "--report-csv", str(report_csv),
    ])
    assert rc == 0
    assert payload["aji"] == 1.0
    assert payload["adsc"] == 1.0
    assert payload["boundary_f1"] == 1.0
    assert all(row["aji"] == 1.0 for row in payload["per_layer"])
    assert json.loads(report_json.read_text()) == payload
    lines = report_csv.read_text().strip().splitlines()
    assert lines[0] == "z,aji,bf1"
    assert len(lines) == 1 + len(payload["per_layer"])


def test_evaluate_with_centroid_labels(phantom_dir, capsys, tmp_path):
    centroid = read_volume(str(phantom_dir / "centroid.nrrd"))
    mask = BinaryVolume(centroid.dims, centroid.data >= 0.8)
    mask_path = tmp_path / "detected.nrrd"
    write_volume(mask, str(mask_path))
    rc, payload = _run(capsys, [
        "evaluate",
        "--gt", str(phantom_dir / "gt.nrrd"),
        "--pred", str(phantom_dir / "gt.nrrd"),
        "--centroid-labels", str(mask_path),
    ])
    assert rc == 0
    det = payload["centroid_detection"]
    assert det["true_positive"] == 4
    assert det["jaccard"] == 1.0


def test_evaluate_thread_flag_is_cosmetic(phantom_dir, capsys):
    argv = [
        "evaluate",
        "--gt", str(phantom_dir / "gt.nrrd"),
        "--pred", str(phantom_dir / "gt.nrrd"),
    ]
    _, p1 = _run(capsys, ["--threads", "1"] + argv)
    _, p8 = _run(capsys, ["--threads", "8"] + argv)
    assert p1 == p8


def test_loss_command(phantom_dir, capsys, tmp_path):
    rng = np.random.default_rng(81)
    paths = []
    for i in range(2):
        yt = (rng.random((5, 5, 5)) < 0.4).astype(np.float32)
        yt[0, 0, 0] = 1.0
        yt[0, 0, 1] = 0.0
        yp = rng.random((5, 5, 5)).astype(np.float32)
        tp, pp = tmp_path / f"t{i}.nrrd", tmp_path / f"p{i}.nrrd"
        write_volume(ScalarVolume.from_array(yt), str(tp))
        write_volume(ScalarVolume.from_array(yp), str(pp))
        paths.append((tp, pp))
    argv = ["loss"]
    for tp, pp in paths:
        argv += ["--true-mask", str(tp), "--pred-map", str(pp)]
    rc, payload = _run(capsys, argv)
    assert rc == 0
    assert len(payload["classes"]) == 2
    assert payload["mean"] == pytest.approx(sum(payload["classes"]) / 2)


def test_runtime_failures_exit_1(phantom_dir, capsys, tmp_path):
    rc, _ = _run(capsys, [
        "evaluate", "--gt", str(tmp_path / "missing.nrrd"),
        "--pred", str(phantom_dir / "gt.nrrd"),
    ])
    assert rc == 1

    # label volume where a probability map is required
    rc, _ = _run(capsys, [
        "segment", "--method", "ws",
        "--membrane", str(phantom_dir / "gt.nrrd"),
        "--background", str(phantom_dir / "background.nrrd"),
        "--output", str(tmp_path / "out.nrrd"),
    ])
    assert rc == 1

    # degenerate all-ones target class
    ones = tmp_path / "ones.nrrd"
    write_volume(ScalarVolume.from_array(np.ones((3, 3, 3), dtype=np.float32)), str(ones))
    rc, _ = _run(capsys, ["loss", "--true-mask", str(ones), "--pred-map", str(ones)])
    assert rc == 1

    # dropout pair that names a missing cell
    rc, _ = _run(capsys, [
        "phantom", "--dims", "16", "16", "16", "--cells", "2", "--seed", "3",
        "--dropout", "1,9", "--out-dir", str(tmp_path / "ph"),
    ])
    assert rc == 1


def test_usage_errors_exit_2(phantom_dir, tmp_path, capsys):
    cases = [
        # sws without a centroid map
        ["segment", "--method", "sws",
         "--membrane", str(phantom_dir / "membrane.nrrd"),
         "--background", str(phantom_dir / "background.nrrd"),
         "--output", str(tmp_path / "o.nrrd")],
        # centroid passed to a method that ignores it
        ["segment", "--method", "ws",
         "--centroid", str(phantom_dir / "centroid.nrrd"),
         "--membrane", str(phantom_dir / "membrane.nrrd"),
         "--background", str(phantom_dir / "background.nrrd"),
         "--output", str(tmp_path / "o.nrrd")],
        # batch flags out of step
        ["segment", "--method", "ws",
         "--membrane", str(phantom_dir / "membrane.nrrd"),
         "--membrane", str(phantom_dir / "membrane.nrrd"),
         "--background", str(phantom_dir / "background.nrrd"),
         "--output", str(tmp_path / "o.nrrd")],
        # malformed dropout pair
        ["phantom", "--dims", "16", "16", "16", "--cells", "2", "--seed", "3",
         "--dropout", "1-2", "--out-dir", str(tmp_path / "ph2")],
        # loss pairs out of step
        ["loss", "--true-mask", str(phantom_dir / "membrane.nrrd")],
        ["bogus-command"],
    ]
    for argv in cases:
        with pytest.raises(SystemExit) as exc_info:
            main(argv)
        assert exc_info.value.code == 2
        capsys.readouterr()


def test_module_entrypoint_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "cellws.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "segment" in proc.stdout and "phantom" in proc.stdout
