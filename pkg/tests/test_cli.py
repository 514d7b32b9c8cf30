import json

import numpy as np
import pytest
from PIL import Image

from lungscan.cli import OVERLAY_GUTTER, main
from lungscan.data import Mask
from lungscan.synthetic import make_phantom, write_dataset, write_labelled_dataset
from lungscan.volume_io import build_manifest, load_mask, save_mask, write_manifest, write_slice

DESK_INI = """\
[racnet]
t = 16
rnn_units = 32
dense_units = 32
feature_dim = 16
input_h = 64
input_w = 64
cnn_widths = 8,16

[train]
steps = 200
"""


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def phantom_set(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantoms")
    return write_dataset(root, n=2, l=3, h=48, w=64, seed=5)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    paths = write_labelled_dataset(root, n=10, t=16, seed=1, prefix="tr")
    ini = root / "desk.ini"
    ini.write_text(DESK_INI)
    rc = main(["train", "--config", str(ini), "--manifest", str(paths["manifest"]),
               "--masks-root", str(paths["masks"]), "--output-root", str(root / "run")])
    assert rc == 0
    return {**paths, "ini": ini, "run": root / "run"}


def _segment(ds, out, *extra):
    return main(["segment", "--data-root", str(ds["scans"]), "--output-root", str(out),
                 "--fake-config", str(ds["fake_config"]), "--set", "pipeline.grid_n=4", *extra])


def test_segment_writes_masks_and_status(phantom_set, tmp_path):
    assert _segment(phantom_set, tmp_path / "out") == 0
    for sid in ("scan000", "scan001"):
        status = [json.loads(x) for x in (tmp_path / "out" / sid / "status.jsonl").read_text().splitlines()]
        assert [s["status"] for s in status] == ["ok"] * 3
        for k in range(3):
            m = load_mask(tmp_path / "out" / sid / f"{k}.mask.png")
            right = load_mask(phantom_set["scans"].parent / "parts" / sid / f"{k}_right_lung.png")
            left = load_mask(phantom_set["scans"].parent / "parts" / sid / f"{k}_left_lung.png")
            assert m == right | left
    assert "grid_n = 4" in (tmp_path / "out" / "run_config.ini").read_text()


def test_segment_rerun_byte_identical(phantom_set, tmp_path):
    assert _segment(phantom_set, tmp_path / "a") == 0
    assert _segment(phantom_set, tmp_path / "b", "--workers", "3") == 0
    assert _tree(tmp_path / "a").keys() == _tree(tmp_path / "b").keys()
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    a.pop("run_config.ini"), b.pop("run_config.ini")
    assert a == b


def test_segment_missing_data_root(tmp_path, capsys):
    rc = main(["segment", "--data-root", str(tmp_path / "nope"), "--output-root", str(tmp_path / "o")])
    assert rc == 2
    assert "does not exist" in capsys.readouterr().err


def test_segment_unknown_image_is_partial_failure(phantom_set, tmp_path):
    extra = tmp_path / "scans"
    write_slice(make_phantom(48, 64).image * 0.5, extra / "odd" / "0.png")
    rc = main(["segment", "--data-root", str(extra), "--output-root", str(tmp_path / "o"),
               "--fake-config", str(phantom_set["fake_config"])])
    assert rc == 1
    assert "odd" in json.loads((tmp_path / "o" / "errors.json").read_text())


def test_bad_flag_is_usage_error():
    assert main(["segment", "--no-such-flag"]) == 2
    assert main(["train"]) == 2


def test_train_outputs(desk):
    assert (desk["run"] / "checkpoint.safetensors").is_file()
    log = [json.loads(x) for x in (desk["run"] / "train_log.jsonl").read_text().splitlines()]
    assert [r["step"] for r in log] == list(range(200))
    assert log[-1]["loss"] < log[0]["loss"]
    assert "batch_size = 5" in (desk["run"] / "run_config.ini").read_text()


def test_train_rejects_unlabeled_scan(tmp_path, capsys):
    write_slice(np.zeros((8, 8)), tmp_path / "scans" / "u1" / "0.png")
    write_manifest([build_manifest(tmp_path / "scans" / "u1")], tmp_path / "m.jsonl")
    rc = main(["train", "--manifest", str(tmp_path / "m.jsonl"), "--unsegmented",
               "--output-root", str(tmp_path / "o")])
    assert rc == 2
    assert "u1" in capsys.readouterr().err


def test_train_requires_masks_or_unsegmented(desk, tmp_path):
    rc = main(["train", "--config", str(desk["ini"]), "--manifest", str(desk["manifest"]),
               "--output-root", str(tmp_path / "o")])
    assert rc == 2


def test_evaluate_perfect_on_training_set(desk, tmp_path):
    rc = main(["evaluate", "--config", str(desk["ini"]), "--checkpoint", str(desk["run"] / "checkpoint.safetensors"),
               "--manifest", str(desk["manifest"]), "--masks-root", str(desk["masks"]),
               "--output-root", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["macro_f1"] == 100.0
    assert set(report["classes"]) == {"COVID", "NON_COVID"}
    preds = [json.loads(x) for x in (tmp_path / "predictions.jsonl").read_text().splitlines()]
    assert len(preds) == 10 and all(p["predicted"] == p["true"] for p in preds)


def test_evaluate_config_mismatch(desk, tmp_path, capsys):
    rc = main(["evaluate", "--config", str(desk["ini"]), "--set", "racnet.rnn_units=8",
               "--checkpoint", str(desk["run"] / "checkpoint.safetensors"),
               "--manifest", str(desk["manifest"]), "--masks-root", str(desk["masks"]),
               "--output-root", str(tmp_path)])
    assert rc == 2
    assert "rnn_units" in capsys.readouterr().err


def test_unsegmented_train_and_evaluate(desk, tmp_path):
    common = ["--config", str(desk["ini"]), "--manifest", str(desk["manifest"]), "--unsegmented"]
    assert main(["train", *common, "--steps", "5", "--output-root", str(tmp_path)]) == 0
    assert main(["evaluate", *common, "--checkpoint", str(tmp_path / "checkpoint.safetensors"),
                 "--output-root", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "report.json").is_file()


def _overlay_fixture(tmp_path, n=3, h=10, w=12):
    rng = np.random.default_rng(0)
    for i in range(n):
        write_slice(rng.uniform(size=(h, w)), tmp_path / "scan" / f"{i}.png")
        save_mask(Mask.zeros((h, w)), tmp_path / "masks" / f"{i}.mask.png")


def test_overlay_panels(tmp_path):
    _overlay_fixture(tmp_path)
    assert main(["overlay", "--scan-dir", str(tmp_path / "scan"), "--masks-dir", str(tmp_path / "masks"),
                 "--output-dir", str(tmp_path / "ov")]) == 0
    panels = sorted((tmp_path / "ov").glob("*.overlay.png"))
    assert len(panels) == 3
    arr = np.array(Image.open(panels[0]))
    assert arr.shape == (10, 2 * 12 + OVERLAY_GUTTER)
    assert np.all(arr[:, 12 + OVERLAY_GUTTER:] == 0)
    src = np.array(Image.open(tmp_path / "scan" / "0.png"))
    assert np.array_equal(arr[:, :12], src)


def test_overlay_skips_missing_mask(tmp_path, caplog):
    _overlay_fixture(tmp_path)
    (tmp_path / "masks" / "1.mask.png").unlink()
    assert main(["overlay", "--scan-dir", str(tmp_path / "scan"), "--masks-dir", str(tmp_path / "masks"),
                 "--output-dir", str(tmp_path / "ov")]) == 0
    assert sorted(p.name for p in (tmp_path / "ov").iterdir()) == ["0.overlay.png", "2.overlay.png"]
    assert "no mask for slice 1" in caplog.text
