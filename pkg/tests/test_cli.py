import json
import os
import subprocess
import sys

import numpy as np
import pytest

from crackscope.cli import main
from crackscope.dataio import write_pgm


@pytest.fixture
def bar_mask_path(tmp_path):
    """Synthetic crack: horizontal bar exactly 7 px tall."""
    gray = np.zeros((32, 64), dtype=np.uint8)
    gray[12:19, 4:60] = 255
    path = tmp_path / "crack.pgm"
    path.write_bytes(write_pgm(gray))
    return path


@pytest.fixture
def eval_fixture(tmp_path):
    """Two images, three GTs, three predictions with hand-countable outcome.

    img1: one GT square, one matching pred @0.9 and one far miss @0.8.
    img2: two GT squares, one matching pred @0.7.
    Expected at IoU 0.5 (box mode): tp=2, fp=1, fn=1.
    """
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    square = "0.2 0.2 0.6 0.2 0.6 0.6 0.2 0.6"
    far = "0.7 0.7 0.9 0.7 0.9 0.9 0.7 0.9"
    (gt_dir / "img1.txt").write_text(f"0 {square}\n")
    (gt_dir / "img2.txt").write_text(f"0 {square}\n0 {far}\n")

    def poly(coords):
        vals = [float(v) for v in coords.split()]
        return [[vals[i], vals[i + 1]] for i in range(0, len(vals), 2)]

    preds = [
        {"image": "img1", "class": 0, "score": 0.9, "polygon": poly(square)},
        {"image": "img1", "class": 0, "score": 0.8, "polygon": poly(far)},  # no gt there
        {"image": "img2", "class": 0, "score": 0.7, "polygon": poly(square)},
    ]
    pred_path = tmp_path / "preds.jsonl"
    pred_path.write_text("".join(json.dumps(p) + "\n" for p in preds))
    return gt_dir, pred_path


class TestAnalyze:
    def test_bar_reports_width_seven(self, bar_mask_path, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["analyze", "--mask", str(bar_mask_path), "--out", str(out)])
        assert code == 0
        reports = json.loads(out.read_text())
        assert len(reports) == 1
        assert abs(reports[0]["max_width_px"] - 7.0) <= 1.0
        assert reports[0]["component_id"] == 1
        assert "max_width_mm" not in reports[0]

    def test_scale_flag_adds_mm(self, bar_mask_path, tmp_path):
        out = tmp_path / "report.json"
        code = main(
            ["analyze", "--mask", str(bar_mask_path), "--out", str(out),
             "--scale-mm-per-px", "2.0"]
        )
        assert code == 0
        (report,) = json.loads(out.read_text())
        assert report["max_width_mm"] == report["max_width_px"] * 2.0

    def test_missing_file_exits_1(self, tmp_path, capsys):
        code = main(["analyze", "--mask", str(tmp_path / "nope.pgm"), "--out", "x.json"])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_format_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P2\n1 1\n255\n0")
        code = main(["analyze", "--mask", str(bad), "--out", str(tmp_path / "o.json")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_component_without_skeleton_exits_1(self, tmp_path, capsys):
        # a 2x2 speck thins away entirely; analyze reports it rather than
        # silently dropping the component
        gray = np.zeros((8, 8), dtype=np.uint8)
        gray[3:5, 3:5] = 255
        speck = tmp_path / "speck.pgm"
        speck.write_bytes(write_pgm(gray))
        code = main(["analyze", "--mask", str(speck), "--out", str(tmp_path / "o.json")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_threads_env_exits_1(self, bar_mask_path, tmp_path, capsys):
        os.environ["CRACKSCOPE_THREADS"] = "many"
        try:
            code = main(
                ["analyze", "--mask", str(bar_mask_path), "--out", str(tmp_path / "o.json")]
            )
        finally:
            del os.environ["CRACKSCOPE_THREADS"]
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestEval:
    def test_instance_mode_hand_counts(self, eval_fixture, tmp_path, capsys):
        gt_dir, pred_path = eval_fixture
        out = tmp_path / "metrics.json"
        pr_out = tmp_path / "pr.csv"
        code = main(
            ["eval", "--gt", str(gt_dir), "--pred", str(pred_path),
             "--out", str(out), "--pr-out", str(pr_out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["mode"] == "instance"
        assert (doc["tp"], doc["fp"], doc["fn"]) == (2, 1, 1)
        assert doc["precision"] == pytest.approx(2 / 3)
        assert doc["recall"] == pytest.approx(2 / 3)
        assert doc["tn"] is None and doc["accuracy"] is None
        assert doc["iou_threshold"] == 0.5
        # curve: tp@.9, fp@.8, tp@.7 over 3 gts -> envelope area
        assert doc["ap"] == pytest.approx((1 / 3) * 1.0 + (1 / 3) * (2 / 3))
        lines = pr_out.read_text().splitlines()
        assert lines[0] == "threshold,precision,recall"
        assert len(lines) == 4
        assert list(doc) == [
            "mode", "iou_threshold", "tp", "fp", "fn", "tn",
            "precision", "recall", "accuracy", "ap",
        ]

    def test_pixel_mode(self, eval_fixture, tmp_path):
        gt_dir, pred_path = eval_fixture
        out = tmp_path / "metrics.json"
        code = main(
            ["eval", "--gt", str(gt_dir), "--pred", str(pred_path),
             "--mode", "pixel", "--out", str(out), "--raster-size", "64"]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["mode"] == "pixel"
        assert doc["tn"] > 0
        assert doc["accuracy"] is not None
        assert doc["ap"] is None and doc["iou_threshold"] is None
        # center square: 25 px side (625 px), far square: 13 px side (169 px);
        # img1 adds 169 fp px, img2 misses 169 fn px -> P = R = 1250/1419
        assert doc["precision"] == pytest.approx(1250 / 1419)
        assert doc["recall"] == pytest.approx(1250 / 1419)

    def test_mask_matching_mode(self, eval_fixture, tmp_path):
        gt_dir, pred_path = eval_fixture
        out = tmp_path / "metrics.json"
        code = main(
            ["eval", "--gt", str(gt_dir), "--pred", str(pred_path),
             "--match", "mask", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert (doc["tp"], doc["fp"], doc["fn"]) == (2, 1, 1)

    def test_pr_out_rejected_in_pixel_mode(self, eval_fixture, tmp_path, capsys):
        gt_dir, pred_path = eval_fixture
        pr_out = tmp_path / "pr.csv"
        code = main(
            ["eval", "--gt", str(gt_dir), "--pred", str(pred_path),
             "--mode", "pixel", "--pr-out", str(pr_out)]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")
        assert not pr_out.exists()

    def test_unknown_image_id_exits_1(self, eval_fixture, tmp_path, capsys):
        gt_dir, pred_path = eval_fixture
        extra = {"image": "ghost", "class": 0, "score": 0.5,
                 "polygon": [[0.1, 0.1], [0.2, 0.1], [0.2, 0.2]]}
        pred_path.write_text(pred_path.read_text() + json.dumps(extra) + "\n")
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "ghost" in err

    def test_stdout_when_no_out_flag(self, eval_fixture, capsys):
        gt_dir, pred_path = eval_fixture
        code = main(["eval", "--gt", str(gt_dir), "--pred", str(pred_path)])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["tp"] == 2

    def test_thread_env_var_does_not_change_results(self, eval_fixture, tmp_path):
        gt_dir, pred_path = eval_fixture
        single = tmp_path / "m1.json"
        multi = tmp_path / "m4.json"
        main(["eval", "--gt", str(gt_dir), "--pred", str(pred_path), "--out", str(single)])
        os.environ["CRACKSCOPE_THREADS"] = "4"
        try:
            main(["eval", "--gt", str(gt_dir), "--pred", str(pred_path), "--out", str(multi)])
        finally:
            del os.environ["CRACKSCOPE_THREADS"]
        assert single.read_text() == multi.read_text()


class TestSplit:
    def test_writes_three_files(self, tmp_path, capsys):
        listing = tmp_path / "all.txt"
        listing.write_text("".join(f"img{i}\n" for i in range(10)))
        out_dir = tmp_path / "splits"
        code = main(
            ["split", str(listing), "--train", "6", "--val", "2", "--test", "2",
             "--seed", "5", "--out-dir", str(out_dir)]
        )
        assert code == 0
        train = (out_dir / "train.txt").read_text().splitlines()
        val = (out_dir / "val.txt").read_text().splitlines()
        test = (out_dir / "test.txt").read_text().splitlines()
        assert (len(train), len(val), len(test)) == (6, 2, 2)
        assert len(set(train + val + test)) == 10

    def test_oversized_split_exits_1(self, tmp_path, capsys):
        listing = tmp_path / "all.txt"
        listing.write_text("a\nb\n")
        code = main(["split", str(listing), "--train", "5", "--val", "0", "--test", "0"])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestGradcheckCommand:
    def test_exits_zero_when_all_pass(self, capsys):
        code = main(["gradcheck", "--seed", "42", "--tol", "1e-4", "--cases", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "all" in out and "passed" in out
        assert "conv2d" in out and "cbam" in out and "ciou" in out

    def test_impossible_tolerance_fails(self, capsys):
        code = main(["gradcheck", "--cases", "1", "--tol", "1e-18"])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestAttnDemo:
    @pytest.mark.parametrize("block", ["eca", "cam", "sam", "cbam", "sppf"])
    def test_runs_each_block(self, block, capsys):
        code = main(["attn-demo", "--block", block, "--seed", "3"])
        assert code == 0
        out = capsys.readouterr().out
        assert f"block: {block}" in out
        assert "output shape" in out

    def test_zero_init_identity_reported(self, capsys):
        main(["attn-demo", "--block", "cbam", "--seed", "1"])
        out = capsys.readouterr().out
        assert "0.25*x" in out


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self, capsys):
        assert main(["analyze", "--mask", "x", "--out", "y", "--bogus"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_required_flag_exits_2(self, capsys):
        assert main(["analyze", "--mask", "x"]) == 2


def test_module_entry_point(tmp_path):
    gray = np.zeros((16, 16), dtype=np.uint8)
    gray[5:10, 2:14] = 255
    mask = tmp_path / "m.pgm"
    mask.write_bytes(write_pgm(gray))
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "crackscope", "analyze", "--mask", str(mask), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
