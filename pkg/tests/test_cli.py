import json
import subprocess
import sys

import numpy as np
import pytest

import winsorcam as wc
from winsorcam.cli import main


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundles")
    for seed in range(3):
        model, image, mask = wc.make_synthetic_fixture(seed)
        bundle = wc.run_to_bundle(model, image, 0, mask=mask, true_class=0)
        wc.write_bundle(bundle, root / f"fixture{seed}.wcam")
    return root


@pytest.fixture(scope="module")
def bundle_path(bundle_dir):
    return bundle_dir / "fixture0.wcam"


class TestCompute:
    def test_writes_four_deterministic_files(self, bundle_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["compute", str(bundle_path), "--p", "50", "--out", str(out)]) == 0
        names = sorted(p.name for p in out_a.iterdir())
        assert names == ["binary.png", "heatmap.png", "importance.json", "overlay.png"]
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_p_out_of_range_is_usage_error_without_files(self, bundle_path, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["compute", str(bundle_path), "--p", "101", "--out", str(out)]) == 2
        assert not out.exists()

    def test_importance_json_respects_weight_range(self, bundle_path, tmp_path):
        out = tmp_path / "imp"
        main(["compute", str(bundle_path), "--p", "30", "--out", str(out)])
        doc = json.loads((out / "importance.json").read_text())
        for value in doc["normalized"]:
            assert value == 0.0 or 0.1 <= value <= 1.0
        assert doc["p"] == 30.0
        assert len(doc["raw"]) == len(doc["layers"]) == 3

    def test_missing_bundle_is_data_error(self, tmp_path, capsys):
        assert main(["compute", str(tmp_path / "nope.wcam"), "--p", "10", "--out", str(tmp_path / "o")]) == 3

    def test_json_errors_flag_emits_structured_line(self, tmp_path, capsys):
        code = main(
            ["compute", str(tmp_path / "nope.wcam"), "--p", "10", "--out", str(tmp_path / "o"), "--json-errors"]
        )
        assert code == 3
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "data"

    def test_corrupt_bundle_is_data_error(self, bundle_path, tmp_path):
        corrupt = tmp_path / "corrupt.wcam"
        corrupt.write_bytes(bundle_path.read_bytes()[:-10])
        assert main(["compute", str(corrupt), "--p", "10", "--out", str(tmp_path / "o")]) == 3


class TestSweep:
    def test_record_counts_and_best_flags(self, bundle_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", str(bundle_path), "--out", str(out)]) == 0
        records = json.loads((out / "records.json").read_text())
        winsor = [r for r in records if r["method"] == "winsor"]
        baselines = [r for r in records if r["method"] != "winsor"]
        assert len(winsor) == 11 and len(baselines) == 2
        assert sum(r["best_iou"] for r in winsor) == 1
        assert sum(r["best_distance"] for r in winsor) == 1
        best = next(r for r in winsor if r["best_iou"])
        assert best["iou"] == max(r["iou"] for r in winsor)

    def test_naive_mean_record_matches_direct_baseline(self, bundle_path, tmp_path):
        out = tmp_path / "sweep2"
        main(["sweep", str(bundle_path), "--out", str(out)])
        records = json.loads((out / "records.json").read_text())
        naive = next(r for r in records if r["method"] == "naive_mean")

        bundle = wc.read_bundle(bundle_path)
        cams = wc.all_layer_gradcams(bundle, bundle.class_index)
        from winsorcam.evaluation import score_map

        overlap, distance = score_map(wc.naive_mean_baseline(cams, "bilinear"), bundle.mask, "bilinear")
        assert naive["iou"] == overlap
        assert naive["com_distance_px"] == distance

    def test_csv_has_frozen_columns(self, bundle_path, tmp_path):
        out = tmp_path / "sweep3"
        main(["sweep", str(bundle_path), "--out", str(out)])
        header = (out / "records.csv").read_text().splitlines()[0]
        assert header == "bundle_id,method,aggregation,interp,p,iou,com_distance_px,best_iou,best_distance"

    def test_missing_mask_is_explicit_error(self, tmp_path):
        model, image, _ = wc.make_synthetic_fixture(1)
        bundle = wc.run_to_bundle(model, image, 0, mask=None)
        path = tmp_path / "nomask.wcam"
        wc.write_bundle(bundle, path)
        assert main(["sweep", str(path), "--out", str(tmp_path / "o")]) == 3

    def test_custom_p_grid(self, bundle_path, tmp_path):
        out = tmp_path / "grid"
        main(["sweep", str(bundle_path), "--p-grid", "0,50,100", "--out", str(out)])
        records = json.loads((out / "records.json").read_text())
        assert [r["p"] for r in records if r["method"] == "winsor"] == [0.0, 50.0, 100.0]


class TestEvaluate:
    def test_three_bundle_summary_matches_hand_average(self, bundle_dir, tmp_path):
        out = tmp_path / "eval"
        assert main(["evaluate", str(bundle_dir), "--out", str(out)]) == 0
        records = json.loads((out / "records.json").read_text())
        summary = json.loads((out / "summary.json").read_text())

        by_bundle = {}
        for record in records:
            by_bundle.setdefault(record["bundle_id"], []).append(record)
        assert len(by_bundle) == 3

        best = [max(r["iou"] for r in recs if r["method"] == "winsor") for recs in by_bundle.values()]
        winsor_all = next(r for r in summary if r["split"] == "all" and r["method"] == "winsor")
        assert winsor_all["iou_mean"] == pytest.approx(np.mean(best), abs=1e-15)
        assert winsor_all["iou_std"] == pytest.approx(np.std(best), abs=1e-15)
        assert winsor_all["n_images"] == 3

    def test_correctness_split_present(self, bundle_dir, tmp_path):
        out = tmp_path / "eval2"
        main(["evaluate", str(bundle_dir), "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        splits = {row["split"] for row in summary}
        assert splits == {"all", "correct", "incorrect"}
        correct = next(r for r in summary if r["split"] == "correct" and r["method"] == "winsor")
        assert correct["n_images"] == 3  # fixtures predict their target class

    def test_single_bundle_zero_stddev(self, bundle_dir, tmp_path_factory, tmp_path):
        single = tmp_path_factory.mktemp("single")
        (single / "only.wcam").write_bytes((bundle_dir / "fixture0.wcam").read_bytes())
        out = tmp_path / "eval3"
        main(["evaluate", str(single), "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        for row in summary:
            if row["n_images"]:
                assert row["iou_std"] == 0.0
                assert row["com_distance_std"] == 0.0

    def test_identical_bundles_same_mean_zero_std(self, bundle_dir, tmp_path_factory, tmp_path):
        twins = tmp_path_factory.mktemp("twins")
        payload = (bundle_dir / "fixture0.wcam").read_bytes()
        (twins / "a.wcam").write_bytes(payload)
        (twins / "b.wcam").write_bytes(payload)
        out_single = tmp_path / "s"
        out_twins = tmp_path / "t"
        single = tmp_path_factory.mktemp("single2")
        (single / "a.wcam").write_bytes(payload)
        main(["evaluate", str(single), "--out", str(out_single)])
        main(["evaluate", str(twins), "--out", str(out_twins)])
        one = json.loads((out_single / "summary.json").read_text())
        two = json.loads((out_twins / "summary.json").read_text())
        row1 = next(r for r in one if r["split"] == "all" and r["method"] == "winsor")
        row2 = next(r for r in two if r["split"] == "all" and r["method"] == "winsor")
        assert row1["iou_mean"] == row2["iou_mean"]
        assert row2["iou_std"] == 0.0

    def test_empty_directory_is_data_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["evaluate", str(empty), "--out", str(tmp_path / "o")]) == 3

    def test_deterministic_outputs(self, bundle_dir, tmp_path):
        out_a, out_b = tmp_path / "ea", tmp_path / "eb"
        main(["evaluate", str(bundle_dir), "--out", str(out_a)])
        main(["evaluate", str(bundle_dir), "--out", str(out_b)])
        for name in ("records.json", "records.csv", "summary.json", "summary.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestUsage:
    def test_unknown_command_exits_2(self):
        assert main(["frobnicate"]) == 2

    def test_bad_bounds_exits_2(self, bundle_path, tmp_path):
        code = main(
            ["compute", str(bundle_path), "--p", "10", "--bounds", "1.0,0.1", "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_console_script_smoke(self, bundle_path, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "winsorcam.cli", "compute", str(bundle_path), "--p", "40",
             "--out", str(tmp_path / "out")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "heatmap.png").exists()
