import random

import pytest

from bruteforce_ap import bf_suite, random_micro_dataset
from parascope.errors import EmptySet, KeyMismatch, LengthMismatch, NoGroundTruth
from parascope.metrics import (
    average_precision,
    classification_report,
    coco_ap_suite,
    match_detections,
    read_prediction_dump,
    write_prediction_dump,
)


def metrics_as_dict(m):
    return {"ap": m.ap, "ap50": m.ap50, "ap75": m.ap75,
            "ap_small": m.ap_small, "ap_medium": m.ap_medium, "ap_large": m.ap_large}


class TestMatchDetections:
    def test_simple_tp(self):
        flags, matched = match_detections(
            [(0.9, (0, 0, 10, 10))], [(0, 0, 11, 11)], 0.5
        )
        assert flags == [True]
        assert matched == [True]

    def test_greedy_uniqueness(self):
        preds = [(0.9, (0, 0, 10, 10)), (0.8, (0, 0, 10, 11))]
        flags, matched = match_detections(preds, [(0, 0, 10, 10)], 0.5)
        assert flags == [True, False]  # higher score wins the single GT
        assert matched == [True]

    def test_below_threshold_is_fp(self):
        flags, matched = match_detections(
            [(0.9, (0, 0, 10, 10))], [(0, 6, 10, 16)], 0.5
        )
        assert flags == [False]
        assert matched == [False]

    def test_prefers_highest_iou_gt(self):
        preds = [(0.9, (0, 0, 10, 10))]
        gts = [(0, 2, 10, 12), (0, 0, 10, 10)]
        flags, matched = match_detections(preds, gts, 0.5)
        assert matched == [False, True]


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision([(0.9, True), (0.8, True)], n_gt=2) == 1.0

    def test_no_predictions(self):
        assert average_precision([], n_gt=3) == 0.0

    def test_fp_then_tp_gives_half(self):
        # 1 GT; preds sorted: FP at 0.9, TP at 0.8 ->
        # precision at recall 1.0 is 1/2; all 101 points take 0.5.
        value = average_precision([(0.9, False), (0.8, True)], n_gt=1)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_zero_gt_raises(self):
        with pytest.raises(NoGroundTruth):
            average_precision([(0.9, True)], n_gt=0)


class TestCocoApSuite:
    def test_perfect_predictions_all_ones(self):
        gts = {
            "a": [(0, (0, 0, 20, 20)), (1, (50, 50, 150, 150))],
            "b": [(2, (10, 10, 25, 25))],
        }
        preds = {k: [(c, 1.0, b) for c, b in v] for k, v in gts.items()}
        m = coco_ap_suite(preds, gts)
        assert m.ap == 1.0 and m.ap50 == 1.0 and m.ap75 == 1.0
        assert m.ap_small == 1.0 and m.ap_large == 1.0
        assert m.ap_medium is None  # no GT in the medium bucket

    def test_empty_predictions_all_zero(self):
        gts = {"a": [(0, (0, 0, 20, 20))]}
        m = coco_ap_suite({}, gts)
        assert m.ap == 0.0 and m.ap50 == 0.0 and m.ap75 == 0.0
        assert m.ap_small == 0.0
        assert m.ap_medium is None and m.ap_large is None

    def test_handcrafted_mixed_dataset_matches_brute_force(self):
        gts = {
            "x": [(0, (0, 0, 30, 30)), (0, (100, 100, 140, 140)), (1, (10, 60, 26, 76))],
            "y": [(0, (5, 5, 105, 105))],
            "z": [(2, (0, 0, 16, 16)), (2, (40, 40, 56, 56))],
        }
        preds = {
            "x": [
                (0, 0.95, (1, 1, 31, 29)),        # TP-ish
                (0, 0.90, (200, 200, 230, 230)),  # FP
                (0, 0.70, (101, 99, 139, 141)),   # TP-ish
                (1, 0.60, (10, 60, 27, 75)),
            ],
            "y": [(0, 0.80, (10, 10, 100, 100)), (0, 0.20, (5, 5, 105, 105))],
            "z": [(2, 0.55, (1, 0, 17, 16))],
        }
        got = metrics_as_dict(coco_ap_suite(preds, gts))
        expected = bf_suite(preds, gts)
        for key, want in expected.items():
            if want is None:
                assert got[key] is None
            else:
                assert got[key] == pytest.approx(want, abs=1e-9)

    def test_shuffle_invariance_with_distinct_scores(self):
        rnd = random.Random(77)
        preds, gts = random_micro_dataset(rnd)
        baseline = metrics_as_dict(coco_ap_suite(preds, gts))
        for trial in range(3):
            shuffled = {}
            for key, entries in preds.items():
                entries = list(entries)
                rnd.shuffle(entries)
                shuffled[key] = entries
            again = metrics_as_dict(coco_ap_suite(shuffled, gts))
            assert again == baseline

    def test_ap_not_above_ap50(self):
        for seed in range(10):
            preds, gts = random_micro_dataset(random.Random(seed))
            m = coco_ap_suite(preds, gts)
            if m.ap is not None and m.ap50 is not None:
                assert m.ap <= m.ap50 + 1e-12

    def test_adding_top_tp_never_decreases_ap(self):
        gts = {"a": [(0, (0, 0, 20, 20)), (0, (50, 50, 80, 80))]}
        preds = {"a": [(0, 0.6, (0, 0, 20, 20)), (0, 0.4, (200, 200, 220, 220))]}
        before = coco_ap_suite(preds, gts).ap
        preds2 = {"a": preds["a"] + [(0, 0.99, (50, 50, 80, 80))]}
        after = coco_ap_suite(preds2, gts).ap
        assert after >= before

    def test_key_mismatch(self):
        with pytest.raises(KeyMismatch):
            coco_ap_suite({"ghost": []}, {"a": [(0, (0, 0, 5, 5))]})

    def test_max_dets_caps_per_image_class(self):
        gts = {"a": [(0, (0, 0, 20, 20))]}
        preds = {"a": [
            (0, 0.9, (200, 200, 220, 220)),  # high-score FP
            (0, 0.5, (0, 0, 20, 20)),        # low-score TP
        ]}
        capped = coco_ap_suite(preds, gts, max_dets=1)
        assert capped.ap50 == 0.0  # only the FP survives the cap
        uncapped = coco_ap_suite(preds, gts, max_dets=100)
        assert uncapped.ap50 == pytest.approx(0.5)

    def test_report_display_scale(self):
        gts = {"a": [(0, (0, 0, 20, 20))]}
        preds = {"a": [(0, 1.0, (0, 0, 20, 20))]}
        report = coco_ap_suite(preds, gts).to_report()
        assert report["display"]["AP"] == 100.0
        assert report["raw"]["AP"] == 1.0
        assert report["area_frame"] == "original"


class TestRandomizedOracleEquivalence:
    def test_fifty_micro_datasets(self):
        for trial in range(50):
            rnd = random.Random(4242 + trial)
            preds, gts = random_micro_dataset(rnd)
            got = metrics_as_dict(coco_ap_suite(preds, gts))
            expected = bf_suite(preds, gts)
            for key, want in expected.items():
                if want is None:
                    assert got[key] is None, (trial, key)
                else:
                    assert got[key] == pytest.approx(want, abs=1e-9), (trial, key)


class TestClassificationReport:
    def test_all_correct(self):
        m = classification_report([0.9, 0.1], [True, False])
        assert m.accuracy == 1.0
        assert m.confusion == {"TP": 1, "FP": 0, "FN": 0, "TN": 1}

    def test_half_right(self):
        m = classification_report([0.9, 0.9], [True, False])
        assert m.accuracy == 0.5
        assert m.confusion["TP"] == 1 and m.confusion["FP"] == 1

    def test_threshold_strictness(self):
        m = classification_report([0.5], [True])
        assert m.confusion["FN"] == 1  # p == threshold is NOT infected

    def test_empty_inputs(self):
        with pytest.raises(EmptySet):
            classification_report([], [])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            classification_report([0.5], [True, False])


class TestDumpIo:
    def test_round_trip(self, tmp_path):
        preds = {
            "img0": [(0, 0.9, (1, 2, 3, 4)), (2, 0.5, (10, 20, 30, 40))],
            "img1": [],
        }
        path = tmp_path / "dump.jsonl"
        write_prediction_dump(path, preds)
        again = read_prediction_dump(path)
        assert again == preds
