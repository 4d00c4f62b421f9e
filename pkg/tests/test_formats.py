from __future__ import annotations

import json

import numpy as np
import pytest

from cytodet.errors import ParseError, ValidationError
from cytodet.formats import (
    emit_detections,
    emit_ground_truth,
    emit_metrics_report,
    emit_weight_table,
    parse_detections,
    parse_detections_csv,
    parse_ground_truth,
    parse_weight_table,
)
from cytodet.metrics import EvalConfig, map_50_95
from cytodet.riva import riva_catalog
from cytodet.weights import image_sampling_weights, loss_weights, sampler_weights
from helpers import catalog, det, gt_box, gt_set, run


def coco_gt(images, annotations, categories):
    return json.dumps(
        {"images": images, "annotations": annotations, "categories": categories}
    )


MINIMAL = coco_gt(
    images=[{"id": 1}],
    annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]}],
    categories=[{"id": 1, "name": "NILM"}],
)


def test_parse_minimal_ground_truth():
    gts = parse_ground_truth(MINIMAL)
    assert gts.catalog.names == ("NILM",)
    boxes = gts.boxes_for("1")
    assert len(boxes) == 1
    assert boxes[0].box.as_corners() == (0, 0, 10, 10)


def test_parse_keeps_empty_images():
    doc = coco_gt(
        images=[{"id": 1}, {"id": 2}],
        annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5]}],
        categories=[{"id": 1, "name": "NILM"}],
    )
    gts = parse_ground_truth(doc)
    assert set(gts.boxes_by_image) == {"1", "2"}
    assert gts.boxes_for("2") == ()


def test_parse_unknown_category_rejected():
    doc = coco_gt(
        images=[{"id": 1}],
        annotations=[{"id": 1, "image_id": 1, "category_id": 9, "bbox": [0, 0, 5, 5]}],
        categories=[{"id": 1, "name": "NILM"}],
    )
    with pytest.raises(ValidationError, match="9"):
        parse_ground_truth(doc)


def test_parse_unknown_image_rejected():
    doc = coco_gt(
        images=[{"id": 1}],
        annotations=[{"id": 1, "image_id": 7, "category_id": 1, "bbox": [0, 0, 5, 5]}],
        categories=[{"id": 1, "name": "NILM"}],
    )
    with pytest.raises(ValidationError, match="7"):
        parse_ground_truth(doc)


def test_parse_negative_size_rejected():
    doc = coco_gt(
        images=[{"id": 1}],
        annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, -1, 5]}],
        categories=[{"id": 1, "name": "NILM"}],
    )
    with pytest.raises(ValidationError):
        parse_ground_truth(doc)


def test_malformed_json_reports_position():
    with pytest.raises(ParseError) as excinfo:
        parse_ground_truth('{"images": [,]}')
    assert excinfo.value.line is not None
    assert "line" in str(excinfo.value)


def test_categories_sorted_by_id():
    doc = coco_gt(
        images=[],
        annotations=[],
        categories=[{"id": 5, "name": "b"}, {"id": 2, "name": "a"}],
    )
    gts = parse_ground_truth(doc)
    assert gts.catalog.names == ("a", "b")
    assert gts.catalog.by_name("a").coco_id == 2


def test_parse_detections_empty():
    run_ = parse_detections("[]", "m0")
    assert len(run_) == 0


def test_parse_detections_converts_xywh():
    doc = json.dumps(
        [{"image_id": 1, "category_id": 1, "bbox": [1, 0, 10, 10], "score": 0.8}]
    )
    run_ = parse_detections(doc, "m0", riva_catalog(with_counts=False))
    d = run_.detections[0]
    assert d.box.as_corners() == (1, 0, 11, 10)
    assert d.score == 0.8
    assert d.model_id == "m0"


def test_parse_detections_clamps_scores():
    doc = json.dumps(
        [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 1.3}]
    )
    run_ = parse_detections(doc, "m0", riva_catalog(with_counts=False))
    assert run_.detections[0].score == 1.0
    assert run_.clamped_scores == 1


def test_parse_detections_malformed_record_has_index():
    doc = json.dumps([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1]}])
    with pytest.raises(ParseError, match="index 0"):
        parse_detections(doc, "m0")


def test_parse_detections_unknown_category():
    doc = json.dumps(
        [{"image_id": 1, "category_id": 13, "bbox": [0, 0, 1, 1], "score": 0.5}]
    )
    with pytest.raises(ValidationError, match="13"):
        parse_detections(doc, "m0", riva_catalog(with_counts=False))


def test_detections_csv_round():
    cat = catalog("SCC", "NILM")
    text = (
        "image_id,class_name,x,y,w,h,score\n"
        "img_a,NILM,1,2,10,20,0.75\n"
        "img_a,SCC,5.5,0,4,4,0.25\n"
    )
    run_ = parse_detections_csv(text, "m0", cat)
    assert len(run_) == 2
    assert run_.detections[0].class_id.name == "NILM"
    assert run_.detections[0].box.as_corners() == (1, 2, 11, 22)


def test_detections_csv_missing_columns():
    with pytest.raises(ParseError):
        parse_detections_csv("image_id,x\n1,2\n", "m0", catalog("a"))


def test_emit_parse_round_trip_single():
    cat = riva_catalog(with_counts=False)
    original = run("m0", [det("7", cat.by_name("SCC"), (0.5, 1.5, 10.25, 12.125), 0.625)])
    text = emit_detections(original)
    reparsed = parse_detections(text, "m0", cat)
    assert reparsed.detections == original.detections


def test_emit_detections_empty():
    assert json.loads(emit_detections(run("m0", []))) == []


def test_detections_round_trip_randomized():
    rng = np.random.default_rng(7)
    cat = riva_catalog(with_counts=False)
    for _ in range(50):
        dets = []
        for k in range(int(rng.integers(0, 12))):
            cls = cat.classes[int(rng.integers(0, len(cat)))]
            x, y = float(rng.uniform(0, 500)), float(rng.uniform(0, 500))
            w, h = float(rng.uniform(0, 80)), float(rng.uniform(0, 80))
            score = float(rng.uniform(0, 1))
            dets.append(det(str(int(rng.integers(1, 5))), cls,
                            (x, y, x + w, y + h), score))
        original = run("m0", dets)
        reparsed = parse_detections(emit_detections(original), "m0", cat)
        assert len(reparsed) == len(original)
        for a, b in zip(reparsed.detections, original.detections):
            assert a.image_id == b.image_id
            assert a.class_id == b.class_id
            assert a.score == b.score
            for u, v in zip(a.box.as_corners(), b.box.as_corners()):
                assert u == pytest.approx(v, abs=1e-6)


def test_ground_truth_round_trip():
    cat = riva_catalog(with_counts=False)
    gts = gt_set(
        cat,
        [
            gt_box("1", cat.by_name("NILM"), (0, 0, 10.5, 10.25)),
            gt_box("1", cat.by_name("SCC"), (30, 40, 55, 61)),
            gt_box("2", cat.by_name("ASCUS"), (7, 8, 9, 10)),
        ],
        extra_images=["3"],
    )
    reparsed = parse_ground_truth(emit_ground_truth(gts))
    assert set(reparsed.boxes_by_image) == {"1", "2", "3"}
    assert reparsed.catalog.names == cat.names
    assert len(reparsed.boxes_for("1")) == 2


def test_weight_table_emission_structure():
    table = loss_weights(riva_catalog())
    doc = json.loads(emit_weight_table(table))
    assert doc["scheme"] == "loss_log"
    assert len(doc["classes"]) == 8
    for row in doc["classes"]:
        assert set(row) >= {"name", "count", "weight"}
    assert "images" not in doc


def test_weight_table_round_trip():
    cat = riva_catalog()
    table = sampler_weights(cat)
    gts = gt_set(
        riva_catalog(with_counts=False),
        [gt_box("1", riva_catalog(with_counts=False).by_name("NILM"), (0, 0, 5, 5))],
    )
    images = image_sampling_weights(gts, table)
    text = emit_weight_table(table, images)
    reparsed_table, reparsed_images = parse_weight_table(text)
    assert reparsed_table.scheme == table.scheme
    for a, b in zip(reparsed_table.entries, table.entries):
        assert a.name == b.name and a.count == b.count
        assert a.weight == pytest.approx(b.weight, abs=1e-9)
    assert reparsed_images is not None
    for a, b in zip(reparsed_images.entries, images.entries):
        assert a.weight == pytest.approx(b.weight, abs=1e-9)


def test_weight_table_round_trip_randomized():
    rng = np.random.default_rng(13)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        counts = [int(rng.integers(1, 10**6)) for _ in range(n)]
        cat = catalog(*[f"c{i}" for i in range(n)]).with_counts(counts)
        for table in (loss_weights(cat), sampler_weights(cat)):
            reparsed, _ = parse_weight_table(emit_weight_table(table))
            for a, b in zip(reparsed.entries, table.entries):
                assert a.weight == pytest.approx(b.weight, abs=1e-9)


def _perfect_report():
    cat = catalog("cell")
    gts = gt_set(cat, [gt_box("1", cat.classes[0], (0, 0, 10, 10))])
    run_ = run("m0", [det("1", cat.classes[0], (0, 0, 10, 10), 0.9)])
    return map_50_95(run_, gts, EvalConfig())


def test_metrics_report_emission():
    summary_text, tables = emit_metrics_report(_perfect_report())
    summary = json.loads(summary_text)
    assert summary["map_50_95"] == 1.0
    assert "cell" in tables
    lines = tables["cell"].strip().splitlines()
    assert lines[0] == "confidence,precision,recall"
    assert len(lines) == 2  # one distinct confidence


def test_parsing_is_total_over_malformed_inputs():
    from cytodet.errors import CytodetError

    rng = np.random.default_rng(99)
    fragments = [
        "", "{", "[", "null", "42", '"text"', "[{}]", '{"images": 0}',
        '{"images": [], "annotations": [], "categories": []}',
        '[{"image_id": 1}]',
        '[{"image_id": 1, "category_id": "x", "bbox": [0,0,1,1], "score": 0.5}]',
        '{"scheme": 1}',
    ]
    for _ in range(200):
        if rng.uniform() < 0.5:
            text = fragments[int(rng.integers(0, len(fragments)))]
        else:
            raw = bytes(rng.integers(32, 127, size=int(rng.integers(1, 60))))
            text = raw.decode("ascii")
        for parser in (
            parse_ground_truth,
            lambda t: parse_detections(t, "m0"),
            parse_weight_table,
        ):
            try:
                parser(text)
            except CytodetError:
                pass  # structured failure is the contract
            # Anything else (KeyError, TypeError, ...) fails the test.


def test_pr_table_sorted_and_distinct():
    cat = catalog("cell")
    gts = gt_set(cat, [gt_box("1", cat.classes[0], (0, 0, 10, 10)),
                       gt_box("2", cat.classes[0], (0, 0, 10, 10))])
    run_ = run(
        "m0",
        [
            det("1", cat.classes[0], (0, 0, 10, 10), 0.9),
            det("2", cat.classes[0], (0, 0, 10, 10), 0.5),
            det("2", cat.classes[0], (50, 50, 60, 60), 0.5),
        ],
    )
    report = map_50_95(run_, gts, EvalConfig())
    _, tables = emit_metrics_report(report)
    rows = tables["cell"].strip().splitlines()[1:]
    confidences = [float(r.split(",")[0]) for r in rows]
    assert confidences == sorted(confidences, reverse=True)
    assert len(confidences) == len(set(confidences)) == 2


def test_pr_table_row_count_equals_distinct_confidences():
    rng = np.random.default_rng(41)
    cat = catalog("cell")
    for _ in range(50):
        gts = gt_set(cat, [gt_box("1", cat.classes[0], (0, 0, 10, 10))],
                     extra_images=["1"])
        dets = []
        for _ in range(int(rng.integers(0, 15))):
            x, y = float(rng.uniform(0, 80)), float(rng.uniform(0, 80))
            # Coarse scores force plenty of ties.
            score = round(float(rng.uniform(0.1, 1.0)), 1)
            dets.append(det("1", cat.classes[0], (x, y, x + 10, y + 10), score))
        report = map_50_95(run("m0", dets), gts, EvalConfig(min_confidence=0.0))
        _, tables = emit_metrics_report(report)
        rows = tables["cell"].strip().splitlines()[1:]
        assert len(rows) == len({d.score for d in dets})
