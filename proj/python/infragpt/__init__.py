"""Python bindings for the infragpt pipeline and its evaluation metrics."""

import json
import os

from ._infragpt import Error, bbox_from_center, bleu, iou, meteor, rouge_l
from . import _infragpt as _core

__all__ = [
    "Error",
    "average_precision",
    "bbox_from_center",
    "bleu",
    "canonicalize_plan",
    "evaluate",
    "iou",
    "meteor",
    "rouge_l",
    "run_batch",
    "structural_accuracy",
    "validate_plan",
]


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def validate_plan(document, width, height, require_items=False):
    """Validate a plan (str or dict) against a width x height frame."""
    return json.loads(_core._validate_plan(_text(document), width, height, require_items))


def canonicalize_plan(document, width, height):
    return _core._canonicalize_plan(_text(document), width, height)


def _detections(dets):
    return json.dumps(
        [
            {
                "bbox": d["bbox"],
                "class_label": d.get("class_label", d.get("class")),
                "confidence": d.get("confidence", 1.0),
                "model_id": d.get("model_id", "py"),
            }
            for d in dets
        ]
    )


def structural_accuracy(plan, detections, iou_threshold=0.5):
    return _core._structural_accuracy(_text(plan), _detections(detections), iou_threshold)


def average_precision(predictions, ground_truths, class_label, iou_threshold=0.5):
    """AP for one class; None when it has no ground truths.

    predictions: [{"bbox": [x0, y0, x1, y1], "class": str, "confidence": float}]
    ground_truths: [{"bbox": [...], "class": str}]
    """
    return _core._average_precision(_detections(predictions), json.dumps(ground_truths), class_label, iou_threshold)


def run_batch(config, manifest, out, force=False, deterministic=False):
    return json.loads(_core._run_batch(os.fspath(config), os.fspath(manifest), os.fspath(out), force, deterministic))


def evaluate(records, gt, refs, out_dir, subset_size=5):
    return json.loads(
        _core._run_eval(os.fspath(records), os.fspath(gt), os.fspath(refs), os.fspath(out_dir), subset_size)
    )
