"""Parser for OpenCV "new-style" boosted Haar cascade XML files.

Only the variant used by the standard frontal-face cascades is accepted:
stageType BOOST, featureType HAAR, stump weak classifiers (a single
internal node each) and untilted rectangular features.  Tilted features
and tree classifiers are rejected loudly rather than mis-evaluated.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .errors import FormatError, UnsupportedCascadeError


@dataclass(frozen=True)
class HaarFeature:
    """2-3 weighted rectangles (x, y, w, h, weight) in base-window coordinates."""

    rects: tuple[tuple[int, int, int, int, float], ...]


@dataclass(frozen=True)
class WeakClassifier:
    """Decision stump: compare a feature value against threshold * var_norm."""

    feature_index: int
    threshold: float
    left_value: float
    right_value: float


@dataclass(frozen=True)
class Stage:
    stage_threshold: float
    weak_classifiers: tuple[WeakClassifier, ...]


@dataclass(frozen=True)
class Cascade:
    base_width: int
    base_height: int
    stages: tuple[Stage, ...]
    features: tuple[HaarFeature, ...]


def _text(node, path: str, what: str) -> str:
    child = node.find(path)
    if child is None or child.text is None:
        raise FormatError(f"cascade XML: missing <{what}>")
    return child.text.strip()


def _parse_stump(node, n_features: int) -> WeakClassifier:
    internal = _text(node, "internalNodes", "internalNodes").split()
    leaves = _text(node, "leafValues", "leafValues").split()
    if len(internal) != 4:
        raise UnsupportedCascadeError(
            f"tree weak classifier with {len(internal) // 4} internal nodes; "
            "only stumps are supported")
    left, right = int(internal[0]), int(internal[1])
    if left != 0 or right != -1:
        raise UnsupportedCascadeError(
            f"non-stump internal node (children {left}, {right})")
    if len(leaves) != 2:
        raise FormatError(f"stump must have 2 leaf values, got {len(leaves)}")
    feature_index = int(internal[2])
    if not 0 <= feature_index < n_features:
        raise FormatError(f"feature index {feature_index} out of range "
                          f"(cascade has {n_features} features)")
    return WeakClassifier(
        feature_index=feature_index,
        threshold=float(internal[3]),
        left_value=float(leaves[0]),
        right_value=float(leaves[1]),
    )


def _parse_feature(node, base_width: int, base_height: int) -> HaarFeature:
    tilted = node.find("tilted")
    if tilted is not None and tilted.text and int(tilted.text.strip()) != 0:
        raise UnsupportedCascadeError("tilted Haar features are not supported")
    rects_node = node.find("rects")
    if rects_node is None:
        raise FormatError("cascade XML: feature without <rects>")
    rects = []
    for rect_node in rects_node.findall("_"):
        parts = (rect_node.text or "").split()
        if len(parts) != 5:
            raise FormatError(f"feature rect must have 5 values, got {parts!r}")
        x, y, w, h = (int(p) for p in parts[:4])
        weight = float(parts[4])
        if x < 0 or y < 0 or w <= 0 or h <= 0 \
                or x + w > base_width or y + h > base_height:
            raise FormatError(
                f"feature rect ({x},{y},{w},{h}) exceeds the "
                f"{base_width}x{base_height} base window")
        rects.append((x, y, w, h, weight))
    if not 2 <= len(rects) <= 3:
        raise FormatError(f"feature must have 2-3 rects, got {len(rects)}")
    weights = [r[4] for r in rects]
    if not all(abs(w) < float("inf") for w in weights):
        raise FormatError("feature weights must be finite")
    if min(weights) >= 0 or max(weights) <= 0:
        raise FormatError(f"feature weights must be of mixed sign, got {weights}")
    return HaarFeature(rects=tuple(rects))


def parse_cascade(text: str) -> Cascade:
    """Parse cascade XML text into an immutable Cascade."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise FormatError(f"cascade XML: {exc}") from None
    cascade = root.find("cascade") if root.tag == "opencv_storage" else root
    if cascade is None or cascade.tag != "cascade":
        raise FormatError("cascade XML: no <cascade> element")

    stage_type = _text(cascade, "stageType", "stageType")
    if stage_type != "BOOST":
        raise UnsupportedCascadeError(f"stageType {stage_type!r} (expected BOOST)")
    feature_type = _text(cascade, "featureType", "featureType")
    if feature_type != "HAAR":
        raise UnsupportedCascadeError(f"featureType {feature_type!r} (expected HAAR)")
    base_width = int(_text(cascade, "width", "width"))
    base_height = int(_text(cascade, "height", "height"))
    if base_width <= 0 or base_height <= 0:
        raise FormatError(f"bad base window {base_width}x{base_height}")

    features_node = cascade.find("features")
    if features_node is None:
        raise FormatError("cascade XML: missing <features>")
    features = tuple(
        _parse_feature(node, base_width, base_height)
        for node in features_node.findall("_")
    )

    stages_node = cascade.find("stages")
    if stages_node is None:
        raise FormatError("cascade XML: missing <stages>")
    stages = []
    for stage_node in stages_node.findall("_"):
        threshold = float(_text(stage_node, "stageThreshold", "stageThreshold"))
        weak_node = stage_node.find("weakClassifiers")
        if weak_node is None:
            raise FormatError("cascade XML: stage without <weakClassifiers>")
        stumps = tuple(_parse_stump(node, len(features))
                       for node in weak_node.findall("_"))
        if not stumps:
            raise FormatError("cascade XML: stage with no weak classifiers")
        stages.append(Stage(stage_threshold=threshold, weak_classifiers=stumps))
    if not stages:
        raise FormatError("cascade XML: no stages")

    return Cascade(base_width=base_width, base_height=base_height,
                   stages=tuple(stages), features=features)
