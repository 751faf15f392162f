"""Parser for boosted Haar cascade XML files (stump classifiers only)."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .integral import rect_in_bounds


class CascadeParseError(ValueError):
    pass


class StageTypeError(CascadeParseError):
    pass


class FeatureTypeError(CascadeParseError):
    pass


class TreeDepthError(CascadeParseError):
    pass


class RectOutsideWindowError(CascadeParseError):
    pass


class FeatureIndexError(CascadeParseError):
    pass


class MalformedNumberError(CascadeParseError):
    pass


@dataclass(frozen=True)
class HaarRect:
    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple
    tilted: bool = False


@dataclass(frozen=True)
class WeakClassifier:
    feature_idx: int
    threshold: float
    leaf_left: float
    leaf_right: float


@dataclass(frozen=True)
class Stage:
    threshold: float
    weak: tuple


@dataclass(frozen=True)
class CascadeModel:
    window_w: int
    window_h: int
    stages: tuple
    features: tuple

    @property
    def n_tilted(self):
        return sum(1 for f in self.features if f.tilted)

    def summary(self):
        return {
            "window": [self.window_w, self.window_h],
            "stages": len(self.stages),
            "features": len(self.features),
            "tilted_features": self.n_tilted,
            "weak_classifiers": sum(len(s.weak) for s in self.stages),
        }


def toy_cascade_path():
    return Path(__file__).resolve().parent.parent / "data" / "toy_smile_cascade.xml"


def _child(el, tag, ctx):
    c = el.find(tag)
    if c is None:
        raise CascadeParseError(f"{ctx}: missing <{tag}>")
    return c


def _numbers(text, ctx, kind=float, count=None):
    parts = (text or "").split()
    try:
        vals = [kind(p) for p in parts]
    except ValueError:
        raise MalformedNumberError(f"{ctx}: malformed number in {text!r}") from None
    if count is not None and len(vals) != count:
        raise MalformedNumberError(f"{ctx}: expected {count} values, got {len(vals)} in {text!r}")
    return vals


def _int_text(el, tag, ctx):
    return _numbers(_child(el, tag, ctx).text, f"{ctx}/{tag}", int, 1)[0]


def _items(el):
    return list(el.findall("_"))


def _parse_weak(el, ctx):
    nodes = _child(el, "internalNodes", ctx).text
    leaves = _child(el, "leafValues", ctx).text
    tokens = (nodes or "").split()
    if len(tokens) != 4:
        # every internal node takes four numbers; more than one node means depth > 1
        if len(tokens) > 4 and len(tokens) % 4 == 0:
            raise TreeDepthError(f"{ctx}/internalNodes: {len(tokens) // 4} nodes, only stumps supported")
        raise MalformedNumberError(f"{ctx}/internalNodes: expected 4 values, got {len(tokens)}")
    left, right, fidx = _numbers(" ".join(tokens[:3]), f"{ctx}/internalNodes", int)
    (thr,) = _numbers(tokens[3], f"{ctx}/internalNodes")
    if left > 0 or right > 0:
        raise TreeDepthError(f"{ctx}/internalNodes: child node reference, only stumps supported")
    leaf_vals = _numbers(leaves, f"{ctx}/leafValues")
    li, ri = -left, -right
    if max(li, ri) >= len(leaf_vals):
        raise TreeDepthError(f"{ctx}/leafValues: leaf index out of range for {len(leaf_vals)} leaves")
    if len(leaf_vals) != 2:
        raise TreeDepthError(f"{ctx}/leafValues: {len(leaf_vals)} leaves, stumps have exactly 2")
    return WeakClassifier(fidx, thr, leaf_vals[li], leaf_vals[ri])


def _parse_feature(el, ctx, win_w, win_h):
    tilted_el = el.find("tilted")
    tilted = False
    if tilted_el is not None:
        tilted = bool(_numbers(tilted_el.text, f"{ctx}/tilted", int, 1)[0])
    rects = []
    for j, r in enumerate(_items(_child(el, "rects", ctx))):
        rctx = f"{ctx}/rects/_[{j}]"
        tokens = (r.text or "").split()
        if len(tokens) != 5:
            raise MalformedNumberError(f"{rctx}: expected 'x y w h weight', got {r.text!r}")
        x, y, w, h = _numbers(" ".join(tokens[:4]), rctx, int)
        (weight,) = _numbers(tokens[4], rctx)
        if not rect_in_bounds((x, y, w, h), tilted, win_w, win_h):
            raise RectOutsideWindowError(f"{rctx}: rect {(x, y, w, h)} outside {win_w}x{win_h} window")
        rects.append(HaarRect(x, y, w, h, weight))
    if not 1 <= len(rects) <= 3:
        raise CascadeParseError(f"{ctx}/rects: {len(rects)} rects, expected 1-3")
    if all(r.weight == 0 for r in rects):
        raise CascadeParseError(f"{ctx}/rects: all weights zero")
    return HaarFeature(tuple(rects), tilted)


def parse_cascade_string(text, source="<string>") -> CascadeModel:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise CascadeParseError(f"{source}:{line}:{col}: malformed XML ({exc})") from None
    cascade = root if root.tag == "cascade" else root.find("cascade")
    if cascade is None:
        raise CascadeParseError(f"{source}: no <cascade> element")
    ctx = "cascade"
    stage_type = (_child(cascade, "stageType", ctx).text or "").strip()
    if stage_type != "BOOST":
        raise StageTypeError(f"{ctx}/stageType: {stage_type!r}, only BOOST supported")
    feature_type = (_child(cascade, "featureType", ctx).text or "").strip()
    if feature_type != "HAAR":
        raise FeatureTypeError(f"{ctx}/featureType: {feature_type!r}, only HAAR supported")
    win_w = _int_text(cascade, "width", ctx)
    win_h = _int_text(cascade, "height", ctx)
    if win_w < 1 or win_h < 1:
        raise CascadeParseError(f"{ctx}: window {win_w}x{win_h} must be positive")

    features = tuple(
        _parse_feature(f, f"{ctx}/features/_[{i}]", win_w, win_h)
        for i, f in enumerate(_items(_child(cascade, "features", ctx)))
    )
    stages = []
    for i, s in enumerate(_items(_child(cascade, "stages", ctx))):
        sctx = f"{ctx}/stages/_[{i}]"
        thr = _numbers(_child(s, "stageThreshold", sctx).text, f"{sctx}/stageThreshold", float, 1)[0]
        weak = []
        for j, w in enumerate(_items(_child(s, "weakClassifiers", sctx))):
            wc = _parse_weak(w, f"{sctx}/weakClassifiers/_[{j}]")
            if not 0 <= wc.feature_idx < len(features):
                raise FeatureIndexError(
                    f"{sctx}/weakClassifiers/_[{j}]: feature index {wc.feature_idx} "
                    f"out of range for {len(features)} features"
                )
            weak.append(wc)
        if not weak:
            raise CascadeParseError(f"{sctx}: stage has no weak classifiers")
        stages.append(Stage(thr, tuple(weak)))
    if not stages:
        raise CascadeParseError(f"{ctx}/stages: at least one stage required")
    return CascadeModel(win_w, win_h, tuple(stages), features)


def parse_cascade_xml(path) -> CascadeModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CascadeParseError(f"{path}: {exc}") from None
    return parse_cascade_string(text, str(path))
