"""Seeded procedural shape corpus.

A corpus is a JSON list of shape descriptions, each ``{"kind", "params",
"transforms"}`` as accepted by :func:`pseudosign.field.from_dict`. Shapes are
closed (signed-capable) and kept inside ``[-0.9, 0.9]^3``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .field import FieldSource, from_dict

PRIMITIVES = ("sphere", "box", "torus")
KINDS = PRIMITIVES + ("union", "rounded-box")


def _r(rng: np.random.Generator, lo: float, hi: float) -> float:
    return round(float(rng.uniform(lo, hi)), 4)


def _primitive(rng: np.random.Generator, size: float) -> tuple[dict[str, Any], float]:
    """Random primitive description scaled by ``size`` and its bounding radius."""
    kind = PRIMITIVES[rng.integers(len(PRIMITIVES))]
    if kind == "sphere":
        r = _r(rng, 0.55, 0.95) * size
        return {"kind": "sphere", "params": {"radius": round(r, 4)}}, r
    if kind == "box":
        h = [round(_r(rng, 0.35, 0.8) * size, 4) for _ in range(3)]
        return {"kind": "box", "params": {"half_extents": h}}, float(np.linalg.norm(h))
    major = _r(rng, 0.55, 0.8) * size
    minor = _r(rng, 0.18, 0.35) * size
    axis = "xyz"[rng.integers(3)]
    return ({"kind": "torus", "params": {"major": round(major, 4), "minor": round(minor, 4), "axis": axis}},
            major + minor)


def random_shape(rng: np.random.Generator) -> dict[str, Any]:
    kind = KINDS[rng.integers(len(KINDS))]
    if kind in PRIMITIVES:
        desc, radius = _primitive(rng, 0.4)
    elif kind == "rounded-box":
        h = [_r(rng, 0.2, 0.32) for _ in range(3)]
        r = round(float(np.linalg.norm(h)) * _r(rng, 0.75, 0.9), 4)
        desc = {"kind": "intersection", "params": {"children": [
            {"kind": "box", "params": {"half_extents": h}},
            {"kind": "sphere", "params": {"radius": r}}]}}
        radius = r
    else:
        children = []
        radius = 0.0
        for _ in range(int(rng.integers(2, 4))):
            child, cr = _primitive(rng, 0.24)
            off = [_r(rng, -0.24, 0.24) for _ in range(3)]
            child["transforms"] = [{"translate": off}]
            children.append(child)
            radius = max(radius, cr + float(np.linalg.norm(off)))
        desc = {"kind": "union", "params": {"children": children}}
    if radius > 0.85:
        desc["transforms"] = desc.get("transforms", []) + [{"scale": round(0.85 / radius, 4)}]
        radius = 0.85
    slack = 0.9 - radius
    if slack > 0.02:
        desc["transforms"] = desc.get("transforms", []) + [
            {"translate": [_r(rng, -slack, slack) * 0.5 for _ in range(3)]}]
    desc.setdefault("transforms", [])
    return desc


def generate_corpus(count: int, seed: int) -> list[dict[str, Any]]:
    rng = np.random.default_rng(seed)
    return [random_shape(rng) for _ in range(count)]


def car_like() -> dict[str, Any]:
    """Union of a body, a cabin and four wheels, roughly car proportions."""
    wheels = []
    for x in (-0.5, 0.5):
        for z in (-0.33, 0.33):
            wheels.append({"kind": "torus", "params": {"major": 0.1, "minor": 0.06, "axis": "z"},
                           "transforms": [{"translate": [x, -0.22, z]}]})
    return {"kind": "union", "params": {"children": [
        {"kind": "box", "params": {"half_extents": [0.8, 0.14, 0.33]}, "transforms": [{"translate": [0, -0.05, 0]}]},
        {"kind": "box", "params": {"half_extents": [0.4, 0.13, 0.3]}, "transforms": [{"translate": [-0.05, 0.2, 0]}]},
        *wheels]}, "transforms": []}


def dumps(corpus: list[dict[str, Any]]) -> str:
    return json.dumps(corpus, indent=1, sort_keys=True) + "\n"


def save_corpus(corpus: list[dict[str, Any]], path: str | Path) -> None:
    Path(path).write_text(dumps(corpus), encoding="utf-8")


def load_corpus(path: str | Path) -> list[FieldSource]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: corpus must be a JSON list of shapes")
    return [from_dict(d) for d in data]
