"""Exact JSON serialization of weights and sign tables."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from gmpy2 import mpfr, mpq

from .certified import CertifiedValue
from .measure import (
    Construction,
    ConstructionParams,
    SignEntry,
    SignTable,
    StepMeasure,
    _merge_runs,
    build_w0,
)
from .triadic import TriadicInterval, all_collections, middle_third, parse_rational, rational_str

FORMAT_VERSION = 1


class WeightFileError(ValueError):
    """Malformed or inconsistent weight document."""


def _mpfr_str(x) -> str:
    return rational_str(mpq(x))


def construction_to_dict(c: Construction) -> dict:
    p = c.params
    signs = []
    for J in sorted(c.signs):
        e = c.signs[J]
        signs.append({
            "scale": J.scale,
            "index": J.index,
            "eps": e.eps,
            "defaulted": e.defaulted,
            "decider": [_mpfr_str(e.decider.mid), _mpfr_str(e.decider.rad)],
        })
    return {
        "format": FORMAT_VERSION,
        "k": p.k,
        "depth": p.depth,
        "base_support_mode": p.base_support,
        "precision_bits": p.precision,
        "tolerance": rational_str(p.tau),
        "pieces": [
            {"a": rational_str(a), "b": rational_str(b), "density": rational_str(d)}
            for a, b, d in c.weight.pieces
        ],
        "signs": signs,
    }


def dumps(c: Construction) -> str:
    return json.dumps(construction_to_dict(c), indent=1) + "\n"


def save(c: Construction, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(c), encoding="utf-8")


def stages_from_weight(params: ConstructionParams, w: StepMeasure, collections) -> list:
    """Intermediate measures implied by the final one.

    Stage ``i`` agrees with ``w`` off the stage-``i+1`` intervals and is uniform
    on each of them with the same mass.
    """
    stages = []
    for i in range(params.depth):
        nxt = collections[i + 1][1]
        outside = w.without(_merge_runs(nxt))
        pieces = list(outside.pieces)
        pieces += [(K.left, K.right, w.mass(K) / K.length) for K in nxt if w.mass(K) > 0]
        stages.append(StepMeasure(pieces))
    stages.append(w)
    return stages


def construction_from_dict(data: dict) -> Construction:
    try:
        params = ConstructionParams(
            k=int(data["k"]),
            depth=int(data["depth"]),
            precision=int(data.get("precision_bits", 128)),
            tolerance=parse_rational(data["tolerance"]) if "tolerance" in data else None,
            base_support=data.get("base_support_mode", "recursive"),
        )
        w = StepMeasure(
            (parse_rational(p["a"]), parse_rational(p["b"]), parse_rational(p["density"]))
            for p in data["pieces"]
        )
        signs = SignTable()
        for s in data["signs"]:
            J = TriadicInterval(int(s["scale"]), int(s["index"]))
            eps = int(s["eps"])
            if eps not in (-1, 1):
                raise WeightFileError(f"bad sign {eps} for {J}")
            if "decider" in s:
                mid, rad = (parse_rational(v) for v in s["decider"])
                dec = CertifiedValue(mpfr(mid, params.precision), mpfr(rad, params.precision), params.precision)
            else:
                dec = CertifiedValue.exact(0, params.precision)
            signs[J] = SignEntry(eps, dec, bool(s.get("defaulted", False)))
    except (KeyError, TypeError) as exc:
        raise WeightFileError(f"malformed weight document: {exc}") from exc
    cols = all_collections(params.k, params.depth)
    _, (key, _) = build_w0(params.k, params.base_support, params.precision)
    missing = [middle_third(K) for i in range(1, params.depth + 1) for K in cols[i][1]
               if middle_third(K) not in signs]
    if key not in signs:
        missing.insert(0, key)
    if missing:
        raise WeightFileError(f"sign table lacks {len(missing)} entries, first {missing[0]}")
    return Construction(params, stages_from_weight(params, w, cols), signs, cols)


def loads(text: str) -> Construction:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"not a JSON document: {exc}") from exc
    if not isinstance(data, dict):
        raise WeightFileError("weight document must be an object")
    return construction_from_dict(data)


def load(path: Union[str, Path]) -> Construction:
    return loads(Path(path).read_text(encoding="utf-8"))
