"""Catalog configurations shared by the test modules."""

from gradsoliton import SampleGrid, build_model
from gradsoliton.labels import ModelClass

# (test id, builder, params, chart)
CASES = [
    ("gaussian3", "gaussian", {"n": 3, "lam": 0.5}, None),
    ("sphere2", "round_sphere", {"n": 2}, None),
    ("sphere3", "round_sphere", {"n": 3}, None),
    ("sphere4", "round_sphere", {"n": 4}, None),
    ("cylinder3", "cylinder", {"n": 3}, None),
    ("cylinder4", "cylinder", {"n": 4}, None),
    ("hyperbolic3", "hyperbolic", {"n": 3}, None),
    ("hypcylinder3", "hyperbolic_cylinder", {"n": 3}, None),
    ("cigar", "cigar", {}, None),
    ("rigid", "einstein_product", {"m": 2, "k": 2}, None),
]

EXPECTED = {
    "gaussian3": ModelClass.FLAT,
    "sphere2": ModelClass.SPHERE_EINSTEIN,
    "sphere3": ModelClass.SPHERE_EINSTEIN,
    "sphere4": ModelClass.SPHERE_EINSTEIN,
    "cylinder3": ModelClass.SPHERE_SPLIT,
    "cylinder4": ModelClass.SPHERE_SPLIT,
    "hyperbolic3": ModelClass.HYPERBOLIC_EINSTEIN,
    "hypcylinder3": ModelClass.HYPERBOLIC_SPLIT,
    "cigar": ModelClass.INCONCLUSIVE,
    "rigid": ModelClass.RIGID,
}

IDS = [c[0] for c in CASES]

_cache: dict = {}


def instance(case_id: str):
    if case_id not in _cache:
        _, builder, params, chart = next(c for c in CASES if c[0] == case_id)
        _cache[case_id] = build_model(builder, params, chart)
    return _cache[case_id]


def grid_for(inst, count=12, seed=0, **kw):
    return SampleGrid.sample(inst.metric, count=count, seed=seed, **kw)
