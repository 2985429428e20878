"""Seeded sample grids and per-identity residual reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chart import STENCIL_STEP, MetricFamily
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class SampleGrid:
    points: np.ndarray
    seed: int
    margin: float

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def sample(
        cls,
        metric: MetricFamily,
        count: int = 40,
        seed: int = 0,
        bounds: Sequence[Sequence[float]] | None = None,
        radial: Sequence[float] | None = None,
        margin: float = 2 * STENCIL_STEP,
        max_tries: int = 200_000,
    ) -> "SampleGrid":
        """Uniform rejection sampling inside a coordinate box.

        ``radial`` = (r_lo, r_hi) additionally restricts the chart's radial
        function, when it has one. Every accepted point is valid with ``margin``
        to spare in each coordinate direction.
        """
        chart = metric.chart
        box = bounds if bounds is not None else chart.default_box
        if box is None:
            raise ValueError(f"no sampling box for {metric.name}")
        box = np.asarray(box, dtype=float)
        if box.shape != (chart.dimension, 2):
            raise ValueError(f"bounds must be {chart.dimension} (lo, hi) pairs")
        if radial is None and bounds is None:
            radial = chart.default_radial
        if radial is not None and chart.radial is None:
            raise ValueError(f"{metric.name} has no radial coordinate")
        rng = np.random.default_rng(seed)
        pts = []
        tries = 0
        while len(pts) < count:
            tries += 1
            if tries > max_tries:
                raise DomainError("could not place grid points inside the chart")
            x = rng.uniform(box[:, 0], box[:, 1])
            if radial is not None:
                r = chart.radial(x)
                if not (radial[0] <= r <= radial[1]):
                    continue
            if chart.is_valid(x, margin):
                pts.append(x)
        return cls(np.array(pts), seed, margin)

    @classmethod
    def from_points(cls, metric: MetricFamily, points, margin: float = 0.0) -> "SampleGrid":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        for x in pts:
            metric.chart.require_valid(x, margin)
        return cls(pts, -1, margin)


@dataclass(frozen=True, eq=False)
class ResidualReport:
    identity_id: str
    per_point: list[tuple[tuple[float, ...], float]]
    tolerance: float
    max_residual: float = field(init=False)
    verdict: bool = field(init=False)
    notes: str = ""

    def __post_init__(self):
        values = np.array([r for _, r in self.per_point], dtype=float)
        worst = float(np.max(values)) if values.size else 0.0  # NaN propagates
        object.__setattr__(self, "max_residual", float(worst))
        object.__setattr__(self, "verdict", bool(np.isfinite(worst) and worst < self.tolerance))

    @classmethod
    def build(cls, identity_id: str, points: np.ndarray, residuals, tolerance: float, notes: str = ""):
        per_point = [(tuple(float(c) for c in x), float(r)) for x, r in zip(points, np.asarray(residuals))]
        return cls(identity_id, per_point, float(tolerance), notes)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity_id,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "notes": self.notes,
            "per_point": [{"x": list(x), "residual": r} for x, r in self.per_point],
        }
