"""Statistical comparison of methods: effect sizes and mean-clustering ranks.

Methods are ranked by recursively splitting the mean-sorted sequence of
score groups at the point that maximizes the between-group sum of squares;
a split only stands when the effect size between the two sides is
non-negligible (|d| > 0.2). Groups that end up in the same leaf share a
rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPLIT_THRESHOLD = 0.2

# Magnitude labels for |d|: ties at 0.2/0.5/0.8 take the smaller label.
_MAGNITUDES = ((0.2, "N"), (0.5, "S"), (0.8, "M"))


def effect_magnitude(d: float) -> str:
    a = abs(d)
    for bound, label in _MAGNITUDES:
        if a <= bound:
            return label
    return "L"


def cohens_d(a: Sequence[float], b: Sequence[float]) -> tuple[float, str]:
    """Effect size (mean(a) - mean(b)) / pooled std, with its magnitude label.

    Degenerate zero-variance inputs: equal means give d = 0, unequal means
    give a signed infinity (label L).
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise ValueError(f"cohens_d needs >=2 scores per side, got {x.size} and {y.size}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("scores must be finite")
    diff = float(x.mean() - y.mean())
    pooled = math.sqrt(((x.size - 1) * x.var(ddof=1) + (y.size - 1) * y.var(ddof=1))
                       / (x.size + y.size - 2))
    if pooled == 0.0:
        d = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        d = diff / pooled
    return d, effect_magnitude(d)


@dataclass(frozen=True)
class ScoreGroup:
    """One method's scores across target projects / seeds."""

    method: str
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.scores) < 2:
            raise ValueError(f"group {self.method!r} needs >=2 scores")
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError(f"group {self.method!r} has non-finite scores")

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))


@dataclass(frozen=True)
class RankEntry:
    rank: int
    methods: tuple[str, ...]
    mean: float


@dataclass(frozen=True)
class RankTable:
    entries: tuple[RankEntry, ...]

    def to_dict(self) -> dict:
        return {
            "ranks": [
                {"rank": e.rank, "methods": list(e.methods), "mean": e.mean}
                for e in self.entries
            ]
        }

    def to_text(self, pairwise: Sequence[tuple[str, str, float, str]] = ()) -> str:
        lines = [f"{'rank':>4}  {'mean':>10}  methods"]
        for e in self.entries:
            lines.append(f"{e.rank:>4}  {e.mean:>10.6f}  {', '.join(e.methods)}")
        if pairwise:
            lines.append("")
            lines.append("pairwise effect size (row vs next-ranked):")
            for a, b, d, label in pairwise:
                lines.append(f"  {a} vs {b}: d = {d:+.4f} ({label})")
        return "\n".join(lines) + "\n"


def _pooled(groups: Sequence[ScoreGroup]) -> np.ndarray:
    return np.concatenate([np.asarray(g.scores, dtype=np.float64) for g in groups])


def _best_split(groups: Sequence[ScoreGroup]) -> int:
    """Split index maximizing the between-group sum of squares of pooled scores."""
    scores = _pooled(groups)
    grand_mean = scores.mean()
    best_i, best_b = 1, -math.inf
    for i in range(1, len(groups)):
        left = _pooled(groups[:i])
        right = _pooled(groups[i:])
        b = (left.size * (left.mean() - grand_mean) ** 2
             + right.size * (right.mean() - grand_mean) ** 2)
        if b > best_b:
            best_i, best_b = i, b
    return best_i


def _cluster(groups: list[ScoreGroup]) -> list[list[ScoreGroup]]:
    if len(groups) == 1:
        return [groups]
    i = _best_split(groups)
    d, _ = cohens_d(_pooled(groups[:i]), _pooled(groups[i:]))
    if abs(d) <= SPLIT_THRESHOLD:
        return [groups]
    return _cluster(groups[:i]) + _cluster(groups[i:])


def scott_knott_esd(groups: Sequence[ScoreGroup]) -> RankTable:
    """Rank score groups; groups whose difference is negligible share a rank."""
    if not groups:
        raise ValueError("need at least one score group")
    names = [g.method for g in groups]
    if len(set(names)) != len(names):
        raise ValueError("duplicate method names; pool their scores first")
    ordered = sorted(groups, key=lambda g: -g.mean)
    clusters = _cluster(list(ordered))
    entries = []
    for rank, cluster in enumerate(clusters, start=1):
        entries.append(RankEntry(
            rank=rank,
            methods=tuple(g.method for g in cluster),
            mean=float(_pooled(cluster).mean()),
        ))
    return RankTable(tuple(entries))
