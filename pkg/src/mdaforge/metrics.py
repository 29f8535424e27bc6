"""Confusion-matrix metrics for multi-class defect category prediction.

Accuracy, correlation and agreement use the standard multi-class
generalizations (trace accuracy, R_K correlation, multi-class chance
agreement); restricted to two classes they reduce exactly to the familiar
binary formulas, which the test suite verifies by brute force. All 0/0
cases resolve to 0 so evaluation stays total on rare classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

# CWE Top-25 risk scores of the four severe categories tracked by the
# severity-weighted metrics.
SEVERITY_SCORES: dict[str, float] = {
    "CWE-89": 22.11,
    "CWE-190": 6.53,
    "CWE-400": 3.56,
    "CWE-78": 17.53,
}

METRIC_NAMES = ("acc", "mcc", "kappa", "wf1", "wp", "wr")


@dataclass
class ConfusionMatrix:
    """K x K counts, rows = true class, columns = predicted class."""

    counts: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if c.shape[0] != len(self.labels):
            raise ValueError(f"{c.shape[0]} classes vs {len(self.labels)} labels")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        self.counts = c

    @classmethod
    def from_predictions(cls, true_idx: Sequence[int], pred_idx: Sequence[int],
                         labels: Sequence[str]) -> "ConfusionMatrix":
        k = len(labels)
        counts = np.zeros((k, k), dtype=np.int64)
        t = np.asarray(true_idx, dtype=np.intp)
        p = np.asarray(pred_idx, dtype=np.intp)
        if t.shape != p.shape:
            raise ValueError("true and predicted index arrays differ in length")
        np.add.at(counts, (t, p), 1)
        return cls(counts, tuple(labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _require_nonempty(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")


def accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of correctly classified samples: trace over total."""
    _require_nonempty(cm)
    return float(np.trace(cm.counts)) / cm.total


def mcc(cm: ConfusionMatrix) -> float:
    """Multi-class correlation coefficient in [-1, 1]; 0 when undefined."""
    _require_nonempty(cm)
    c = cm.counts.astype(np.float64)
    s = c.sum()
    trace = np.trace(c)
    pred = c.sum(axis=0)
    true = c.sum(axis=1)
    numerator = trace * s - float(pred @ true)
    denominator = np.sqrt(s * s - float(pred @ pred)) * np.sqrt(s * s - float(true @ true))
    if denominator == 0.0:
        return 0.0
    return float(numerator / denominator)


def kappa(cm: ConfusionMatrix) -> float:
    """Agreement corrected for chance: (acc - q) / (1 - q).

    q is the expected agreement of independent marginals. When q == 1 the
    only consistent values are 1 for a perfect matrix and 0 otherwise.
    """
    _require_nonempty(cm)
    c = cm.counts.astype(np.float64)
    s = c.sum()
    acc = np.trace(c) / s
    q = float(c.sum(axis=1) @ c.sum(axis=0)) / (s * s)
    if q == 1.0:
        return 1.0 if acc == 1.0 else 0.0
    return float((acc - q) / (1.0 - q))


def per_class_prf(cm: ConfusionMatrix, index: int) -> tuple[float, float, float]:
    """One-vs-rest precision, recall and F1 for class ``index``; 0/0 -> 0."""
    if not 0 <= index < len(cm.labels):
        raise IndexError(f"class index {index} outside [0, {len(cm.labels)})")
    c = cm.counts
    tp = float(c[index, index])
    fp = float(c[:, index].sum() - tp)
    fn = float(c[index, :].sum() - tp)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def severity_weights(scores: Mapping[str, float] = SEVERITY_SCORES) -> dict[str, float]:
    """Risk scores normalized to sum to 1 over the severe categories."""
    total = sum(scores.values())
    return {cwe: score / total for cwe, score in scores.items()}


def severity_weighted_prf(per_class: Mapping[str, tuple[float, float, float]],
                          scores: Mapping[str, float] = SEVERITY_SCORES,
                          ) -> tuple[float, float, float]:
    """Severity-weighted precision/recall/F1 over the four severe categories.

    A category absent from ``per_class`` contributes zero.
    """
    weights = severity_weights(scores)
    wp = wr = wf1 = 0.0
    for cwe, weight in weights.items():
        p, r, f1 = per_class.get(cwe, (0.0, 0.0, 0.0))
        wp += weight * p
        wr += weight * r
        wf1 += weight * f1
    return wp, wr, wf1


@dataclass
class RunResult:
    """Metrics of one (method, target project, seed) evaluation run."""

    method: str
    target: str
    seed: int
    metrics: dict[str, float]
    per_class: dict[str, dict[str, float]]
    confusion: list[list[int]]
    labels: list[str]
    config_hash: str = ""

    @classmethod
    def from_confusion(cls, method: str, target: str, seed: int, cm: ConfusionMatrix,
                       config_hash: str = "") -> "RunResult":
        per_class = {}
        for i, cwe in enumerate(cm.labels):
            p, r, f1 = per_class_prf(cm, i)
            per_class[cwe] = {"p": p, "r": r, "f1": f1}
        triples = {cwe: (v["p"], v["r"], v["f1"]) for cwe, v in per_class.items()}
        wp, wr, wf1 = severity_weighted_prf(triples)
        return cls(
            method=method,
            target=target,
            seed=seed,
            metrics={
                "acc": accuracy(cm),
                "mcc": mcc(cm),
                "kappa": kappa(cm),
                "wf1": wf1,
                "wp": wp,
                "wr": wr,
            },
            per_class=per_class,
            confusion=cm.counts.tolist(),
            labels=list(cm.labels),
            config_hash=config_hash,
        )

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        data = json.loads(text)
        return cls(**data)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "RunResult":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
