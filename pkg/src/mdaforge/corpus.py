"""Corpus model: code samples grouped by project domain, plus splitting and batching.

A corpus holds one domain per project. Source domains (labeled) occupy
indices ``0..M-1`` ordered lexicographically by project name; the target
domain (whose labels must never feed a training loss) is always index ``M``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .labels import CWE_IDS, CWE_REGISTRY, CweLabel, lookup_label

MAX_TOKENS = 800

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    """Raised for malformed corpus directories, files or records."""


def tokenize(code: str, max_tokens: int = MAX_TOKENS) -> tuple[str, ...]:
    """Split source text into word and punctuation tokens.

    Words are maximal ``\\w+`` runs; every other non-space character
    becomes its own token. Case is preserved. The result is truncated
    to ``max_tokens``.
    """
    return tuple(_TOKEN_RE.findall(code)[:max_tokens])


@dataclass(frozen=True)
class Sample:
    """One code function: its tokens, optional label and owning domain."""

    tokens: tuple[str, ...]
    label: CweLabel | None
    domain: int

    def masked(self) -> "Sample":
        """Copy with the label withheld (target samples inside batches)."""
        if self.label is None:
            return self
        return Sample(self.tokens, None, self.domain)


@dataclass
class Corpus:
    """Samples grouped by domain index, with the classification label space.

    ``projects`` lists source project names (lexicographic) followed by the
    target project; ``by_domain[d]`` holds the samples of domain ``d``.
    ``labels`` is the ordered label space used for classifier outputs and
    confusion matrices.
    """

    projects: tuple[str, ...]
    by_domain: tuple[tuple[Sample, ...], ...]
    labels: tuple[str, ...]
    provenance: dict

    def __post_init__(self) -> None:
        if len(self.projects) < 2:
            raise CorpusError("need >=2 projects (at least one source and the target)")
        if len(self.by_domain) != len(self.projects):
            raise CorpusError("domain group count does not match project count")
        known = set(self.labels)
        if not known.issubset(CWE_IDS):
            raise CorpusError("corpus label space contains ids outside the registry")
        for d, group in enumerate(self.by_domain):
            if not group:
                raise CorpusError(f"domain {self.projects[d]!r} has no samples")
            for s in group:
                if s.domain != d:
                    raise CorpusError(f"sample filed under domain {d} claims domain {s.domain}")
                if d < self.num_sources and s.label is None:
                    raise CorpusError(f"unlabeled sample in source domain {self.projects[d]!r}")
                if s.label is not None and s.label.id not in known:
                    raise CorpusError(f"label {s.label.id} outside the corpus label space")

    @property
    def num_sources(self) -> int:
        return len(self.projects) - 1

    @property
    def target_domain(self) -> int:
        return len(self.projects) - 1

    @property
    def target_project(self) -> str:
        return self.projects[-1]

    def target_samples(self) -> tuple[Sample, ...]:
        return self.by_domain[self.target_domain]

    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.by_domain)

    def label_index(self, cwe_id: str) -> int:
        return self.labels.index(cwe_id)


def load_corpus(path: str | Path, target_project: str) -> Corpus:
    """Load a directory of per-project JSONL files into a corpus.

    Each ``<project>.jsonl`` line must be an object with keys ``project``,
    ``code`` and ``cwe``. ``target_project`` names the file that becomes
    the target domain; all other projects become sources in lexicographic
    order. The label space is the full registry.
    """
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"corpus path is not a directory: {root}")
    files = {p.stem: p for p in sorted(root.glob("*.jsonl"))}
    if len(files) < 2:
        raise CorpusError(f"need >=2 projects, found {len(files)} in {root}")
    if target_project not in files:
        raise CorpusError(f"target project {target_project!r} not found in {root}")

    sources = sorted(name for name in files if name != target_project)
    projects = tuple(sources) + (target_project,)

    groups: list[tuple[Sample, ...]] = []
    for domain, name in enumerate(projects):
        groups.append(_read_project(files[name], name, domain))

    return Corpus(
        projects=projects,
        by_domain=tuple(groups),
        labels=_label_space(root),
        provenance={"kind": "jsonl", "path": str(root), "target": target_project},
    )


def _label_space(root: Path) -> tuple[str, ...]:
    """Full registry, unless a generator provenance sidecar restricts it.

    Synthetic corpus directories carry a provenance.json naming how many of
    the registry's classes were generated; honoring it makes the
    dump-then-load round trip lossless, classifier width included.
    """
    prov_path = root / "provenance.json"
    if not prov_path.exists():
        return CWE_IDS
    try:
        prov = json.loads(prov_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"provenance.json: malformed JSON ({exc.msg})") from None
    classes = prov.get("config", {}).get("classes")
    if classes is None:
        return CWE_IDS
    if not isinstance(classes, int) or not 1 <= classes <= len(CWE_IDS):
        raise CorpusError(f"provenance.json: invalid class count {classes!r}")
    return CWE_IDS[:classes]


def _read_project(file: Path, project: str, domain: int) -> tuple[Sample, ...]:
    samples = []
    with file.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{file.name}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON ({exc.msg})") from None
            for key in ("project", "code", "cwe"):
                if key not in record:
                    raise CorpusError(f"{where}: missing key {key!r}")
            cwe = record["cwe"]
            if cwe not in CWE_REGISTRY:
                raise CorpusError(f"{where}: unknown CWE id {cwe!r}")
            tokens = tokenize(record["code"])
            if not tokens:
                raise CorpusError(f"{where}: code tokenizes to nothing")
            samples.append(Sample(tokens, lookup_label(cwe), domain))
    if not samples:
        raise CorpusError(f"{file.name}: project {project!r} has no samples")
    return tuple(samples)


def split_target(corpus: Corpus, seed: int) -> tuple[tuple[Sample, ...], tuple[Sample, ...]]:
    """Shuffle the target domain and split it one third / two thirds.

    The first ``ceil(n/3)`` shuffled samples become the validation set
    (labels used only for model selection), the rest the test set.
    """
    target = corpus.target_samples()
    n = len(target)
    if n < 3:
        raise CorpusError(f"target domain has {n} samples, need >=3 to split")
    order = np.random.default_rng(seed).permutation(n)
    n_val = math.ceil(n / 3)
    val = tuple(target[i] for i in order[:n_val])
    test = tuple(target[i] for i in order[n_val:])
    return val, test


@dataclass(frozen=True)
class Batch:
    """One training step's worth of samples, ``per_domain`` from each domain.

    ``indices_by_domain[d]`` indexes into ``corpus.by_domain[d]``;
    ``samples_by_domain`` carries the same samples with target labels masked.
    """

    indices_by_domain: tuple[tuple[int, ...], ...]
    samples_by_domain: tuple[tuple[Sample, ...], ...]

    def all_samples(self) -> list[Sample]:
        return [s for group in self.samples_by_domain for s in group]


def make_batches(corpus: Corpus, per_domain: int, seed: int) -> Iterator[Batch]:
    """Yield one epoch of batches with ``per_domain`` samples from every domain.

    Each domain is cycled independently with a reshuffle when exhausted, so
    small domains repeat within an epoch. One epoch is
    ``ceil(max_d n_d / per_domain)`` batches. Deterministic in ``seed``.
    """
    if per_domain < 2:
        raise CorpusError("per_domain must be >=2 (pairwise kernel terms need two points)")
    sizes = corpus.domain_sizes()
    for d, n in enumerate(sizes):
        if n < 2:
            raise CorpusError(f"domain {corpus.projects[d]!r} has {n} samples, need >=2")

    num_batches = math.ceil(max(sizes) / per_domain)
    cursors = []
    for d, n in enumerate(sizes):
        rng = np.random.default_rng([seed, d])
        cursors.append(_DomainCursor(rng, n))

    target = corpus.target_domain
    for _ in range(num_batches):
        idx_groups = []
        sample_groups = []
        for d, cursor in enumerate(cursors):
            idx = cursor.take(per_domain)
            group = tuple(corpus.by_domain[d][i] for i in idx)
            if d == target:
                group = tuple(s.masked() for s in group)
            idx_groups.append(tuple(idx))
            sample_groups.append(group)
        yield Batch(tuple(idx_groups), tuple(sample_groups))


class _DomainCursor:
    """Independent shuffled cycling over one domain's sample indices."""

    def __init__(self, rng: np.random.Generator, n: int):
        self._rng = rng
        self._n = n
        self._order = rng.permutation(n)
        self._pos = 0

    def take(self, k: int) -> list[int]:
        out: list[int] = []
        while len(out) < k:
            if self._pos == self._n:
                self._order = self._rng.permutation(self._n)
                self._pos = 0
            room = min(k - len(out), self._n - self._pos)
            out.extend(int(i) for i in self._order[self._pos:self._pos + room])
            self._pos += room
        return out
