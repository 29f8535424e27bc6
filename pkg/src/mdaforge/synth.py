"""Synthetic multi-project corpus generation with controllable domain shift.

Every class has a base token distribution shared by all domains. Source
domain ``d`` samples its tokens from ``(1 - shift[d]) * base + shift[d] *
private_d`` where ``private_d`` is a class-independent distribution over a
vocabulary block owned by that domain. ``shift[d] = 0`` therefore makes the
source statistically identical to the target, and values near 1 bury the
class signal under domain-private noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .corpus import Corpus, CorpusError, Sample
from .labels import CWE_IDS, lookup_label

TARGET_NAME = "target"


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; every field must appear explicitly in config files."""

    classes: int
    sources: int
    samples_per_class: int
    vocab_size: int
    shift: tuple[float, ...]
    tokens_per_sample: int
    signal_strength: float
    seed: int

    def __post_init__(self) -> None:
        if not 1 <= self.classes <= len(CWE_IDS):
            raise ValueError(f"classes must be in [1, {len(CWE_IDS)}], got {self.classes}")
        if self.sources < 1:
            raise ValueError("need at least one source domain")
        if len(self.shift) != self.sources:
            raise ValueError(f"shift has {len(self.shift)} entries for {self.sources} sources")
        for delta in self.shift:
            if not 0.0 <= delta <= 1.0:
                raise ValueError(f"shift intensity {delta} outside [0, 1]")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >=1")
        if self.tokens_per_sample < 1:
            raise ValueError("tokens_per_sample must be >=1")
        if not 0.0 < self.signal_strength <= 1.0:
            raise ValueError("signal_strength must be in (0, 1]")
        # Need one token block per class, one per source, plus a shared pool.
        minimum = 2 * self.classes + self.sources + 1
        if self.vocab_size < minimum:
            raise ValueError(f"vocab_size {self.vocab_size} too small, need >= {minimum}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        required = {f.name for f in fields(cls)}
        missing = required - data.keys()
        if missing:
            raise ValueError(f"synth config missing fields: {sorted(missing)}")
        extra = data.keys() - required
        if extra:
            raise ValueError(f"synth config has unknown fields: {sorted(extra)}")
        data["shift"] = tuple(float(x) for x in data["shift"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "sources": self.sources,
            "samples_per_class": self.samples_per_class,
            "vocab_size": self.vocab_size,
            "shift": list(self.shift),
            "tokens_per_sample": self.tokens_per_sample,
            "signal_strength": self.signal_strength,
            "seed": self.seed,
        }


def _distributions(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Base per-class and private per-source token distributions.

    The vocabulary is partitioned into one signal block per class, one
    private block per source and a shared background pool. Block layout is
    a pure function of the config, not of the RNG.
    """
    v = cfg.vocab_size
    class_block = max(1, int(v * 0.4) // cfg.classes)
    private_block = max(1, int(v * 0.3) // cfg.sources)
    shared_start = cfg.classes * class_block + cfg.sources * private_block
    if shared_start >= v:
        raise ValueError("vocab_size too small for the block layout")
    shared = np.arange(shared_start, v)

    base = np.zeros((cfg.classes, v))
    for c in range(cfg.classes):
        block = np.arange(c * class_block, (c + 1) * class_block)
        base[c, block] = cfg.signal_strength / class_block
        base[c, shared] = (1.0 - cfg.signal_strength) / len(shared)

    private = np.zeros((cfg.sources, v))
    offset = cfg.classes * class_block
    for d in range(cfg.sources):
        block = np.arange(offset + d * private_block, offset + (d + 1) * private_block)
        private[d, block] = 1.0 / private_block
    return base, private


def synth_corpus(cfg: SynthConfig) -> Corpus:
    """Generate a deterministic corpus of ``sources + 1`` synthetic projects."""
    base, private = _distributions(cfg)
    labels = CWE_IDS[: cfg.classes]

    project_names = tuple(f"source_{d:02d}" for d in range(cfg.sources)) + (TARGET_NAME,)
    deltas = tuple(cfg.shift) + (0.0,)

    groups: list[tuple[Sample, ...]] = []
    for domain, delta in enumerate(deltas):
        rng = np.random.default_rng([cfg.seed, 101, domain])
        samples = []
        for c in range(cfg.classes):
            mix = (1.0 - delta) * base[c]
            if delta > 0.0:
                mix = mix + delta * private[domain]
            for _ in range(cfg.samples_per_class):
                token_ids = rng.choice(cfg.vocab_size, size=cfg.tokens_per_sample, p=mix)
                tokens = tuple(f"t{k:04d}" for k in token_ids)
                samples.append(Sample(tokens, lookup_label(labels[c]), domain))
        groups.append(tuple(samples))

    return Corpus(
        projects=project_names,
        by_domain=tuple(groups),
        labels=labels,
        provenance={"kind": "synth", "config": cfg.to_dict()},
    )


def write_corpus_jsonl(corpus: Corpus, out_dir: str | Path) -> list[Path]:
    """Dump a corpus as one JSONL file per project plus ``provenance.json``.

    Output is byte-identical across runs for the same corpus.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for domain, project in enumerate(corpus.projects):
        path = out / f"{project}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for sample in corpus.by_domain[domain]:
                if sample.label is None:
                    raise CorpusError("cannot serialize an unlabeled sample")
                record = {
                    "project": project,
                    "code": " ".join(sample.tokens),
                    "cwe": sample.label.id,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        written.append(path)
    prov = out / "provenance.json"
    prov.write_text(json.dumps(corpus.provenance, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    written.append(prov)
    return written
