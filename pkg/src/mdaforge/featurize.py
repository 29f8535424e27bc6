"""Signed hashed bag-of-n-grams featurization.

Token n-grams are folded into a fixed number of buckets with FNV-1a (64 bit),
using bit 63 of the hash as the sign of the contribution. The hash has no
process-dependent state, so the same tokens produce the same vector in every
process and on every platform.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

DEFAULT_DIM = 2048
MIN_DIM = 16

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Separator byte that cannot appear inside a token produced by the tokenizer.
_SEP = "\x1f"


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of ``data``."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def featurize(tokens: Sequence[str], dim: int = DEFAULT_DIM, ngram_max: int = 3) -> np.ndarray:
    """Map a token sequence to a unit-norm vector of ``dim`` signed n-gram counts.

    Counts of all n-grams for n in 1..ngram_max are accumulated into
    ``bucket = hash % dim`` with sign taken from the hash's top bit, then the
    vector is L2-normalized. Raises on empty input.
    """
    if dim < MIN_DIM:
        raise ValueError(f"dim must be >= {MIN_DIM}, got {dim}")
    if ngram_max not in (1, 2, 3):
        raise ValueError(f"ngram_max must be 1, 2 or 3, got {ngram_max}")
    toks = list(tokens)
    if not toks:
        raise ValueError("cannot featurize an empty token sequence")

    vec = np.zeros(dim)
    for n in range(1, ngram_max + 1):
        for i in range(len(toks) - n + 1):
            h = fnv1a64(_SEP.join(toks[i:i + n]).encode("utf-8"))
            sign = -1.0 if h >> 63 else 1.0
            vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Only reachable when every bucket's signed contributions cancel.
        raise ValueError("degenerate token sequence: all hashed counts cancel")
    return vec / norm


def featurize_all(samples_tokens: Sequence[Sequence[str]], dim: int = DEFAULT_DIM,
                  ngram_max: int = 3) -> np.ndarray:
    """Stack featurize() over many token sequences into an (n, dim) matrix."""
    if not samples_tokens:
        return np.zeros((0, dim))
    return np.stack([featurize(t, dim, ngram_max) for t in samples_tokens])
