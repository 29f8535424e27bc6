"""Training losses and the domain-correlation weights.

Three scalar losses drive training: an adversarial domain-classification
cross-entropy (the gradient reversal layer between domain encoder and
discriminator flips the encoder's gradient), a weighted sum of squared
kernel mean discrepancies between each source and the target, and the
per-domain-averaged classification cross-entropy. The correlation weights
that scale the kernel terms come from the discriminator's output on target
samples and are treated as constants with respect to gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Node, Tape
from .networks import BoundModel, ModelBundle, discriminate_probs

CORRELATION_MODES = ("mean-softmax", "softmax-mean")

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel bandwidth selection: per-batch median heuristic or fixed."""

    bandwidth: str = "median"
    sigma: float | None = None

    def __post_init__(self) -> None:
        if self.bandwidth not in ("median", "fixed"):
            raise ValueError(f"bandwidth must be 'median' or 'fixed', got {self.bandwidth!r}")
        if self.bandwidth == "fixed":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("fixed bandwidth requires sigma > 0")


@dataclass(frozen=True)
class DomainCorrelation:
    """Simplex-valued weights over the M source domains."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("correlation weights must be a non-empty vector")
        if (w < 0).any():
            raise ValueError("correlation weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"correlation weights sum to {w.sum()}, expected 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, num_sources: int) -> "DomainCorrelation":
        return cls(np.full(num_sources, 1.0 / num_sources))


def softmax(v: np.ndarray) -> np.ndarray:
    """Stable softmax of a 1-d vector."""
    e = np.exp(v - v.max())
    return e / e.sum()


def _check_onehot(onehot: np.ndarray, what: str) -> None:
    if onehot.ndim != 2:
        raise ValueError(f"{what}: one-hot matrix must be 2-d")
    rows = onehot.sum(axis=1)
    if not np.allclose(rows, 1.0) or not np.isin(onehot, (0.0, 1.0)).all():
        raise ValueError(f"{what}: every row must be a one-hot label")


def nll_mean(tape: Tape, logprobs: Node, onehot: np.ndarray) -> Node:
    """Mean negative log-likelihood of the one-hot targets: -(1/n) sum y.logp."""
    if onehot.shape != logprobs.shape:
        raise ValueError(f"labels shape {onehot.shape} != log-prob shape {logprobs.shape}")
    picked = tape.scale(logprobs, onehot)
    return tape.scale(tape.sum(picked), -1.0 / logprobs.shape[0])


def domain_adversarial_loss(tape: Tape, bound: BoundModel, features: np.ndarray,
                            domain_onehot: np.ndarray, lam: float) -> Node:
    """Cross-entropy of the discriminator on all samples' domain labels.

    The reversal layer sits between the domain encoder and the
    discriminator, so minimizing this loss trains the discriminator while
    the encoder receives the lam-scaled, negated gradient. lam scales
    gradients only; the loss value itself is plain cross-entropy.
    """
    _check_onehot(domain_onehot, "domain labels")
    if domain_onehot.shape[0] != features.shape[0]:
        raise ValueError("every sample in the batch needs a domain label")
    x = tape.constant(features)
    reps = bound.encode_domains(x)
    logprobs = bound.discriminate(tape.grl(reps, lam))
    return nll_mean(tape, logprobs, domain_onehot)


def domain_correlation(bundle: ModelBundle, target_features: np.ndarray,
                       mode: str = "mean-softmax") -> DomainCorrelation:
    """Source-domain weights from the discriminator's view of target samples.

    Runs the discriminator (no reversal, no gradients) on the target
    features, keeps the M source columns of the probability matrix and
    reduces them to a weight vector. ``mean-softmax`` averages the rows and
    then applies softmax; ``softmax-mean`` re-normalizes each row over the
    source columns first and then averages.
    """
    if mode not in CORRELATION_MODES:
        raise ValueError(f"unknown correlation mode {mode!r}")
    if target_features.shape[0] < 1:
        raise ValueError("domain correlation needs at least one target sample")
    probs = discriminate_probs(bundle, target_features)
    source_cols = probs[:, : bundle.num_sources]
    if mode == "mean-softmax":
        weights = softmax(source_cols.mean(axis=0))
    else:
        rows = source_cols / source_cols.sum(axis=1, keepdims=True)
        weights = rows.mean(axis=0)
    return DomainCorrelation(weights)


def median_bandwidth(reps: np.ndarray) -> float:
    """Median heuristic: sigma^2 = median of pairwise squared distances / 2.

    Computed over all distinct row pairs and floored at SIGMA_FLOOR, so a
    batch of identical points still yields a usable bandwidth.
    """
    n = reps.shape[0]
    if n < 2:
        raise ValueError("median bandwidth needs at least two rows")
    diffs = reps[:, None, :] - reps[None, :, :]
    sq = (diffs * diffs).sum(axis=2)
    pairs = sq[np.triu_indices(n, k=1)]
    sigma = float(np.sqrt(np.median(pairs) / 2.0))
    return max(sigma, SIGMA_FLOOR)


def resolve_bandwidth(kernel: KernelConfig, reps: np.ndarray) -> float:
    if kernel.bandwidth == "fixed":
        return float(kernel.sigma)  # validated > 0 at construction
    return median_bandwidth(reps)


def _canonical_key(value: np.ndarray) -> tuple:
    return (value.shape, value.tobytes())


def mmd2(tape: Tape, a: Node, b: Node, sigma: float) -> Node:
    """Squared kernel mean discrepancy between two sets of representations.

    Biased V-statistic mean(K_aa) - 2 mean(K_ab) + mean(K_bb) with a
    Gaussian kernel. The operands are ordered canonically by value before
    computing, which makes the result exactly symmetric in its arguments.
    Tiny negative values (>= -1e-12 numerical noise) are possible; clamp at
    reporting time, never on the node used for gradients.
    """
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError(f"mmd2 needs >=2 rows per group, got {a.shape[0]} and {b.shape[0]}")
    if _canonical_key(b.value) < _canonical_key(a.value):
        a, b = b, a
    k_aa = tape.gaussian_kernel_mean(a, a, sigma)
    k_ab = tape.gaussian_kernel_mean(a, b, sigma)
    k_bb = tape.gaussian_kernel_mean(b, b, sigma)
    return tape.add(tape.add(k_aa, tape.scale(k_ab, -2.0)), k_bb)


def wmmd_loss(tape: Tape, source_reps: Sequence[Node], target_reps: Node,
              correlation: DomainCorrelation, sigma: float) -> Node:
    """Correlation-weighted sum of per-source discrepancies against the target.

    The weights are plain constants: no gradient flows back into the
    discriminator that produced them.
    """
    weights = correlation.weights
    if len(source_reps) != weights.size:
        raise ValueError(f"{len(source_reps)} source groups vs {weights.size} weights")
    total: Node | None = None
    for w_i, reps in zip(weights, source_reps):
        term = tape.scale(mmd2(tape, reps, target_reps, sigma), float(w_i))
        total = term if total is None else tape.add(total, term)
    assert total is not None
    return total


def classification_loss(tape: Tape, bound: BoundModel,
                        features_by_domain: Sequence[np.ndarray],
                        onehot_by_domain: Sequence[np.ndarray]) -> Node:
    """Classifier cross-entropy, averaged within each source domain then across.

    The per-domain inner mean keeps unequal domain sizes from skewing the
    loss. Every sample must carry a label; target samples stay out.
    """
    if len(features_by_domain) != len(onehot_by_domain) or not features_by_domain:
        raise ValueError("need matching, non-empty feature and label groups")
    total: Node | None = None
    for feats, onehot in zip(features_by_domain, onehot_by_domain):
        _check_onehot(onehot, "class labels")
        reps = bound.encode_features(tape.constant(feats))
        term = nll_mean(tape, bound.classify(reps), onehot)
        total = term if total is None else tape.add(total, term)
    assert total is not None
    return tape.scale(total, 1.0 / len(features_by_domain))


def total_loss(tape: Tape, l_c: Node, l_dc: Node | None, l_dis: Node | None,
               alpha: float) -> Node:
    """Combined objective: adversarial term + alpha * alignment term + classification.

    Dropped terms (ablations) are passed as None. The adversarial min/max
    structure lives in the reversal layer, so a single backward pass
    suffices.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    loss: Node | None = None
    if l_dc is not None:
        loss = l_dc
    if l_dis is not None:
        term = tape.scale(l_dis, alpha)
        loss = term if loss is None else tape.add(loss, term)
    loss = l_c if loss is None else tape.add(loss, l_c)
    return loss
