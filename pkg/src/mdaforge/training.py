"""Training loop: adversarial schedule, correlation refresh, early stopping.

One training run is single threaded and fully determined by its config.
Per default every batch builds one tape over all three losses and takes a
single optimizer step; the reversal layer realizes the adversarial split.
The ``alternating`` switch instead updates discriminator-side and
classifier-side parameters in two separate phases per batch.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .corpus import Corpus, Sample, make_batches, split_target
from .featurize import featurize_all
from .losses import (DomainCorrelation, KernelConfig, classification_loss,
                     domain_adversarial_loss, domain_correlation, resolve_bandwidth,
                     total_loss, wmmd_loss)
from .networks import (BoundModel, ModelBundle, bundle_params, clone_bundle,
                       init_bundle, predict_indices)
from .optim import AdamWHyper, AdamWState, adamw_step

logger = logging.getLogger(__name__)

_DISC_PARAMS = ("ed.w1", "ed.b1", "ed.w2", "ed.b2", "disc.w", "disc.b")
_CLF_PARAMS = ("ef.w1", "ef.b1", "ef.w2", "ef.b2", "clf.w", "clf.b")


@dataclass
class TrainConfig:
    alpha: float = 0.01
    lr: float = 5e-5
    weight_decay: float = 0.01
    per_domain_batch: int = 8
    max_epochs: int = 30
    patience: int = 2
    seed: int = 0
    use_at: bool = True
    use_wmmd: bool = True
    feature_dim: int = 2048
    ngram_max: int = 3
    hidden1: int = 256
    hidden2: int = 128
    kernel: KernelConfig = field(default_factory=KernelConfig)
    correlation_mode: str = "mean-softmax"
    alternating: bool = False
    lambda_per_step: bool = False
    refresh_per_batch: bool = False
    freeze_updates: bool = False  # test hook: evaluate epochs without optimizer steps

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def method_name(self) -> str:
        if self.use_at and self.use_wmmd:
            return "full"
        if self.use_at:
            return "no-wmmd"
        if self.use_wmmd:
            return "no-at"
        return "source-only"

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kernel"] = {"bandwidth": self.kernel.bandwidth, "sigma": self.kernel.sigma}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        kernel = data.pop("kernel", None)
        cfg = cls(**data)
        if kernel is not None:
            cfg.kernel = KernelConfig(**kernel)
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    l_dc: float | None
    l_dis: float | None
    l_c: float
    val_accuracy: float
    lam: float
    correlation: list[float]


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    best_epoch: int
    stop_reason: str
    val_size: int
    test_size: int
    method: str

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "val_size": self.val_size,
            "test_size": self.test_size,
            "method": self.method,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")


def lambda_schedule(epoch: int, max_epochs: int) -> float:
    """Reversal strength ramp from 0 towards 1 on a logistic curve."""
    if not 0 <= epoch < max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {max_epochs})")
    if max_epochs == 1:
        return 1.0
    p = epoch / (max_epochs - 1)
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


def _label_indices(corpus: Corpus, samples: tuple[Sample, ...]) -> np.ndarray:
    index = {cwe: i for i, cwe in enumerate(corpus.labels)}
    return np.array([index[s.label.id] for s in samples], dtype=np.intp)


def _epoch_seed(seed: int, epoch: int) -> int:
    return seed * 100_000 + epoch


class _Run:
    """Mutable state of one training run."""

    def __init__(self, corpus: Corpus, cfg: TrainConfig):
        corpus.__post_init__()  # revalidate invariants before a long run
        self.corpus = corpus
        self.cfg = cfg
        m = corpus.num_sources
        k = len(corpus.labels)

        logger.info("featurizing %d domains (dim=%d, ngram_max=%d)",
                    m + 1, cfg.feature_dim, cfg.ngram_max)
        self.features = [
            featurize_all([s.tokens for s in group], cfg.feature_dim, cfg.ngram_max)
            for group in corpus.by_domain
        ]
        self.labels = [
            _label_indices(corpus, group) if d < m else None
            for d, group in enumerate(corpus.by_domain)
        ]
        val, test = split_target(corpus, cfg.seed)
        self.val_x = featurize_all([s.tokens for s in val], cfg.feature_dim, cfg.ngram_max)
        self.val_y = _label_indices(corpus, val)
        self.test_size = len(test)

        self.bundle = init_bundle(cfg.feature_dim, cfg.hidden1, cfg.hidden2, m, k, cfg.seed)
        self.params = bundle_params(self.bundle)
        self.hyper = AdamWHyper(lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.state = AdamWState(self.params)
        self.eye_k = np.eye(k)
        self.domain_onehot = np.repeat(np.eye(m + 1), cfg.per_domain_batch, axis=0)
        self.correlation = DomainCorrelation.uniform(m)
        self.steps_per_epoch = math.ceil(max(corpus.domain_sizes()) / cfg.per_domain_batch)

    # -- loss assembly ---------------------------------------------------

    def _batch_features(self, batch) -> list[np.ndarray]:
        return [self.features[d][list(idx)] for d, idx in enumerate(batch.indices_by_domain)]

    def _batch_onehots(self, batch) -> list[np.ndarray]:
        out = []
        for d in range(self.corpus.num_sources):
            y = self.labels[d][list(batch.indices_by_domain[d])]
            out.append(self.eye_k[y])
        return out

    def _build_losses(self, tape: Tape, bound: BoundModel, feats: list[np.ndarray],
                      onehots: list[np.ndarray], lam: float, build_at: bool,
                      build_wmmd: bool, build_clf: bool):
        cfg = self.cfg
        m = self.corpus.num_sources
        l_dc = l_dis = l_c = None
        if build_at:
            l_dc = domain_adversarial_loss(tape, bound, np.vstack(feats),
                                           self.domain_onehot, lam)
        if build_wmmd:
            reps = [bound.encode_features(tape.constant(x)) for x in feats]
            sigma = resolve_bandwidth(cfg.kernel, np.vstack([r.value for r in reps]))
            l_dis = wmmd_loss(tape, reps[:m], reps[m], self.correlation, sigma)
        if build_clf:
            l_c = classification_loss(tape, bound, feats[:m], onehots)
        return l_dc, l_dis, l_c

    def _combined_step(self, feats, onehots, lam: float):
        cfg = self.cfg
        tape = Tape()
        bound = BoundModel(tape, self.bundle)
        l_dc, l_dis, l_c = self._build_losses(tape, bound, feats, onehots, lam,
                                              cfg.use_at, cfg.use_wmmd, True)
        loss = total_loss(tape, l_c, l_dc, l_dis, cfg.alpha)
        grads = bound.named_grads(tape.backward(loss))
        if not cfg.freeze_updates:
            adamw_step(self.params, grads, self.state, self.hyper)
        return l_dc, l_dis, l_c

    def _alternating_step(self, feats, onehots, lam: float):
        cfg = self.cfg
        l_dc = None
        if cfg.use_at:
            tape = Tape()
            bound = BoundModel(tape, self.bundle)
            l_dc, _, _ = self._build_losses(tape, bound, feats, onehots, lam,
                                            True, False, False)
            grads = bound.named_grads(tape.backward(l_dc))
            if not cfg.freeze_updates:
                adamw_step(self.params, {k: grads[k] for k in _DISC_PARAMS},
                           self.state, self.hyper)
        tape = Tape()
        bound = BoundModel(tape, self.bundle)
        _, l_dis, l_c = self._build_losses(tape, bound, feats, onehots, lam,
                                           False, cfg.use_wmmd, True)
        loss = total_loss(tape, l_c, None, l_dis, cfg.alpha)
        grads = bound.named_grads(tape.backward(loss))
        if not cfg.freeze_updates:
            adamw_step(self.params, {k: grads[k] for k in _CLF_PARAMS},
                       self.state, self.hyper)
        return l_dc, l_dis, l_c

    # NOTE: self.bundle's arrays are the same objects as self.params values,
    # so optimizer updates are visible through the bundle immediately.

    def refresh_correlation(self) -> None:
        target_features = self.features[self.corpus.target_domain]
        self.correlation = domain_correlation(self.bundle, target_features,
                                              self.cfg.correlation_mode)

    def val_accuracy(self) -> float:
        pred = predict_indices(self.bundle, self.val_x)
        return float((pred == self.val_y).mean())


def train(corpus: Corpus, cfg: TrainConfig) -> tuple[ModelBundle, TrainReport]:
    """Train on the corpus and return the best checkpoint with its report.

    The target domain is split (same seed as everything else) into a
    validation third used only for model selection and a test remainder the
    loop never sees. All target samples participate, unlabeled, in the
    adversarial and alignment losses. Training stops early after
    ``cfg.patience`` epochs without validation improvement.
    """
    run = _Run(corpus, cfg)
    cfg_desc = cfg.method_name
    logger.info("training %s on target %r (%d sources)", cfg_desc,
                corpus.target_project, corpus.num_sources)

    best_acc = -math.inf
    best_epoch = -1
    best_snapshot: ModelBundle | None = None
    since_improve = 0
    stop_reason = "max-epochs"
    records: list[EpochRecord] = []
    total_steps = cfg.max_epochs * run.steps_per_epoch
    global_step = 0

    for epoch in range(cfg.max_epochs):
        if cfg.use_at and epoch > 0 and not cfg.refresh_per_batch:
            run.refresh_correlation()
        lam = lambda_schedule(epoch, cfg.max_epochs)

        sums = {"l_dc": 0.0, "l_dis": 0.0, "l_c": 0.0}
        batches = 0
        for batch in make_batches(corpus, cfg.per_domain_batch, _epoch_seed(cfg.seed, epoch)):
            if cfg.use_at and cfg.refresh_per_batch:
                run.refresh_correlation()
            if cfg.lambda_per_step:
                lam = _per_step_lambda(global_step, total_steps)
            feats = run._batch_features(batch)
            onehots = run._batch_onehots(batch)
            step = run._alternating_step if cfg.alternating else run._combined_step
            l_dc, l_dis, l_c = step(feats, onehots, lam)
            if not math.isfinite(l_c.value[0, 0]):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} batch {batches}")
            if l_dc is not None:
                sums["l_dc"] += float(l_dc.value[0, 0])
            if l_dis is not None:
                # Clamp kernel-noise negatives for reporting only.
                sums["l_dis"] += max(float(l_dis.value[0, 0]), 0.0)
            sums["l_c"] += float(l_c.value[0, 0])
            batches += 1
            global_step += 1

        val_acc = run.val_accuracy()
        records.append(EpochRecord(
            epoch=epoch,
            l_dc=sums["l_dc"] / batches if cfg.use_at else None,
            l_dis=sums["l_dis"] / batches if cfg.use_wmmd else None,
            l_c=sums["l_c"] / batches,
            val_accuracy=val_acc,
            lam=lam,
            correlation=[float(w) for w in run.correlation.weights],
        ))
        logger.info("epoch %d: l_c=%.4f val_acc=%.4f lam=%.4f",
                    epoch, records[-1].l_c, val_acc, lam)

        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_snapshot = clone_bundle(run.bundle)
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                stop_reason = "early-stopping"
                break

    assert best_snapshot is not None
    report = TrainReport(
        epochs=records,
        best_epoch=best_epoch,
        stop_reason=stop_reason,
        val_size=len(run.val_y),
        test_size=run.test_size,
        method=cfg.method_name,
    )
    return best_snapshot, report


def _per_step_lambda(step: int, total_steps: int) -> float:
    if total_steps <= 1:
        return 1.0
    p = step / (total_steps - 1)
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


def predict(bundle: ModelBundle, features: np.ndarray, labels: tuple[str, ...]) -> list[str]:
    """Predicted category ids for featurized samples; empty input, empty output."""
    if len(labels) != bundle.num_classes:
        raise ValueError(f"{len(labels)} labels for a {bundle.num_classes}-way classifier")
    return [labels[i] for i in predict_indices(bundle, features)]
