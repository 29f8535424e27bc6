"""Scikit-learn style wrappers: a featurizing transformer and the classifier.

These adapt the training pipeline to the fit/transform/predict idiom so it
composes with the surrounding ecosystem (cloning, parameter grids,
pipelines that accept a fitted transformer).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .corpus import MAX_TOKENS, Corpus, tokenize
from .featurize import featurize_all
from .losses import KernelConfig
from .networks import encode_np, classify_logprobs
from .training import TrainConfig, predict as predict_labels, train


def _as_token_lists(x, max_tokens: int) -> list[Sequence[str]]:
    if isinstance(x, str):
        raise TypeError("pass an iterable of documents, not a single string")
    out = []
    for doc in x:
        if isinstance(doc, str):
            out.append(tokenize(doc, max_tokens))
        else:
            out.append(tuple(doc)[:max_tokens])
    return out


class HashedNgramFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer from documents to unit-norm hashed n-gram vectors.

    Accepts raw code strings (tokenized internally) or pre-tokenized
    sequences. fit() is a no-op; there is no vocabulary to learn.
    """

    def __init__(self, dim: int = 2048, ngram_max: int = 3, max_tokens: int = MAX_TOKENS):
        self.dim = dim
        self.ngram_max = ngram_max
        self.max_tokens = max_tokens

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        tokens = _as_token_lists(X, self.max_tokens)
        return featurize_all(tokens, self.dim, self.ngram_max)


class DomainAdaptiveClassifier(ClassifierMixin, BaseEstimator):
    """Defect category classifier trained with multi-source domain adaptation.

    fit() takes a Corpus (sources labeled, target unlabeled during
    training); predict/predict_proba/transform then accept raw code
    strings, token sequences or an already-featurized matrix.
    """

    def __init__(self, feature_dim: int = 2048, ngram_max: int = 3,
                 max_tokens: int = MAX_TOKENS, hidden1: int = 256, hidden2: int = 128,
                 alpha: float = 0.01, learning_rate: float = 5e-5,
                 weight_decay: float = 0.01, per_domain_batch: int = 8,
                 max_epochs: int = 30, patience: int = 2,
                 use_adversarial: bool = True, use_wmmd: bool = True,
                 kernel_sigma: float | None = None,
                 correlation_mode: str = "mean-softmax", alternating: bool = False,
                 random_state: int = 0):
        self.feature_dim = feature_dim
        self.ngram_max = ngram_max
        self.max_tokens = max_tokens
        self.hidden1 = hidden1
        self.hidden2 = hidden2
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.per_domain_batch = per_domain_batch
        self.max_epochs = max_epochs
        self.patience = patience
        self.use_adversarial = use_adversarial
        self.use_wmmd = use_wmmd
        self.kernel_sigma = kernel_sigma
        self.correlation_mode = correlation_mode
        self.alternating = alternating
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        kernel = (KernelConfig("fixed", self.kernel_sigma) if self.kernel_sigma
                  else KernelConfig())
        return TrainConfig(
            alpha=self.alpha,
            lr=self.learning_rate,
            weight_decay=self.weight_decay,
            per_domain_batch=self.per_domain_batch,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.random_state,
            use_at=self.use_adversarial,
            use_wmmd=self.use_wmmd,
            feature_dim=self.feature_dim,
            ngram_max=self.ngram_max,
            hidden1=self.hidden1,
            hidden2=self.hidden2,
            kernel=kernel,
            correlation_mode=self.correlation_mode,
            alternating=self.alternating,
        )

    def fit(self, corpus: Corpus, y=None):
        if not isinstance(corpus, Corpus):
            raise TypeError("fit() expects a Corpus; see mdaforge.corpus")
        self.model_, self.report_ = train(corpus, self._train_config())
        self.classes_ = np.asarray(corpus.labels, dtype=object)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() first")

    def _featurize(self, X) -> np.ndarray:
        if isinstance(X, np.ndarray) and X.ndim == 2:
            if X.shape[1] != self.model_.feature_dim:
                raise ValueError(f"feature matrix has width {X.shape[1]}, model expects "
                                 f"{self.model_.feature_dim}")
            return X
        tokens = _as_token_lists(X, self.max_tokens)
        return featurize_all(tokens, self.model_.feature_dim, self.ngram_max)

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        labels = predict_labels(self.model_, self._featurize(X), tuple(self.classes_))
        return np.asarray(labels, dtype=object)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return np.exp(classify_logprobs(self.model_, self._featurize(X)))

    def transform(self, X) -> np.ndarray:
        """Domain-adapted representations from the feature encoder."""
        self._check_fitted()
        return encode_np(self.model_.feature_encoder, self._featurize(X))
