"""Parameter containers and forward passes for the four networks.

Two tanh MLP encoders share the same architecture: one feeds the domain
discriminator (through the gradient reversal layer), the other feeds the
category classifier. Both heads are single linear layers followed by a row
log-softmax. Encoders are deliberately bounded (tanh) so the kernel
bandwidth heuristic downstream sees representations of stable scale.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Node, Tape

CHECKPOINT_FORMAT = "mdaforge-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MlpEncoder:
    """Two-layer tanh MLP: (n, in) -> (n, out)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class LinearHead:
    """Single linear layer whose output feeds a row log-softmax."""

    w: np.ndarray
    b: np.ndarray


@dataclass
class ModelBundle:
    """All trainable parameters plus the dimensions they were built for."""

    feature_encoder: MlpEncoder
    domain_encoder: MlpEncoder
    discriminator: LinearHead   # width num_sources + 1
    classifier: LinearHead      # width num_classes
    feature_dim: int
    hidden1: int
    hidden2: int
    num_sources: int
    num_classes: int
    seed: int

    def __post_init__(self) -> None:
        f, h1, h2 = self.feature_dim, self.hidden1, self.hidden2
        expect = {
            "feature_encoder": ((f, h1), (1, h1), (h1, h2), (1, h2)),
            "domain_encoder": ((f, h1), (1, h1), (h1, h2), (1, h2)),
        }
        for name, shapes in expect.items():
            enc = getattr(self, name)
            got = (enc.w1.shape, enc.b1.shape, enc.w2.shape, enc.b2.shape)
            if got != shapes:
                raise ValueError(f"{name} shapes {got} != expected {shapes}")
        if self.discriminator.w.shape != (h2, self.num_sources + 1):
            raise ValueError(f"discriminator weight shape {self.discriminator.w.shape} "
                             f"!= {(h2, self.num_sources + 1)}")
        if self.discriminator.b.shape != (1, self.num_sources + 1):
            raise ValueError("discriminator bias shape mismatch")
        if self.classifier.w.shape != (h2, self.num_classes):
            raise ValueError(f"classifier weight shape {self.classifier.w.shape} "
                             f"!= {(h2, self.num_classes)}")
        if self.classifier.b.shape != (1, self.num_classes):
            raise ValueError("classifier bias shape mismatch")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_bundle(feature_dim: int, hidden1: int, hidden2: int, num_sources: int,
                num_classes: int, seed: int) -> ModelBundle:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    for name, dim in (("feature_dim", feature_dim), ("hidden1", hidden1),
                      ("hidden2", hidden2), ("num_sources", num_sources),
                      ("num_classes", num_classes)):
        if dim < 1:
            raise ValueError(f"{name} must be >= 1, got {dim}")
    rng = np.random.default_rng([seed, 7])

    def encoder() -> MlpEncoder:
        return MlpEncoder(
            w1=_glorot(rng, feature_dim, hidden1),
            b1=np.zeros((1, hidden1)),
            w2=_glorot(rng, hidden1, hidden2),
            b2=np.zeros((1, hidden2)),
        )

    return ModelBundle(
        feature_encoder=encoder(),
        domain_encoder=encoder(),
        discriminator=LinearHead(w=_glorot(rng, hidden2, num_sources + 1),
                                 b=np.zeros((1, num_sources + 1))),
        classifier=LinearHead(w=_glorot(rng, hidden2, num_classes),
                              b=np.zeros((1, num_classes))),
        feature_dim=feature_dim,
        hidden1=hidden1,
        hidden2=hidden2,
        num_sources=num_sources,
        num_classes=num_classes,
        seed=seed,
    )


def bundle_params(bundle: ModelBundle) -> dict[str, np.ndarray]:
    """Live views of every trainable array, keyed by stable names."""
    out: dict[str, np.ndarray] = {}
    for prefix, enc in (("ef", bundle.feature_encoder), ("ed", bundle.domain_encoder)):
        out[f"{prefix}.w1"] = enc.w1
        out[f"{prefix}.b1"] = enc.b1
        out[f"{prefix}.w2"] = enc.w2
        out[f"{prefix}.b2"] = enc.b2
    out["disc.w"] = bundle.discriminator.w
    out["disc.b"] = bundle.discriminator.b
    out["clf.w"] = bundle.classifier.w
    out["clf.b"] = bundle.classifier.b
    return out


def clone_bundle(bundle: ModelBundle) -> ModelBundle:
    return ModelBundle(
        feature_encoder=MlpEncoder(*(a.copy() for a in (
            bundle.feature_encoder.w1, bundle.feature_encoder.b1,
            bundle.feature_encoder.w2, bundle.feature_encoder.b2))),
        domain_encoder=MlpEncoder(*(a.copy() for a in (
            bundle.domain_encoder.w1, bundle.domain_encoder.b1,
            bundle.domain_encoder.w2, bundle.domain_encoder.b2))),
        discriminator=LinearHead(bundle.discriminator.w.copy(), bundle.discriminator.b.copy()),
        classifier=LinearHead(bundle.classifier.w.copy(), bundle.classifier.b.copy()),
        feature_dim=bundle.feature_dim,
        hidden1=bundle.hidden1,
        hidden2=bundle.hidden2,
        num_sources=bundle.num_sources,
        num_classes=bundle.num_classes,
        seed=bundle.seed,
    )


class BoundModel:
    """Parameter leaf nodes of one bundle on one tape, with forward helpers."""

    def __init__(self, tape: Tape, bundle: ModelBundle):
        self.tape = tape
        self.nodes = {name: tape.parameter(arr) for name, arr in bundle_params(bundle).items()}

    def _encode(self, prefix: str, x: Node) -> Node:
        t = self.tape
        h = t.tanh(t.add_row_bias(t.matmul(x, self.nodes[f"{prefix}.w1"]),
                                  self.nodes[f"{prefix}.b1"]))
        return t.tanh(t.add_row_bias(t.matmul(h, self.nodes[f"{prefix}.w2"]),
                                     self.nodes[f"{prefix}.b2"]))

    def encode_features(self, x: Node) -> Node:
        return self._encode("ef", x)

    def encode_domains(self, x: Node) -> Node:
        return self._encode("ed", x)

    def discriminate(self, reps: Node) -> Node:
        """Row log-probabilities over the M+1 domains."""
        t = self.tape
        return t.log_softmax_rows(
            t.add_row_bias(t.matmul(reps, self.nodes["disc.w"]), self.nodes["disc.b"]))

    def classify(self, reps: Node) -> Node:
        """Row log-probabilities over the K defect categories."""
        t = self.tape
        return t.log_softmax_rows(
            t.add_row_bias(t.matmul(reps, self.nodes["clf.w"]), self.nodes["clf.b"]))

    def named_grads(self, grad_map: dict[Node, np.ndarray]) -> dict[str, np.ndarray]:
        return {name: grad_map[node] for name, node in self.nodes.items()}


# ---- plain numpy forward passes (inference, no gradients) ----------------

def encode_np(enc: MlpEncoder, x: np.ndarray) -> np.ndarray:
    return np.tanh(np.tanh(x @ enc.w1 + enc.b1) @ enc.w2 + enc.b2)


def _log_softmax_np(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def classify_logprobs(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    _check_feature_width(bundle, x)
    reps = encode_np(bundle.feature_encoder, x)
    return _log_softmax_np(reps @ bundle.classifier.w + bundle.classifier.b)


def discriminate_probs(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    _check_feature_width(bundle, x)
    reps = encode_np(bundle.domain_encoder, x)
    return np.exp(_log_softmax_np(reps @ bundle.discriminator.w + bundle.discriminator.b))


def predict_indices(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    if x.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    return np.argmax(classify_logprobs(bundle, x), axis=1)


def _check_feature_width(bundle: ModelBundle, x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != bundle.feature_dim:
        raise ValueError(f"feature matrix shape {x.shape} does not match the "
                         f"model's feature_dim {bundle.feature_dim}")


# ---- checkpoint container -------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(spec["shape"]).copy()


def save_checkpoint(path: str | Path, bundle: ModelBundle, meta: dict) -> None:
    """Write a JSON checkpoint; array values round-trip bit-exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {
            "feature_dim": bundle.feature_dim,
            "hidden1": bundle.hidden1,
            "hidden2": bundle.hidden2,
            "num_sources": bundle.num_sources,
            "num_classes": bundle.num_classes,
        },
        "seed": bundle.seed,
        "meta": meta,
        "arrays": {name: _encode_array(arr) for name, arr in bundle_params(bundle).items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelBundle, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    dims = payload["dims"]
    arrays = {name: _decode_array(spec) for name, spec in payload["arrays"].items()}
    bundle = ModelBundle(
        feature_encoder=MlpEncoder(arrays["ef.w1"], arrays["ef.b1"],
                                   arrays["ef.w2"], arrays["ef.b2"]),
        domain_encoder=MlpEncoder(arrays["ed.w1"], arrays["ed.b1"],
                                  arrays["ed.w2"], arrays["ed.b2"]),
        discriminator=LinearHead(arrays["disc.w"], arrays["disc.b"]),
        classifier=LinearHead(arrays["clf.w"], arrays["clf.b"]),
        feature_dim=dims["feature_dim"],
        hidden1=dims["hidden1"],
        hidden2=dims["hidden2"],
        num_sources=dims["num_sources"],
        num_classes=dims["num_classes"],
        seed=payload["seed"],
    )
    return bundle, payload["meta"]
