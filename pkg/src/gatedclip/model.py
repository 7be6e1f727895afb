"""Model graphs: the averaging baseline and the gated fusion classifier.

Both are composed from nn_core primitives. The gated model runs two
two-layer projection heads (image/text), a sigmoid gate over their
concatenation, a per-example convex fusion, and a two-layer classifier.
Forward passes record every intermediate needed for an exact backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import Batch
from .nn_core import (
    DropoutMask,
    LayerSpec,
    ParameterSet,
    dropout_backward,
    dropout_forward,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    sigmoid,
)

BASELINE = "baseline"
GATEDCLIP = "gatedclip"
MODEL_KINDS = (BASELINE, GATEDCLIP)


@dataclass
class ModelConfig:
    dim_in: int = 512
    proj_hidden: int = 256
    proj_out: int = 128
    gate_hidden: int = 64
    cls_hidden: int = 64
    num_classes: int = 2
    dropout_proj: float = 0.2
    dropout_cls: float = 0.3

    def validate(self) -> None:
        dims = (
            self.dim_in,
            self.proj_hidden,
            self.proj_out,
            self.gate_hidden,
            self.cls_hidden,
            self.num_classes,
        )
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1: {dims}")
        if not (0 <= self.dropout_proj < 1 and 0 <= self.dropout_cls < 1):
            raise ValueError("dropout rates must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "dim_in": self.dim_in,
            "proj_hidden": self.proj_hidden,
            "proj_out": self.proj_out,
            "gate_hidden": self.gate_hidden,
            "cls_hidden": self.cls_hidden,
            "num_classes": self.num_classes,
            "dropout_proj": self.dropout_proj,
            "dropout_cls": self.dropout_cls,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def gatedclip_arch(config: ModelConfig) -> list[LayerSpec]:
    """Layer descriptors in checkpoint order: 8 weights + 8 biases."""
    c = config
    return [
        LayerSpec("img_proj.W1", "img_proj.b1", c.proj_hidden, c.dim_in, "relu"),
        LayerSpec("img_proj.W2", "img_proj.b2", c.proj_out, c.proj_hidden, "relu"),
        LayerSpec("txt_proj.W1", "txt_proj.b1", c.proj_hidden, c.dim_in, "relu"),
        LayerSpec("txt_proj.W2", "txt_proj.b2", c.proj_out, c.proj_hidden, "relu"),
        LayerSpec("gate.Wc", "gate.bc", c.gate_hidden, 2 * c.proj_out, "relu"),
        LayerSpec("gate.Wg", "gate.bg", 1, c.gate_hidden, "sigmoid"),
        LayerSpec("cls.Wh", "cls.bh", c.cls_hidden, c.proj_out, "relu"),
        LayerSpec("cls.Wout", "cls.bout", c.num_classes, c.cls_hidden, "linear"),
    ]


def baseline_arch(config: ModelConfig) -> list[LayerSpec]:
    return [LayerSpec("cls.W", "cls.b", config.num_classes, config.dim_in, "linear")]


def arch_for(kind: str, config: ModelConfig) -> list[LayerSpec]:
    if kind == BASELINE:
        return baseline_arch(config)
    if kind == GATEDCLIP:
        return gatedclip_arch(config)
    raise ValueError(f"unknown model kind {kind!r}")


def param_count(kind: str, config: ModelConfig) -> int:
    """Exact number of trainable scalars, biases included."""
    return sum(l.fan_out * l.fan_in + l.fan_out for l in arch_for(kind, config))


@dataclass
class ProjCache:
    v: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    m1: DropoutMask
    d1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    m2: DropoutMask
    h: np.ndarray


@dataclass
class GateCache:
    concat: np.ndarray
    zc: np.ndarray
    ac: np.ndarray
    zg: np.ndarray
    g: np.ndarray  # (N,), in [0, 1]


@dataclass
class ClsCache:
    h_in: np.ndarray
    zh: np.ndarray
    ah: np.ndarray
    mh: DropoutMask
    dh: np.ndarray
    logits: np.ndarray


@dataclass
class ForwardCache:
    """All activations and masks of one gated forward pass."""

    img: ProjCache
    txt: ProjCache
    gate: GateCache
    h_fused: np.ndarray
    cls: ClsCache

    @property
    def h_I(self) -> np.ndarray:
        return self.img.h

    @property
    def h_T(self) -> np.ndarray:
        return self.txt.h

    @property
    def g(self) -> np.ndarray:
        return self.gate.g

    @property
    def logits(self) -> np.ndarray:
        return self.cls.logits


@dataclass
class BaselineCache:
    h: np.ndarray
    logits: np.ndarray


def baseline_forward(
    batch: Batch, params: ParameterSet
) -> tuple[np.ndarray, BaselineCache]:
    """Element-wise average of the two embeddings into a single linear layer.
    Deterministic; the baseline has no dropout."""
    h = (batch.image_matrix + batch.text_matrix) / 2
    logits = linear_forward(h, params["cls.W"].values, params["cls.b"].values)
    return logits, BaselineCache(h, logits)


def baseline_backward(
    cache: BaselineCache, grad_logits: np.ndarray, params: ParameterSet
) -> None:
    _, gW, gb = linear_backward(grad_logits, cache.h, params["cls.W"].values)
    params["cls.W"].grad[...] = gW
    params["cls.b"].grad[...] = gb


def project(
    v: np.ndarray,
    params: ParameterSet,
    prefix: str,
    rate: float,
    mode: str,
    rng: np.random.Generator | None,
) -> ProjCache:
    """Two-layer head: Dropout(ReLU(W2 Dropout(ReLU(W1 v + b1)) + b2)).

    Dropout wraps the outer ReLU as well as the inner one, with the same
    rate; eval mode removes both.
    """
    z1 = linear_forward(v, params[f"{prefix}.W1"].values, params[f"{prefix}.b1"].values)
    a1 = relu(z1)
    d1, m1 = dropout_forward(a1, rate, mode, rng)
    z2 = linear_forward(d1, params[f"{prefix}.W2"].values, params[f"{prefix}.b2"].values)
    a2 = relu(z2)
    h, m2 = dropout_forward(a2, rate, mode, rng)
    return ProjCache(v, z1, a1, m1, d1, z2, a2, m2, h)


def project_backward(
    cache: ProjCache, grad_h: np.ndarray, params: ParameterSet, prefix: str
) -> None:
    g = dropout_backward(grad_h, cache.m2)
    g = relu_backward(g, cache.z2)
    g, gW2, gb2 = linear_backward(g, cache.d1, params[f"{prefix}.W2"].values)
    params[f"{prefix}.W2"].grad[...] = gW2
    params[f"{prefix}.b2"].grad[...] = gb2
    g = dropout_backward(g, cache.m1)
    g = relu_backward(g, cache.z1)
    _, gW1, gb1 = linear_backward(g, cache.v, params[f"{prefix}.W1"].values)
    params[f"{prefix}.W1"].grad[...] = gW1
    params[f"{prefix}.b1"].grad[...] = gb1


def gate(h_I: np.ndarray, h_T: np.ndarray, params: ParameterSet) -> GateCache:
    """Per-example scalar gate sigma(Wg ReLU(Wc [h_I; h_T] + bc) + bg).

    Concatenation order is image then text. Returns g in [0, 1], one value
    per example.
    """
    concat = np.concatenate([h_I, h_T], axis=1)
    zc = linear_forward(concat, params["gate.Wc"].values, params["gate.bc"].values)
    ac = relu(zc)
    zg = linear_forward(ac, params["gate.Wg"].values, params["gate.bg"].values)
    g = sigmoid(zg[:, 0])
    return GateCache(concat, zc, ac, zg, g)


def fuse(h_I: np.ndarray, h_T: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Convex combination g*h_I + (1-g)*h_T, g broadcast over features."""
    gcol = g[:, None]
    return gcol * h_I + (1.0 - gcol) * h_T


def classify(
    h_fused: np.ndarray,
    params: ParameterSet,
    rate: float,
    mode: str,
    rng: np.random.Generator | None,
) -> ClsCache:
    """Classification head: Wout Dropout(ReLU(Wh h + bh)) + bout."""
    zh = linear_forward(h_fused, params["cls.Wh"].values, params["cls.bh"].values)
    ah = relu(zh)
    dh, mh = dropout_forward(ah, rate, mode, rng)
    logits = linear_forward(dh, params["cls.Wout"].values, params["cls.bout"].values)
    return ClsCache(h_fused, zh, ah, mh, dh, logits)


def gatedclip_forward(
    batch: Batch,
    params: ParameterSet,
    config: ModelConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Full gated forward pass.

    Dropout draws happen in a fixed order (image head, text head, classifier)
    so a given rng yields a reproducible pass. The cached h_I/h_T are the
    dropout-applied projections, i.e. exactly the tensors seen by the gate
    and by the alignment loss.
    """
    img = project(batch.image_matrix, params, "img_proj", config.dropout_proj, mode, rng)
    txt = project(batch.text_matrix, params, "txt_proj", config.dropout_proj, mode, rng)
    gc = gate(img.h, txt.h, params)
    h_fused = fuse(img.h, txt.h, gc.g)
    cc = classify(h_fused, params, config.dropout_cls, mode, rng)
    return cc.logits, ForwardCache(img, txt, gc, h_fused, cc)


def gatedclip_backward(
    cache: ForwardCache,
    grad_logits: np.ndarray,
    grad_hI_extra: np.ndarray | None,
    grad_hT_extra: np.ndarray | None,
    params: ParameterSet,
) -> None:
    """Exact reverse pass; fills every grad buffer in ``params``.

    ``grad_hI_extra``/``grad_hT_extra`` inject the alignment-loss gradient
    into the projection outputs on top of the classification path.
    """
    # Classifier head.
    cc = cache.cls
    grad_dh, gWout, gbout = linear_backward(grad_logits, cc.dh, params["cls.Wout"].values)
    params["cls.Wout"].grad[...] = gWout
    params["cls.bout"].grad[...] = gbout
    g = dropout_backward(grad_dh, cc.mh)
    g = relu_backward(g, cc.zh)
    grad_hfused, gWh, gbh = linear_backward(g, cc.h_in, params["cls.Wh"].values)
    params["cls.Wh"].grad[...] = gWh
    params["cls.bh"].grad[...] = gbh

    # Fusion: dh_fused/dg = h_I - h_T, broadcast gate weights to features.
    gate_c = cache.gate
    gcol = gate_c.g[:, None]
    grad_hI = grad_hfused * gcol
    grad_hT = grad_hfused * (1.0 - gcol)
    grad_g = ((cache.h_I - cache.h_T) * grad_hfused).sum(axis=1)

    # Gate: through the sigmoid, then the two linear layers.
    grad_zg = (grad_g * gate_c.g * (1.0 - gate_c.g))[:, None]
    grad_ac, gWg, gbg = linear_backward(grad_zg, gate_c.ac, params["gate.Wg"].values)
    params["gate.Wg"].grad[...] = gWg
    params["gate.bg"].grad[...] = gbg
    grad_zc = relu_backward(grad_ac, gate_c.zc)
    grad_concat, gWc, gbc = linear_backward(grad_zc, gate_c.concat, params["gate.Wc"].values)
    params["gate.Wc"].grad[...] = gWc
    params["gate.bc"].grad[...] = gbc

    d = cache.h_I.shape[1]
    grad_hI = grad_hI + grad_concat[:, :d]
    grad_hT = grad_hT + grad_concat[:, d:]
    if grad_hI_extra is not None:
        grad_hI = grad_hI + grad_hI_extra
    if grad_hT_extra is not None:
        grad_hT = grad_hT + grad_hT_extra

    project_backward(cache.img, grad_hI, params, "img_proj")
    project_backward(cache.txt, grad_hT, params, "txt_proj")
