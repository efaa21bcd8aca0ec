"""Dense numerical kernel: GRU stack, output perceptron, masked BCE, backprop, Adam.

Everything is float64 numpy. Gate layout in the GRU weight matrices is
``[reset | update | candidate]`` along the last axis::

    r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
    z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
    n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    h' = (1 - z) * n + z * h

Sequence-level forward/backward run layer by layer over the whole sequence,
so the input projections and all weight gradients are single matmuls.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Any

import numpy as np

PROB_CLAMP = 1e-7
CHECKPOINT_FORMAT = "netcompletion-checkpoint/1"


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values in {name}")


@dataclass
class GruLayer:
    w_ih: np.ndarray  # (input_dim, 3*hidden)
    w_hh: np.ndarray  # (hidden, 3*hidden)
    b_ih: np.ndarray  # (3*hidden,)
    b_hh: np.ndarray  # (3*hidden,)

    @property
    def input_dim(self) -> int:
        return self.w_ih.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_hh.shape[0]


@dataclass
class GruStackParams:
    layers: list[GruLayer]

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layers[0].hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, layer_count: int, rng: np.random.Generator,
             scale: float = 1.0) -> "GruStackParams":
        layers = []
        for i in range(layer_count):
            in_dim = input_dim if i == 0 else hidden_dim
            a_in = scale / np.sqrt(in_dim)
            a_h = scale / np.sqrt(hidden_dim)
            layers.append(GruLayer(
                w_ih=rng.uniform(-a_in, a_in, (in_dim, 3 * hidden_dim)),
                w_hh=rng.uniform(-a_h, a_h, (hidden_dim, 3 * hidden_dim)),
                b_ih=rng.uniform(-a_h, a_h, 3 * hidden_dim),
                b_hh=rng.uniform(-a_h, a_h, 3 * hidden_dim),
            ))
        return cls(layers)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, layer_count: int) -> "GruStackParams":
        return cls.init(input_dim, hidden_dim, layer_count, np.random.default_rng(0), scale=0.0)


@dataclass
class MlpParams:
    w1: np.ndarray  # (hidden_dim, mlp_hidden)
    b1: np.ndarray
    w2: np.ndarray  # (mlp_hidden, output_dim)
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def init(cls, input_dim: int, output_dim: int, rng: np.random.Generator,
             hidden: int = 64, scale: float = 1.0) -> "MlpParams":
        a1 = scale / np.sqrt(input_dim)
        a2 = scale / np.sqrt(hidden)
        return cls(
            w1=rng.uniform(-a1, a1, (input_dim, hidden)),
            b1=rng.uniform(-a1, a1, hidden),
            w2=rng.uniform(-a2, a2, (hidden, output_dim)),
            b2=rng.uniform(-a2, a2, output_dim),
        )


def named_arrays(gru: GruStackParams, mlp: MlpParams) -> dict[str, np.ndarray]:
    """Flat name -> array mapping (the arrays themselves, not copies)."""
    out = {}
    for i, layer in enumerate(gru.layers):
        for k in ("w_ih", "w_hh", "b_ih", "b_hh"):
            out[f"gru.{i}.{k}"] = getattr(layer, k)
    for k in ("w1", "b1", "w2", "b2"):
        out[f"mlp.{k}"] = getattr(mlp, k)
    return out


def from_named_arrays(arrays: dict[str, np.ndarray]) -> tuple[GruStackParams, MlpParams]:
    count = 1 + max(int(k.split(".")[1]) for k in arrays if k.startswith("gru."))
    layers = [GruLayer(*(arrays[f"gru.{i}.{k}"] for k in ("w_ih", "w_hh", "b_ih", "b_hh")))
              for i in range(count)]
    mlp = MlpParams(*(arrays[f"mlp.{k}"] for k in ("w1", "b1", "w2", "b2")))
    return GruStackParams(layers), mlp


# ---------------------------------------------------------------------------
# single-step forward passes


def _gru_cell(layer: GruLayer, h: np.ndarray, x: np.ndarray):
    d = layer.hidden_dim
    gi = x @ layer.w_ih + layer.b_ih
    gh = h @ layer.w_hh + layer.b_hh
    r = sigmoid(gi[..., :d] + gh[..., :d])
    z = sigmoid(gi[..., d:2 * d] + gh[..., d:2 * d])
    n = np.tanh(gi[..., 2 * d:] + r * gh[..., 2 * d:])
    return (1.0 - z) * n + z * h


def gru_forward(p: GruStackParams, h_prev: list[np.ndarray], x: np.ndarray) -> list[np.ndarray]:
    """One recurrence step of the stack; returns the new per-layer hidden states."""
    x = np.asarray(x, dtype=np.float64)
    if len(h_prev) != p.layer_count:
        raise ValueError(f"expected {p.layer_count} hidden states, got {len(h_prev)}")
    if x.shape[-1] != p.input_dim:
        raise ValueError(f"input width {x.shape[-1]} != {p.input_dim}")
    out = []
    inp = x
    for layer, h in zip(p.layers, h_prev):
        if h.shape[-1] != layer.hidden_dim:
            raise ValueError(f"hidden width {h.shape[-1]} != {layer.hidden_dim}")
        h_new = _gru_cell(layer, h, inp)
        out.append(h_new)
        inp = h_new
    return out


def mlp_forward(p: MlpParams, h: np.ndarray) -> np.ndarray:
    """Edge probabilities in ``[PROB_CLAMP, 1 - PROB_CLAMP]``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != p.input_dim:
        raise ValueError(f"input width {h.shape[-1]} != {p.input_dim}")
    a2 = np.tanh(h @ p.w1 + p.b1) @ p.w2 + p.b2
    return np.clip(sigmoid(a2), PROB_CLAMP, 1.0 - PROB_CLAMP)


def bce_loss(probs, targets, mask) -> float:
    """Mean binary cross-entropy over entries where ``mask`` is 1."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if probs.shape != targets.shape or probs.shape != mask.shape:
        raise ValueError("probs, targets and mask must have equal shapes")
    total = mask.sum()
    if total <= 0:
        raise ValueError("mask selects no entries")
    terms = -(targets * np.log(probs) + (1.0 - targets) * np.log1p(-probs))
    return float((terms * mask).sum() / total)


# ---------------------------------------------------------------------------
# sequence forward / backward


@dataclass
class _LayerTape:
    x: np.ndarray       # (T, B, in)
    h_prev: np.ndarray  # (T, B, d), state entering each step
    rz: np.ndarray      # (T, B, 2d), reset and update gates
    n: np.ndarray
    gh_n: np.ndarray


@dataclass
class ForwardRecord:
    """Activations of a teacher-forced pass, consumed by :func:`backward`."""

    layers: list[_LayerTape]
    top: np.ndarray     # (T, B, d)
    a1: np.ndarray      # tanh(top W1 + b1)
    probs: np.ndarray   # (T, B, M), clamped
    clamped: np.ndarray # bool, entries where the clamp was active


def sequence_forward(gru: GruStackParams, mlp: MlpParams, h0: list[np.ndarray],
                     inputs: np.ndarray) -> ForwardRecord:
    """Run the stack over ``inputs`` of shape ``(T, B, input_dim)``.

    ``probs[t]`` is the output row computed from the hidden state after
    consuming ``inputs[t]``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != gru.input_dim:
        raise ValueError(f"inputs must be (T, B, {gru.input_dim}), got {x.shape}")
    T, B, _ = x.shape
    tapes = []
    for layer, h in zip(gru.layers, h0):
        d = layer.hidden_dim
        gi = (x.reshape(T * B, -1) @ layer.w_ih + layer.b_ih).reshape(T, B, 3 * d)
        h = np.broadcast_to(h, (B, d)).astype(np.float64)
        # hs[t] is the state entering step t; hs[t + 1] the state it produces
        hs = np.empty((T + 1, B, d))
        hs[0] = h
        rz = np.empty((T, B, 2 * d))
        ns = np.empty((T, B, d))
        ghn = np.empty((T, B, d))
        for t in range(T):
            gh = h @ layer.w_hh
            gh += layer.b_hh
            g = gi[t]
            a = g[:, :2 * d] + gh[:, :2 * d]
            np.multiply(a, 0.5, out=a)
            np.tanh(a, out=a)
            a += 1.0
            a *= 0.5
            rz[t] = a
            ghn[t] = gh[:, 2 * d:]
            n = np.tanh(g[:, 2 * d:] + a[:, :d] * gh[:, 2 * d:])
            ns[t] = n
            z = a[:, d:]
            h = n + z * (h - n)
            hs[t + 1] = h
        tapes.append(_LayerTape(x, hs[:-1], rz, ns, ghn))
        x = hs[1:]
    a1 = np.tanh(x @ mlp.w1 + mlp.b1)
    raw = sigmoid(a1 @ mlp.w2 + mlp.b2)
    clamped = (raw < PROB_CLAMP) | (raw > 1.0 - PROB_CLAMP)
    probs = np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return ForwardRecord(tapes, x, a1, probs, clamped)


def masked_bce(record: ForwardRecord, targets: np.ndarray, mask: np.ndarray) -> float:
    return bce_loss(record.probs, targets, mask)


def backward(gru: GruStackParams, mlp: MlpParams, record: ForwardRecord,
             targets: np.ndarray, mask: np.ndarray, normalizer: float | None = None
             ) -> dict[str, np.ndarray]:
    """Gradients of the masked BCE (sum over masked entries / ``normalizer``).

    ``normalizer`` defaults to the number of masked entries, i.e. the
    gradient of :func:`bce_loss`.
    """
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if normalizer is None:
        normalizer = float(mask.sum())
    if normalizer <= 0:
        raise ValueError("mask selects no entries")
    T, B, M = record.probs.shape
    # d loss / d logit for sigmoid + BCE; zero where the clamp is active
    d_a2 = (record.probs - targets) * mask / normalizer
    d_a2[record.clamped] = 0.0
    grads: dict[str, np.ndarray] = {}
    a1 = record.a1.reshape(T * B, -1)
    d_a2f = d_a2.reshape(T * B, M)
    grads["mlp.w2"] = a1.T @ d_a2f
    grads["mlp.b2"] = d_a2f.sum(axis=0)
    d_pre1 = (d_a2f @ mlp.w2.T) * (1.0 - a1 * a1)
    top = record.top.reshape(T * B, -1)
    grads["mlp.w1"] = top.T @ d_pre1
    grads["mlp.b1"] = d_pre1.sum(axis=0)
    d_out = (d_pre1 @ mlp.w1.T).reshape(T, B, -1)

    for li in range(gru.layer_count - 1, -1, -1):
        layer, tape = gru.layers[li], record.layers[li]
        d = layer.hidden_dim
        d_gi = np.empty((T, B, 3 * d))
        d_gh = np.empty((T, B, 3 * d))
        dh_next = np.zeros((B, d))
        w_hh_t = layer.w_hh.T
        # derivative of the gates w.r.t. their pre-activations
        rz_slope = tape.rz * (1.0 - tape.rz)
        n_slope = 1.0 - tape.n * tape.n
        for t in range(T - 1, -1, -1):
            dh = d_out[t] + dh_next
            rz = tape.rz[t]
            z = rz[:, d:]
            n = tape.n[t]
            da_n = dh * (1.0 - z) * n_slope[t]
            dgi, dgh = d_gi[t], d_gh[t]
            np.multiply(da_n, tape.gh_n[t], out=dgi[:, :d])
            np.multiply(dh, tape.h_prev[t] - n, out=dgi[:, d:2 * d])
            dgi[:, :2 * d] *= rz_slope[t]
            dgi[:, 2 * d:] = da_n
            dgh[:, :2 * d] = dgi[:, :2 * d]
            np.multiply(da_n, rz[:, :d], out=dgh[:, 2 * d:])
            dh_next = dh * z
            dh_next += dgh @ w_hh_t
        gi_f = d_gi.reshape(T * B, 3 * d)
        gh_f = d_gh.reshape(T * B, 3 * d)
        x_f = tape.x.reshape(T * B, -1)
        grads[f"gru.{li}.w_ih"] = x_f.T @ gi_f
        grads[f"gru.{li}.b_ih"] = gi_f.sum(axis=0)
        grads[f"gru.{li}.w_hh"] = tape.h_prev.reshape(T * B, d).T @ gh_f
        grads[f"gru.{li}.b_hh"] = gh_f.sum(axis=0)
        if li > 0:
            d_out = (gi_f @ layer.w_ih.T).reshape(T, B, -1)
    for k, g in grads.items():
        _check_finite(k, g)
    return grads


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k!r}")
        if params[k].shape != g.shape:
            raise ValueError(f"shape mismatch for {k}: {params[k].shape} vs {g.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            continue
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        _check_finite(k, p)
    return params


# ---------------------------------------------------------------------------
# checkpoint container


def _encode(a: np.ndarray) -> dict[str, Any]:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def save_checkpoint(path: str | PathLike, arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> None:
    """Write tensors (row-major little-endian float64, base64) plus metadata as JSON."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta,
        "tensors": {k: _encode(v) for k, v in sorted(arrays.items())},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path: str | PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    arrays = {k: _decode(v) for k, v in doc["tensors"].items()}
    for k, a in arrays.items():
        _check_finite(k, a)
    return arrays, doc["meta"]
