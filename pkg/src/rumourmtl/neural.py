"""Minimal differentiable core for the branch models.

Batched LSTM and dense-ReLU layers with hand-written reverse-mode
gradients, softmax/cross-entropy, inverted dropout, L2 regularization, an
adaptive-moment optimizer and finite-difference gradient checking. All
arithmetic is double precision; parameter sets are flat ``{name: array}``
dicts so optimizer state, checkpoints and gradient reports share one
naming scheme.

LSTM gate packing along the last axis is [input, forget, output, candidate].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

Params = dict[str, np.ndarray]

CHECKPOINT_FORMAT = "rumourmtl-checkpoint"
CHECKPOINT_VERSION = 1

#: Probabilities are clipped here inside cross-entropy, bounding the loss.
PROB_CLIP = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shift-invariant softmax; safe for large logits."""
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, gold: int) -> float:
    """-log p[gold] with probability clipping."""
    if not 0 <= gold < probs.shape[-1]:
        raise IndexError(f"gold class {gold} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(float(probs[..., gold]), PROB_CLIP)))


# ---------------------------------------------------------------------------
# Initialization

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Optional[tuple[int, ...]] = None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


def init_lstm_layer(rng: np.random.Generator, input_dim: int, hidden: int) -> Params:
    """Gate-packed LSTM weights; forget-gate bias starts at 1."""
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return {
        "Wx": glorot_uniform(rng, input_dim, hidden, (input_dim, 4 * hidden)),
        "Wh": glorot_uniform(rng, hidden, hidden, (hidden, 4 * hidden)),
        "b": b,
    }


def init_dense_layer(rng: np.random.Generator, in_dim: int, out_dim: int) -> Params:
    return {
        "W": glorot_uniform(rng, in_dim, out_dim),
        "b": np.zeros(out_dim),
    }


# ---------------------------------------------------------------------------
# LSTM layer

def lstm_forward(params: Params, x: np.ndarray, mask: np.ndarray
                 ) -> tuple[np.ndarray, list[dict]]:
    """Run the LSTM recurrence over a batch.

    ``x`` is (B, T, d), ``mask`` is (B, T) boolean. At masked steps the
    cell and hidden state carry through unchanged, so padding never
    influences the outputs. Returns hidden states (B, T, h) and the cache
    needed for the backward pass.
    """
    B, T, d = x.shape
    h_dim = params["Wh"].shape[0]
    if params["Wx"].shape[0] != d:
        raise ValueError(f"input dim {d} does not match Wx {params['Wx'].shape}")
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    hs = np.zeros((B, T, h_dim))
    cache = []
    for t in range(T):
        xt = x[:, t, :]
        z = xt @ params["Wx"] + h @ params["Wh"] + params["b"]
        i = sigmoid(z[:, :h_dim])
        f = sigmoid(z[:, h_dim:2 * h_dim])
        o = sigmoid(z[:, 2 * h_dim:3 * h_dim])
        g = np.tanh(z[:, 3 * h_dim:])
        c_hat = f * c + i * g
        tanh_c = np.tanh(c_hat)
        h_hat = o * tanh_c
        m = mask[:, t].astype(float)[:, None]
        cache.append({"x": xt, "h_prev": h, "c_prev": c, "i": i, "f": f,
                      "o": o, "g": g, "tanh_c": tanh_c, "m": m})
        c = m * c_hat + (1.0 - m) * c
        h = m * h_hat + (1.0 - m) * h
        hs[:, t, :] = h
    return hs, cache


def lstm_backward(params: Params, cache: list[dict], d_hs: np.ndarray
                  ) -> tuple[np.ndarray, Params]:
    """Backprop through ``lstm_forward`` given gradients w.r.t. all hidden
    states. Returns gradients w.r.t. the inputs and the parameters."""
    B, T, h_dim = d_hs.shape
    d = params["Wx"].shape[0]
    grads = {"Wx": np.zeros_like(params["Wx"]),
             "Wh": np.zeros_like(params["Wh"]),
             "b": np.zeros_like(params["b"])}
    dx = np.zeros((B, T, d))
    dh = np.zeros((B, h_dim))
    dc = np.zeros((B, h_dim))
    for t in reversed(range(T)):
        step = cache[t]
        m = step["m"]
        dh = dh + d_hs[:, t, :]
        dh_hat = m * dh
        dc_carry = (1.0 - m) * dc
        dh_carry = (1.0 - m) * dh
        do = dh_hat * step["tanh_c"]
        dc_hat = m * dc + dh_hat * step["o"] * (1.0 - step["tanh_c"] ** 2)
        df = dc_hat * step["c_prev"]
        di = dc_hat * step["g"]
        dg = dc_hat * step["i"]
        dc = dc_hat * step["f"] + dc_carry
        dz = np.concatenate([
            di * step["i"] * (1.0 - step["i"]),
            df * step["f"] * (1.0 - step["f"]),
            do * step["o"] * (1.0 - step["o"]),
            dg * (1.0 - step["g"] ** 2),
        ], axis=1)
        grads["Wx"] += step["x"].T @ dz
        grads["Wh"] += step["h_prev"].T @ dz
        grads["b"] += dz.sum(axis=0)
        dx[:, t, :] = dz @ params["Wx"].T
        dh = dz @ params["Wh"].T + dh_carry
    return dx, grads


# ---------------------------------------------------------------------------
# Dense-ReLU stack

def dense_forward(params: Params, x: np.ndarray, activation: str = "relu"
                  ) -> tuple[np.ndarray, dict]:
    z = x @ params["W"] + params["b"]
    a = relu(z) if activation == "relu" else z
    return a, {"x": x, "z": z, "activation": activation}


def dense_backward(params: Params, cache: dict, d_out: np.ndarray
                   ) -> tuple[np.ndarray, Params]:
    dz = d_out * (cache["z"] > 0) if cache["activation"] == "relu" else d_out
    grads = {"W": cache["x"].T @ dz, "b": dz.sum(axis=0)}
    return dz @ params["W"].T, grads


# ---------------------------------------------------------------------------
# Dropout (inverted scaling; the mask is recorded so backward matches forward)

def dropout_forward(x: np.ndarray, p: float, rng: Optional[np.random.Generator] = None,
                    mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if p <= 0.0:
        return x, None
    if mask is None:
        if rng is None:
            raise ValueError("dropout needs an rng when no mask is supplied")
        mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(d_out: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return d_out
    return d_out * mask


# ---------------------------------------------------------------------------
# L2 regularization over the full parameter set

def l2_penalty(params: Params, lam: float) -> float:
    return lam * sum(float(np.sum(v * v)) for v in params.values())


def add_l2_grads(params: Params, grads: Params, lam: float) -> None:
    for name, v in params.items():
        grads[name] = grads.get(name, 0.0) + 2.0 * lam * v


# ---------------------------------------------------------------------------
# Adaptive-moment optimizer

@dataclass
class OptimizerState:
    """Bias-corrected first/second moment accumulators per parameter block."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def optimizer_init(params: Params, lr: float = 1e-3) -> OptimizerState:
    state = OptimizerState(lr=lr)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def optimizer_step(params: Params, grads: Params, state: OptimizerState) -> Params:
    """One in-place adaptive-moment update; returns ``params``."""
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Gradient checking

def finite_difference_grads(loss_fn: Callable[[Params], float], params: Params,
                            eps: float = 1e-5) -> Params:
    """Central finite differences of ``loss_fn`` w.r.t. every entry."""
    numeric: Params = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + eps
            hi = loss_fn(params)
            flat_p[idx] = orig - eps
            lo = loss_fn(params)
            flat_p[idx] = orig
            flat_g[idx] = (hi - lo) / (2.0 * eps)
        numeric[name] = g
    return numeric


def grad_check(loss_fn: Callable[[Params], float], params: Params,
               analytic: Params, eps: float = 1e-5) -> dict[str, float]:
    """Relative error per parameter block between analytic gradients and a
    central finite-difference oracle: ||ga - gn|| / (||ga|| + ||gn|| + tiny)."""
    numeric = finite_difference_grads(loss_fn, params, eps=eps)
    report = {}
    for name in params:
        ga, gn = analytic[name], numeric[name]
        denom = np.linalg.norm(ga) + np.linalg.norm(gn) + 1e-12
        report[name] = float(np.linalg.norm(ga - gn) / denom)
    return report


# ---------------------------------------------------------------------------
# Checkpoints (JSON container; Python float repr round-trips doubles exactly)

def save_params(params: Params, path: str | Path, meta: Optional[dict] = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {
            name: {"shape": list(p.shape), "data": p.ravel().tolist()}
            for name, p in sorted(params.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_params(path: str | Path) -> tuple[Params, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    params = {
        name: np.array(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return params, payload["meta"]
