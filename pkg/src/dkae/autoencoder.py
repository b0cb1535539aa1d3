"""Deep kernelized autoencoder: a tied-weight stacked autoencoder whose code
Gram matrix is pulled toward a prior kernel.

Per mini-batch of ``k`` rows the objective is::

    (1 - lam) / (k * d) * sum_i |x_i - x~_i|^2  +  lam * | C/|C|_F - P/|P|_F |_F

with ``C = H H^T`` built from the batch codes ``H`` and ``P`` the matching
``k x k`` block of the prior kernel. Gradients are derived by hand (no autodiff).
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .numerics import DegenerateInputError, DimensionError, as_matrix

log = logging.getLogger(__name__)

# Below this code-Gram norm the alignment term is skipped for the batch.
DEGENERATE_GRAM_NORM = 1e-12
# At (numerically) exact alignment the distance is non-differentiable; use the zero subgradient.
_ZERO_LOSS = 1e-12

CHECKPOINT_MAGIC = b"DKAE"
CHECKPOINT_VERSION = 1
TRANSFERS = {"sigmoid": 1}


@dataclass
class LayerParams:
    """One tied layer: encoder weight ``W`` (out x in), decoder weight is ``W.T``."""

    W: np.ndarray
    b_enc: np.ndarray
    b_dec: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b_enc, self.b_dec]

    def copy(self) -> "LayerParams":
        return LayerParams(self.W.copy(), self.b_enc.copy(), self.b_dec.copy())


@dataclass
class Network:
    layers: list[LayerParams]
    transfer: str = "sigmoid"

    def __post_init__(self):
        if self.transfer not in TRANSFERS:
            raise ValueError(f"unsupported transfer function {self.transfer!r}")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.W.shape[0] != b.W.shape[1]:
                raise DimensionError(f"layer {i} outputs {a.W.shape[0]} units, layer {i + 1} expects {b.W.shape[1]}")
        for i, lp in enumerate(self.layers):
            if lp.b_enc.shape != (lp.W.shape[0],) or lp.b_dec.shape != (lp.W.shape[1],):
                raise DimensionError(f"layer {i}: bias shapes do not match weight {lp.W.shape}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].W.shape[1]] + [lp.W.shape[0] for lp in self.layers]

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def code_dim(self) -> int:
        return self.dims[-1]

    def params(self) -> list[np.ndarray]:
        return [a for lp in self.layers for a in lp.arrays()]

    def with_params(self, arrays) -> "Network":
        it = iter(arrays)
        return Network([LayerParams(next(it), next(it), next(it)) for _ in self.layers], self.transfer)

    def copy(self) -> "Network":
        return Network([lp.copy() for lp in self.layers], self.transfer)


def init_glorot(dims, rng: np.random.Generator) -> Network:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    dims = [int(v) for v in dims]
    if len(dims) < 2:
        raise ValueError(f"need at least two layer sizes, got {dims}")
    if min(dims) < 1:
        raise ValueError(f"layer sizes must be >= 1, got {dims}")
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(LayerParams(rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                                  np.zeros(fan_out), np.zeros(fan_in)))
    return Network(layers)


def _encode_all(net: Network, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for lp in net.layers:
        acts.append(expit(acts[-1] @ lp.W.T + lp.b_enc))
    return acts


def _decode_all(net: Network, c: np.ndarray) -> list[np.ndarray]:
    # outs[l] is the decoder output at depth l; outs[L] is the code itself.
    outs = [None] * len(net.layers) + [c]
    for l in range(len(net.layers) - 1, -1, -1):
        lp = net.layers[l]
        outs[l] = expit(outs[l + 1] @ lp.W + lp.b_dec)
    return outs


def encode(net: Network, x) -> np.ndarray:
    x = as_matrix(x, "X")
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"X has {x.shape[1]} features, network expects {net.input_dim}")
    return _encode_all(net, x)[-1]


def decode(net: Network, c) -> np.ndarray:
    c = as_matrix(c, "C")
    if c.shape[1] != net.code_dim:
        raise DimensionError(f"codes have {c.shape[1]} dims, network code layer has {net.code_dim}")
    return _decode_all(net, c)[0]


def reconstruct(net: Network, x) -> np.ndarray:
    return decode(net, encode(net, x))


def reconstruction_loss(x, x_tilde) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape:
        raise DimensionError(f"length mismatch: {x.shape} vs {x_tilde.shape}")
    r = x - x_tilde
    return float(np.sum(r * r))


def _check_batch(net: Network, x, p):
    x = as_matrix(x, "X")
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"X has {x.shape[1]} features, network expects {net.input_dim}")
    if p is not None:
        p = as_matrix(p, "P")
        if p.shape != (x.shape[0], x.shape[0]):
            raise DimensionError(f"prior block has shape {p.shape}, batch has {x.shape[0]} rows")
        if not np.linalg.norm(p) > 0:
            raise DegenerateInputError("prior kernel block has zero Frobenius norm")
    return x, p


def _code_term(h: np.ndarray, p: np.ndarray, want_grad: bool):
    """Alignment distance of H H^T to P and (optionally) its gradient w.r.t. H."""
    c = h @ h.T
    c_norm = np.linalg.norm(c)
    if c_norm < DEGENERATE_GRAM_NORM:
        log.warning("code Gram matrix norm %.3g below %.0e; skipping alignment term", c_norm, DEGENERATE_GRAM_NORM)
        return None, None
    c_hat = c / c_norm
    diff = c_hat - p / np.linalg.norm(p)
    loss = float(np.linalg.norm(diff))
    if not want_grad:
        return loss, None
    if loss <= _ZERO_LOSS:
        return loss, np.zeros_like(h)
    g_hat = diff / loss
    # d/dC of C/|C|: project out the radial direction, scale by 1/|C|
    g_c = (g_hat - np.sum(g_hat * c_hat) * c_hat) / c_norm
    return loss, (g_c + g_c.T) @ h


def _evaluate(net: Network, x: np.ndarray, p, lam: float, want_grad: bool):
    k, d = x.shape
    acts = _encode_all(net, x)
    h = acts[-1]
    outs = _decode_all(net, h)
    resid = outs[0] - x
    recon = float(np.sum(resid * resid)) / (k * d)

    code, code_grad = (None, None)
    if p is not None:
        code, code_grad = _code_term(h, p, want_grad and lam > 0)
    code_part = 0.0 if code is None else code
    total = (1.0 - lam) * recon + (lam * code_part if lam > 0 else 0.0)
    if not want_grad:
        return total, recon, code_part, None

    grads = [LayerParams(np.zeros_like(lp.W), np.zeros_like(lp.b_enc), np.zeros_like(lp.b_dec)) for lp in net.layers]
    # decoder pass, from the reconstruction back to the code
    g_out = (2.0 * (1.0 - lam) / (k * d)) * resid
    for l in range(len(net.layers)):
        lp = net.layers[l]
        delta = g_out * outs[l] * (1.0 - outs[l])
        grads[l].W += outs[l + 1].T @ delta
        grads[l].b_dec += delta.sum(axis=0)
        g_out = delta @ lp.W.T
    # g_out is now dL/dH through the decoder; add the alignment path
    g_h = g_out if code_grad is None else g_out + lam * code_grad
    for l in range(len(net.layers) - 1, -1, -1):
        lp = net.layers[l]
        delta = g_h * acts[l + 1] * (1.0 - acts[l + 1])
        grads[l].W += delta.T @ acts[l]
        grads[l].b_enc += delta.sum(axis=0)
        g_h = delta @ lp.W
    return total, recon, code_part, grads


def batch_loss(net: Network, x, p, lam: float) -> tuple[float, float, float]:
    """Return ``(total, recon_part, code_part)`` with ``total = (1-lam)*recon + lam*code``.

    ``p`` may be None for a reconstruction-only objective (code_part is then 0).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    x, p = _check_batch(net, x, p)
    total, recon, code, _ = _evaluate(net, x, p, lam, want_grad=False)
    return total, recon, code


def gradients(net: Network, x, p, lam: float) -> list[LayerParams]:
    """Exact gradient of :func:`batch_loss` for every layer's ``W``, ``b_enc``, ``b_dec``.

    The tied weight collects both its encoder and decoder contributions.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    x, p = _check_batch(net, x, p)
    return _evaluate(net, x, p, lam, want_grad=True)[3]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(a) for a in params], [np.zeros_like(a) for a in params], 0)


def adam_step(params, grads, state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Inputs are not modified; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and optimizer state differ in length")
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = [], [], []
    for a, g, m, v in zip(params, grads, state.m, state.v):
        if a.shape != g.shape or a.shape != m.shape:
            raise DimensionError(f"shape mismatch: param {a.shape}, grad {g.shape}, state {m.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_p.append(a - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the full-scale MNIST setup."""

    lam: float = 0.1
    hidden_dims: tuple[int, ...] = (500, 500, 2000)
    code_dim: int = 2000
    batch_size: int = 200
    pretrain_epochs: int = 30
    finetune_epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    batches_per_epoch: int | None = None   # None: (n / k)^2

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.batch_size < 2:
            raise ValueError(f"batch size must be >= 2, got {self.batch_size}")
        if self.code_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer sizes must be >= 1")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ValueError(f"batches_per_epoch must be >= 1, got {self.batches_per_epoch}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")

    def dims(self, input_dim: int) -> list[int]:
        return [input_dim, *self.hidden_dims, self.code_dim]

    def effective_batch(self, n: int) -> int:
        return min(self.batch_size, n)

    def steps_per_epoch(self, n: int) -> int:
        if self.batches_per_epoch is not None:
            return self.batches_per_epoch
        return max(1, round((n / self.effective_batch(n)) ** 2))


def _fit(net: Network, x: np.ndarray, p, lam: float, steps: int, config: TrainConfig,
         rng: np.random.Generator, history: list | None = None) -> Network:
    n = x.shape[0]
    k = config.effective_batch(n)
    if k < 2:
        raise ValueError("need at least two training samples per batch")
    params = net.params()
    state = AdamState.zeros_like(params)
    for _ in range(steps):
        idx = rng.choice(n, size=k, replace=False)
        pk = None if p is None else p[np.ix_(idx, idx)]
        total, _, _, grads = _evaluate(net, x[idx], pk, lam, want_grad=True)
        if history is not None:
            history.append(total)
        params, state = adam_step(params, [a for lp in grads for a in lp.arrays()], state,
                                  config.learning_rate, config.beta1, config.beta2, config.eps)
        net = net.with_params(params)
    return net


def _check_prior(p, n: int):
    p = as_matrix(p, "P")
    if p.shape != (n, n):
        raise DimensionError(f"prior kernel has shape {p.shape}, expected ({n}, {n})")
    return p


def pretrain(data, p, config: TrainConfig, rng: np.random.Generator, net: Network | None = None) -> Network:
    """Greedy layer-wise pretraining.

    Layer ``l`` is trained as a one-layer tied autoencoder on the codes of layers
    ``1..l-1``. Inner layers see the reconstruction loss only; the code layer is
    trained on the joint objective with prior ``p``. ``net`` overrides the
    Glorot initialization drawn from ``rng``.
    """
    config.validate()
    x = as_matrix(getattr(data, "samples", data), "X")
    p = _check_prior(p, x.shape[0])
    if net is None:
        net = init_glorot(config.dims(x.shape[1]), rng)
    elif net.input_dim != x.shape[1]:
        raise DimensionError(f"network expects {net.input_dim} features, data has {x.shape[1]}")
    steps = config.pretrain_epochs * config.steps_per_epoch(x.shape[0])
    layers = []
    h = x
    last = len(net.layers) - 1
    for l, lp in enumerate(net.layers):
        single = Network([lp.copy()], net.transfer)
        if l == last:
            single = _fit(single, h, p, config.lam, steps, config, rng)
        else:
            single = _fit(single, h, None, 0.0, steps, config, rng)
        layers.append(single.layers[0])
        h = encode(single, h)
    return Network(layers, net.transfer)


def finetune(net: Network, data, p, config: TrainConfig, rng: np.random.Generator,
             history: list | None = None) -> Network:
    """End-to-end Adam on the joint objective over random mini-batches.

    Per-step batch losses are appended to ``history`` when given.
    """
    config.validate()
    x = as_matrix(getattr(data, "samples", data), "X")
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"network expects {net.input_dim} features, data has {x.shape[1]}")
    p = _check_prior(p, x.shape[0])
    steps = config.finetune_epochs * config.steps_per_epoch(x.shape[0])
    return _fit(net.copy(), x, p, config.lam, steps, config, rng, history)


def train_dkae(data, p, config: TrainConfig, rng: np.random.Generator) -> Network:
    pre_rng, fine_rng = rng.spawn(2)
    net = pretrain(data, p, config, pre_rng)
    return finetune(net, data, p, config, fine_rng)


def network_bytes(net: Network) -> bytes:
    """Serialize ``net`` to the checkpoint format.

    Layout (little-endian): magic ``DKAE``, u32 version, u32 transfer tag,
    u32 layer count L, (L + 1) x u64 layer sizes, then per layer W (out x in,
    row-major), b_enc, b_dec as float64.
    """
    dims = net.dims
    buf = [CHECKPOINT_MAGIC, struct.pack("<III", CHECKPOINT_VERSION, TRANSFERS[net.transfer], len(net.layers)),
           struct.pack(f"<{len(dims)}Q", *dims)]
    for lp in net.layers:
        buf.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in lp.arrays())
    return b"".join(buf)


def save_network(path, net: Network) -> None:
    Path(path).write_bytes(network_bytes(net))


def load_network(path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a dkae checkpoint")
    version, tag, nl = struct.unpack("<III", raw[4:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    transfer = {v: k for k, v in TRANSFERS.items()}.get(tag)
    if transfer is None:
        raise ValueError(f"{path}: unknown transfer tag {tag}")
    off = 16 + 8 * (nl + 1)
    dims = struct.unpack(f"<{nl + 1}Q", raw[16:off])
    layers = []

    def take(count):
        nonlocal off
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64)
        off += 8 * count
        return a

    try:
        for fan_in, fan_out in zip(dims, dims[1:]):
            w = take(fan_in * fan_out).reshape(fan_out, fan_in)
            layers.append(LayerParams(w, take(fan_out), take(fan_in)))
    except ValueError as exc:
        raise ValueError(f"{path}: truncated checkpoint") from exc
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return Network(layers, transfer)
