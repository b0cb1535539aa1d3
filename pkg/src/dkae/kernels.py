"""Kernel matrices: probabilistic cluster kernel, RBF, ideal kernel, and alignment.

The probabilistic cluster kernel (PCK) averages inner products of GMM posterior
vectors over an ensemble of diagonal-covariance mixtures fitted with
``g = 2..G`` components and ``Q`` random initializations each.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .numerics import DegenerateInputError, DimensionError, as_matrix, make_rng, pairwise_sq_dists

VARIANCE_FLOOR = 1e-6
EMPTY_COMPONENT_MASS = 1e-10
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmModel:
    weights: np.ndarray     # (g,)
    means: np.ndarray       # (g, d)
    variances: np.ndarray   # (g, d), diagonal covariances
    loglik_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _log_joint(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log(w_j) + log N(x_i | mu_j, diag(var_j)), shape (n, g)."""
    inv = 1.0 / model.variances
    # Per-component differences rather than the expanded quadratic: the expansion
    # loses ~1e-9 of precision at the variance floor, enough to break EM monotonicity.
    maha = np.empty((x.shape[0], model.num_components))
    for j in range(model.num_components):
        diff = x - model.means[j]
        maha[:, j] = (diff * diff) @ inv[j]
    log_norm = -0.5 * (model.dim * _LOG_2PI + np.sum(np.log(model.variances), axis=1))
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return log_w + log_norm - 0.5 * maha


def gmm_loglik(model: GmmModel, x) -> float:
    """Average per-sample log-likelihood."""
    x = _check_dim(model, x)
    return float(np.mean(logsumexp(_log_joint(model, x), axis=1)))


def gmm_posteriors(model: GmmModel, x) -> np.ndarray:
    """Posterior component probabilities, rows summing to one."""
    x = _check_dim(model, x)
    lj = _log_joint(model, x)
    lj -= lj.max(axis=1, keepdims=True)
    p = np.exp(lj)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _check_dim(model: GmmModel, x) -> np.ndarray:
    x = as_matrix(x, "X")
    if x.shape[1] != model.dim:
        raise DimensionError(f"X has {x.shape[1]} features, model expects {model.dim}")
    return x


def fit_gmm(x, g: int, rng: np.random.Generator, max_iters: int = 100, tol: float = 1e-6,
            var_floor: float = VARIANCE_FLOOR) -> GmmModel:
    """Fit a diagonal-covariance GMM by expectation-maximization.

    Initialization uses ``g`` distinct random rows as means, uniform weights and
    the per-dimension sample variance. Stops after ``max_iters`` iterations or
    once the relative change of the average log-likelihood drops below ``tol``.
    ``loglik_history`` holds the average log-likelihood evaluated before each
    M-step, plus the final value.
    """
    x = as_matrix(x, "X")
    n, d = x.shape
    if g < 1 or n < g:
        raise ValueError(f"need n >= g >= 1, got n={n}, g={g}")
    data_var = np.maximum(x.var(axis=0), var_floor)
    model = GmmModel(
        weights=np.full(g, 1.0 / g),
        means=x[rng.choice(n, size=g, replace=False)].copy(),
        variances=np.tile(data_var, (g, 1)),
    )
    history = model.loglik_history
    prev = None
    for it in range(max_iters):
        lj = _log_joint(model, x)
        norm = logsumexp(lj, axis=1, keepdims=True)
        ll = float(np.mean(norm))
        history.append(ll)
        if prev is not None and abs(ll - prev) <= tol * abs(prev):
            break
        prev = ll
        resp = np.exp(lj - norm)

        mass = resp.sum(axis=0)
        safe = np.maximum(mass, np.finfo(float).tiny)
        means = (resp.T @ x) / safe[:, None]
        variances = np.empty_like(means)
        for j in range(g):
            diff = x - means[j]
            variances[j] = resp[:, j] @ (diff * diff) / safe[j]
        np.maximum(variances, var_floor, out=variances)
        # A starved component keeps its (negligible) weight but is moved onto a random
        # training point so that later E-steps can recover it.
        for j in np.flatnonzero(mass < EMPTY_COMPONENT_MASS):
            means[j] = x[rng.integers(n)]
            variances[j] = data_var
        model.weights = mass / n
        model.means = means
        model.variances = variances
        model.n_iter = it + 1
    else:
        history.append(gmm_loglik(model, x))
    return model


@dataclass
class PckEnsemble:
    models: dict[tuple[int, int], GmmModel]   # keyed by (q, g), q in 1..Q, g in 2..G
    num_inits: int
    max_components: int
    normalizer: float

    @property
    def dim(self) -> int:
        return next(iter(self.models.values())).dim

    def posteriors(self, x) -> list[np.ndarray]:
        return [gmm_posteriors(self.models[key], x) for key in sorted(self.models)]


def fit_pck(x, num_inits: int, max_components: int, rng: np.random.Generator | int,
            max_iters: int = 100, tol: float = 1e-6) -> PckEnsemble:
    """Fit the ``Q * (G - 1)`` mixtures of a probabilistic cluster kernel.

    ``rng`` may be a generator (one master seed is drawn from it) or an int
    seed. Member ``(q, g)`` runs on its own stream derived from that seed, so the
    ensemble does not depend on fitting order.
    """
    x = as_matrix(x, "X")
    if max_components < 2:
        raise ValueError(f"G must be >= 2, got {max_components}")
    if num_inits < 1:
        raise ValueError(f"Q must be >= 1, got {num_inits}")
    if x.shape[0] < max_components:
        raise ValueError(f"need at least G={max_components} samples, got {x.shape[0]}")
    seed = int(rng.integers(2**63)) if isinstance(rng, np.random.Generator) else int(rng)
    models = {}
    for q in range(1, num_inits + 1):
        for g in range(2, max_components + 1):
            models[(q, g)] = fit_gmm(x, g, make_rng(seed, q, g), max_iters=max_iters, tol=tol)
    return PckEnsemble(models, num_inits, max_components, float(num_inits * (max_components - 1)))


def pck_features(ens: PckEnsemble, x) -> np.ndarray:
    """Concatenated posteriors scaled by 1/sqrt(Z); their Gram matrix is the PCK."""
    return np.hstack(ens.posteriors(x)) / np.sqrt(ens.normalizer)


def pck_kernel(ens: PckEnsemble, xa, xb=None) -> np.ndarray:
    """PCK values between rows of ``xa`` and ``xb`` (``xb`` defaults to ``xa``)."""
    xa = as_matrix(xa, "Xa")
    if xa.shape[1] != ens.dim:
        raise DimensionError(f"Xa has {xa.shape[1]} features, ensemble expects {ens.dim}")
    fa = pck_features(ens, xa)
    if xb is None:
        k = fa @ fa.T
        return 0.5 * (k + k.T)
    xb = as_matrix(xb, "Xb")
    if xb.shape[1] != ens.dim:
        raise DimensionError(f"Xb has {xb.shape[1]} features, ensemble expects {ens.dim}")
    return fa @ pck_features(ens, xb).T


def rbf_kernel(xa, xb, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    same = xb is None or xb is xa
    d2 = pairwise_sq_dists(xa) if same else pairwise_sq_dists(xa, xb)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def ideal_kernel(labels) -> np.ndarray:
    y = np.asarray(labels).ravel()
    if y.size == 0:
        raise ValueError("labels must be non-empty")
    return (y[:, None] == y[None, :]).astype(np.float64)


def _fro(a: np.ndarray, name: str) -> float:
    nrm = float(np.linalg.norm(a))
    if not nrm > 0:
        raise DegenerateInputError(f"{name} has zero Frobenius norm")
    return nrm


def _pair(c, p):
    c = as_matrix(c, "C")
    p = as_matrix(p, "P")
    if c.shape != p.shape:
        raise DimensionError(f"shape mismatch: {c.shape} vs {p.shape}")
    return c, p


def alignment(c, p) -> float:
    """Kernel alignment <C, P>_F / (|C|_F |P|_F)."""
    c, p = _pair(c, p)
    return float(np.sum(c * p) / (_fro(c, "C") * _fro(p, "P")))


def code_loss(c, p) -> float:
    """Frobenius distance between the norm-scaled matrices, sqrt(2 - 2 * alignment)."""
    c, p = _pair(c, p)
    return float(np.linalg.norm(c / _fro(c, "C") - p / _fro(p, "P")))


def save_kernel(path, k) -> None:
    """Binary layout: little-endian u64 rows, u64 cols, then row-major float64 values."""
    k = as_matrix(k, "kernel")
    with open(path, "wb") as f:
        f.write(struct.pack("<QQ", *k.shape))
        f.write(np.ascontiguousarray(k, dtype="<f8").tobytes())


def load_kernel(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated kernel header")
    rows, cols = struct.unpack("<QQ", raw[:16])
    if len(raw) - 16 != 8 * rows * cols:
        raise ValueError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(raw, dtype="<f8", offset=16).reshape(rows, cols).astype(np.float64)


def export_kernel_csv(path, k) -> None:
    k = as_matrix(k, "kernel")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"c{j}" for j in range(k.shape[1])])
        for row in k:
            w.writerow([f"{v:.17g}" for v in row])
