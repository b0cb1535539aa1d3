"""Kernel PCA (uncentered), Nystrom out-of-sample projection, and plain PCA on codes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, as_matrix, check_symmetric, sym_eig


@dataclass(frozen=True)
class KpcaModel:
    eigenvalues: np.ndarray    # (m,), descending, all > 0
    eigenvectors: np.ndarray   # (n, m)
    requested: int             # m asked for; differs from ``m`` when eigenvalues <= 0 were dropped

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_train(self) -> int:
        return self.eigenvectors.shape[0]


def kpca_fit(k, m: int) -> KpcaModel:
    """Top-``m`` eigenpairs of the kernel matrix ``k`` (no centering).

    Non-positive eigenvalues are dropped, so the fitted model may keep fewer
    than ``m`` components; ``requested`` records the original ``m``. Values
    within round-off of zero (``n * eps * max|lambda|``, the usual numerical
    rank cut) count as zero.
    """
    k = as_matrix(k, "K")
    check_symmetric(k, "K")
    n = k.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"number of components must be in [1, {n}], got {m}")
    vals, vecs = sym_eig(k)
    tol = n * np.finfo(np.float64).eps * max(np.abs(vals).max(initial=0.0), np.finfo(np.float64).tiny)
    keep = vals[:m] > tol
    return KpcaModel(vals[:m][keep], vecs[:, :m][:, keep], m)


def kpca_project(model: KpcaModel) -> np.ndarray:
    """Training-set projections E_m diag(sqrt(lambda))."""
    return model.eigenvectors * np.sqrt(model.eigenvalues)


def kernel_reconstruction(z) -> np.ndarray:
    z = as_matrix(z, "Z")
    return z @ z.T


def nystrom_project(model: KpcaModel, k_cross) -> np.ndarray:
    """Project new points given their kernel values against the training set (t x n)."""
    k_cross = as_matrix(k_cross, "K_cross")
    if k_cross.shape[1] != model.n_train:
        raise DimensionError(f"cross kernel has {k_cross.shape[1]} columns, model was fitted on {model.n_train} points")
    return (k_cross @ model.eigenvectors) / np.sqrt(model.eigenvalues)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray         # (p,)
    directions: np.ndarray   # (p, m), orthonormal columns
    variances: np.ndarray    # (m,), descending
    total_variance: float

    @property
    def m(self) -> int:
        return self.directions.shape[1]


def pca_fit(c, m: int) -> PcaModel:
    c = as_matrix(c, "C")
    n, p = c.shape
    if not 1 <= m <= min(n, p):
        raise ValueError(f"number of components must be in [1, {min(n, p)}], got {m}")
    mean = c.mean(axis=0)
    centered = c - mean
    cov = centered.T @ centered / n
    vals, vecs = sym_eig(0.5 * (cov + cov.T))
    return PcaModel(mean, vecs[:, :m], np.maximum(vals[:m], 0.0), float(np.trace(cov)))


def pca_project(model: PcaModel, c) -> np.ndarray:
    c = as_matrix(c, "C")
    if c.shape[1] != model.mean.shape[0]:
        raise DimensionError(f"expected {model.mean.shape[0]} columns, got {c.shape[1]}")
    return (c - model.mean) @ model.directions


def pca_backproject(model: PcaModel, scores) -> np.ndarray:
    scores = as_matrix(scores, "scores")
    if scores.shape[1] != model.m:
        raise DimensionError(f"expected {model.m} score columns, got {scores.shape[1]}")
    return model.mean + scores @ model.directions.T
