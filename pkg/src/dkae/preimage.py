"""Kernel ridge regression back-map from a projected feature space to input space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .kernels import rbf_kernel
from .numerics import DegenerateInputError, DimensionError, as_matrix, solve_spd

DEFAULT_REGS = (1e-3, 1e-2, 0.1, 0.5, 1.0, 10.0)


@dataclass(frozen=True)
class KrrModel:
    alpha: np.ndarray     # (n, d)
    z_train: np.ndarray   # (n, m)
    sigma: float
    reg: float


def median_sigma(z) -> float:
    """Median pairwise Euclidean distance between rows of ``z``."""
    z = as_matrix(z, "Z")
    if z.shape[0] < 2:
        raise DegenerateInputError("need at least two points for a median distance")
    med = float(np.median(pdist(z)))
    if not med > 0:
        raise DegenerateInputError("median pairwise distance is zero")
    return med


def krr_fit(z, x, sigma: float, reg: float) -> KrrModel:
    z = as_matrix(z, "Z")
    x = as_matrix(x, "X")
    if z.shape[0] != x.shape[0]:
        raise DimensionError(f"Z has {z.shape[0]} rows, X has {x.shape[0]}")
    if reg < 0:
        raise ValueError(f"regularizer must be >= 0, got {reg}")
    k = rbf_kernel(z, None, sigma)
    k[np.diag_indices_from(k)] += reg
    return KrrModel(solve_spd(k, x), z, float(sigma), float(reg))


def krr_predict(model: KrrModel, z_new, clamp: bool = True) -> np.ndarray:
    """Kernel-weighted back-map; ``clamp`` limits outputs to the [0, 1] pixel range."""
    z_new = as_matrix(z_new, "Z_new")
    if z_new.shape[1] != model.z_train.shape[1]:
        raise DimensionError(f"Z_new has {z_new.shape[1]} columns, model expects {model.z_train.shape[1]}")
    out = rbf_kernel(z_new, model.z_train, model.sigma) @ model.alpha
    return np.clip(out, 0.0, 1.0) if clamp else out


def grid_search_reg(z, x, sigma: float, candidates, train_idx, val_idx, clamp: bool = True) -> float:
    """Regularizer with the lowest held-out MSE; ties go to the smaller value."""
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ValueError("no regularization candidates given")
    z = as_matrix(z, "Z")
    x = as_matrix(x, "X")
    best, best_err = None, np.inf
    for reg in cands:
        model = krr_fit(z[train_idx], x[train_idx], sigma, reg)
        err = float(np.mean((krr_predict(model, z[val_idx], clamp) - x[val_idx]) ** 2))
        if err < best_err:
            best, best_err = reg, err
    return best
