"""Dense linear algebra and seeded randomness shared by the rest of the package.

Every public routine works in float64. Random streams come from numpy's
Philox4x64 counter-based generator keyed through a ``SeedSequence``, so a
given ``(seed, *stream)`` tuple reproduces the same draws on any platform.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

SYMMETRY_RTOL = 1e-9
_CHUNK_ELEMS = 1 << 22


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SymmetryError(ValueError):
    """A matrix that must be symmetric is not."""


class DefinitenessError(ValueError):
    """A matrix that must be positive definite is not."""


class DegenerateInputError(ValueError):
    """Input makes a normalized quantity undefined (zero norm, zero spread)."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed``; extra integers select an independent sub-stream."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def check_symmetric(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise SymmetryError(f"{name} is not symmetric")


def sym_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    eigenvalues : (n,) array, sorted descending
    eigenvectors : (n, n) array with orthonormal columns; each column is
        flipped so that its first entry of non-negligible magnitude is positive.
    """
    a = as_matrix(a)
    check_symmetric(a)
    # LAPACK only reads one triangle; symmetrize so tiny asymmetries average out.
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(vals, kind="stable")[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    return vals, _fix_signs(vecs)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    if vecs.size == 0:
        return vecs
    tol = 1e-12 * np.abs(vecs).max(axis=0, keepdims=True)
    first = np.argmax(np.abs(vecs) > tol, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a`` via Cholesky."""
    a = as_matrix(a, "A")
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"A must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"B has {b.shape[0]} rows, A has order {a.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def pairwise_sq_dists(x, y=None) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``x`` and ``y``.

    When ``y`` is omitted (or is ``x`` itself) the result is exactly symmetric
    with a zero diagonal.
    """
    x = as_matrix(x, "X")
    same = y is None or y is x
    y = x if same else as_matrix(y, "Y")
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"column mismatch: {x.shape[1]} vs {y.shape[1]}")
    out = np.empty((x.shape[0], y.shape[0]))
    # Direct differences (not the |x|^2+|y|^2-2xy expansion) keep coincident rows at exactly 0.
    step = max(1, _CHUNK_ELEMS // max(1, y.shape[0] * x.shape[1]))
    for start in range(0, x.shape[0], step):
        diff = x[start:start + step, None, :] - y[None, :, :]
        out[start:start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    if same:
        out = 0.5 * (out + out.T)
        np.fill_diagonal(out, 0.0)
    return out
