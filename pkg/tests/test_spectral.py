import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dkae.data import make_blobs
from dkae.kernels import code_loss, fit_pck, pck_kernel
from dkae.numerics import DimensionError, SymmetryError, make_rng, sym_eig
from dkae.spectral import (kernel_reconstruction, kpca_fit, kpca_project, nystrom_project, pca_backproject, pca_fit,
                           pca_project)

from conftest import random_psd


def test_kpca_identity():
    model = kpca_fit(np.eye(5), 5)
    np.testing.assert_allclose(model.eigenvalues, np.ones(5))
    z = kpca_project(model)
    np.testing.assert_allclose(z.T @ z, np.eye(5), atol=1e-14)


def test_kpca_rank_one_drops_components(rng):
    v = rng.random(6)
    model = kpca_fit(np.outer(v, v), 3)
    assert model.m == 1 and model.requested == 3
    assert model.eigenvalues[0] == pytest.approx(v @ v, rel=1e-12)


def test_kpca_matches_sym_eig(rng):
    k = random_psd(rng, 20)
    model = kpca_fit(k, 20)
    vals, vecs = sym_eig(k)
    np.testing.assert_allclose(model.eigenvalues, vals, rtol=1e-12)
    np.testing.assert_allclose(model.eigenvectors, vecs, atol=1e-12)
    assert np.linalg.norm(model.eigenvectors.T @ model.eigenvectors - np.eye(20)) <= 1e-10


def test_kpca_errors(rng):
    with pytest.raises(ValueError):
        kpca_fit(np.eye(3), 0)
    with pytest.raises(ValueError):
        kpca_fit(np.eye(3), 4)
    with pytest.raises(SymmetryError):
        kpca_fit(rng.random((3, 3)) + np.diag([0, 0, 5]), 2)


def test_projection_column_norms(rng):
    model = kpca_fit(random_psd(rng, 10), 4)
    np.testing.assert_allclose(np.linalg.norm(kpca_project(model), axis=0), np.sqrt(model.eigenvalues), rtol=1e-12)


def test_full_rank_reconstruction(rng):
    k = random_psd(rng, 15)
    k_m = kernel_reconstruction(kpca_project(kpca_fit(k, 15)))
    assert np.linalg.norm(k_m - k) <= 1e-8 * np.linalg.norm(k)


def test_reconstruction_keeps_psd_part(rng):
    m = rng.standard_normal((8, 8))
    k = m + m.T
    vals, vecs = sym_eig(k)
    psd = (vecs * np.maximum(vals, 0)) @ vecs.T
    k_m = kernel_reconstruction(kpca_project(kpca_fit(k, 8)))
    assert np.linalg.norm(k_m - psd) <= 1e-10 * np.linalg.norm(k)


def test_rank_one_is_best_over_eigenvalue_subsets(rng):
    k = random_psd(rng, 6)
    vals, vecs = sym_eig(k)
    best = min(np.linalg.norm(k - vals[i] * np.outer(vecs[:, i], vecs[:, i])) for i in range(6))
    k1 = kernel_reconstruction(kpca_project(kpca_fit(k, 1)))
    assert np.linalg.norm(k - k1) == pytest.approx(best, rel=1e-12)
    # brute force over rank-2 subsets too
    best2 = min(np.linalg.norm(k - sum(vals[i] * np.outer(vecs[:, i], vecs[:, i]) for i in s))
                for s in itertools.combinations(range(6), 2))
    k2 = kernel_reconstruction(kpca_project(kpca_fit(k, 2)))
    assert np.linalg.norm(k - k2) == pytest.approx(best2, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 15))
def test_code_loss_non_increasing_in_m(seed, n):
    rng = make_rng(seed)
    k = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
    z = kpca_project(kpca_fit(k, n))
    losses = [code_loss(kernel_reconstruction(z[:, :m]), k) for m in range(1, z.shape[1] + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_nystrom_on_training_rows(rng):
    k = random_psd(rng, 12)
    model = kpca_fit(k, 5)
    assert np.max(np.abs(nystrom_project(model, k) - kpca_project(model))) <= 1e-8


def test_nystrom_duplicate_point(rng):
    k = random_psd(rng, 9)
    model = kpca_fit(k, 4)
    z = nystrom_project(model, k[[3, 3]])
    assert np.array_equal(z[0], z[1])


def test_nystrom_error_decreases_with_m():
    data = make_blobs(160, 6, 3, rng=make_rng(2))
    ens = fit_pck(data.samples[:60], 3, 4, make_rng(3))
    tr, te = data.samples[:120], data.samples[120:]
    model = kpca_fit(pck_kernel(ens, tr), 40)
    z = nystrom_project(model, pck_kernel(ens, te, tr))
    k_te = pck_kernel(ens, te)
    errs = [np.linalg.norm(z[:, :m] @ z[:, :m].T - k_te) for m in (1, 3, 10, 40)]
    assert errs[0] > errs[1] > errs[-1]
    assert errs[-1] < 0.1 * np.linalg.norm(k_te)


def test_nystrom_order_mismatch(rng):
    model = kpca_fit(random_psd(rng, 5), 2)
    with pytest.raises(DimensionError):
        nystrom_project(model, np.zeros((2, 4)))


def test_pca_full_basis_round_trip(rng):
    c = rng.random((30, 5))
    model = pca_fit(c, 5)
    assert np.max(np.abs(pca_backproject(model, pca_project(model, c)) - c)) <= 1e-8
    assert sum(model.variances) == pytest.approx(model.total_variance, rel=1e-12)


def test_pca_exact_subspace(rng):
    basis = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    c = rng.standard_normal((25, 2)) @ basis.T + rng.random(6)
    model = pca_fit(c, 2)
    assert np.max(np.abs(pca_backproject(model, pca_project(model, c)) - c)) <= 1e-8
    assert np.linalg.norm(model.directions.T @ model.directions - np.eye(2)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_pca_variances(seed, m):
    rng = make_rng(seed)
    model = pca_fit(rng.random((20, 6)), m)
    assert np.all(np.diff(model.variances) <= 1e-15)
    assert model.variances.sum() <= model.total_variance * (1 + 1e-12)


def test_pca_errors(rng):
    with pytest.raises(ValueError):
        pca_fit(rng.random((4, 3)), 4)
    model = pca_fit(rng.random((4, 3)), 2)
    with pytest.raises(DimensionError):
        pca_project(model, np.zeros((1, 2)))
    with pytest.raises(DimensionError):
        pca_backproject(model, np.zeros((1, 3)))
