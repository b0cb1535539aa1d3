"""The five experiments: lambda sweep, code-size sweep, ideal-kernel table,
kPCA comparison and denoising.

Every runner takes an :class:`ExperimentConfig` and an output directory, writes
its CSV files, images and a manifest there, and returns the numbers it wrote.
All randomness is derived from ``cfg.seed`` through fixed stream ids, so two
runs with the same configuration produce byte-identical CSVs.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autoencoder import Network, decode, encode, load_network, network_bytes, train_dkae
from ..data import Dataset, add_gaussian_noise, load_idx, make_blobs, split
from ..kernels import PckEnsemble, code_loss, fit_pck, ideal_kernel, pck_kernel
from ..numerics import make_rng
from ..preimage import grid_search_reg, krr_fit, krr_predict, median_sigma
from ..spectral import kpca_fit, kpca_project, nystrom_project, pca_backproject, pca_fit, pca_project
from .config import ExperimentConfig
from .outputs import atomic_write, heatmap, write_csv, write_manifest, write_pgm

log = logging.getLogger(__name__)

STREAM_DATA = 1
STREAM_SPLIT = 2
STREAM_PCK = 3
STREAM_TRAIN = 4
STREAM_NOISE = 5


@dataclass
class Prepared:
    train: Dataset
    val: Dataset
    test: Dataset
    ensemble: PckEnsemble
    p_train: np.ndarray
    image_shape: tuple[int, int]

    def kernel(self, a: Dataset, b: Dataset | None = None) -> np.ndarray:
        return pck_kernel(self.ensemble, a.samples, None if b is None else b.samples)


def _idx_shape(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        head = f.read(16)
    _, _, rows, cols = struct.unpack(">4I", head)
    return rows, cols


def load_dataset(cfg: ExperimentConfig, classes=()) -> tuple[Dataset, tuple[int, int]]:
    """Dataset named by ``cfg`` restricted to ``classes`` (all when empty)."""
    rng = make_rng(cfg.seed, STREAM_DATA)
    if cfg.uses_idx:
        data = load_idx(cfg.mnist_images, cfg.mnist_labels or None)
        shape = _idx_shape(cfg.mnist_images)
    else:
        data = make_blobs(cfg.blobs_n, cfg.blobs_d, cfg.blobs_classes, cfg.blobs_separation, rng,
                          cluster_std=cfg.blobs_cluster_std or None)
        shape = (1, cfg.blobs_d)
    if classes:
        if data.labels is None:
            raise ValueError("class selection needs labels")
        data = data.subset(np.flatnonzero(np.isin(data.labels, classes)))
        if len(data) == 0:
            raise ValueError(f"no samples with labels {tuple(classes)}")
    if cfg.uses_idx and len(data) > cfg.subset_size:
        data = data.subset(np.sort(rng.choice(len(data), cfg.subset_size, replace=False)))
    return data, shape


def prepare(cfg: ExperimentConfig, classes=None) -> Prepared:
    """Load and split the data, then fit the PCK on a random training subset."""
    data, shape = load_dataset(cfg, cfg.classes if classes is None else classes)
    train, val, test = split(data, cfg.split, make_rng(cfg.seed, STREAM_SPLIT))
    rng = make_rng(cfg.seed, STREAM_PCK)
    sub = rng.choice(len(train), min(cfg.gmm_subset, len(train)), replace=False)
    ens = fit_pck(train.samples[sub], cfg.pck_q, cfg.pck_g, rng, max_iters=cfg.gmm_max_iters, tol=cfg.gmm_tol)
    log.info("data: %d train / %d val / %d test, d=%d; PCK with %d mixtures",
             len(train), len(val), len(test), train.feature_dim, len(ens.models))
    return Prepared(train, val, test, ens, pck_kernel(ens, train.samples), shape)


def train_network(cfg: ExperimentConfig, prep: Prepared, **overrides) -> Network:
    """Train on the training split. Every sweep point uses the same training stream,
    so points differ only in the overridden settings."""
    tcfg = cfg.train_config(**overrides)
    log.info("training dkAE %s, lambda=%g", tcfg.dims(prep.train.feature_dim), tcfg.lam)
    return train_dkae(prep.train, prep.p_train, tcfg, make_rng(cfg.seed, STREAM_TRAIN))


def evaluate(net: Network, data: Dataset, p: np.ndarray) -> tuple[float, float]:
    """(mean squared reconstruction error per entry, code loss of the full Gram matrix vs p)."""
    h = encode(net, data.samples)
    recon = float(np.mean((decode(net, h) - data.samples) ** 2))
    return recon, code_loss(h @ h.T, p)


def _tag(v) -> str:
    return f"{v:g}".replace(".", "p")


def run_lambda_sweep(cfg: ExperimentConfig, out_dir) -> list[tuple]:
    out = Path(out_dir)
    prep = prepare(cfg)
    p_val = prep.kernel(prep.val)
    rows, files = [], []
    for lam in sorted(cfg.lambda_grid):
        net = train_network(cfg, prep, lam=lam)
        files.append(_save(out / f"model_lambda_{_tag(lam)}.dkae", net))
        rows.append((lam, *evaluate(net, prep.val, p_val)))
    files.append(write_csv(out / "lambda_sweep.csv", ["lambda", "val_recon_loss", "val_code_loss"], rows))
    write_manifest(out, "lambda-sweep", cfg, [f.name for f in files])
    return rows


def code_grid(cfg: ExperimentConfig, n_train: int) -> list[int]:
    """Requested code sizes, capped at the number of training samples."""
    return sorted({min(int(c), n_train) for c in cfg.code_grid})


def run_code_size_sweep(cfg: ExperimentConfig, out_dir) -> list[tuple]:
    out = Path(out_dir)
    prep = prepare(cfg)
    p_val = prep.kernel(prep.val)
    rows, files = [], []
    for nc in code_grid(cfg, len(prep.train)):
        net = train_network(cfg, prep, code_dim=nc)
        files.append(_save(out / f"model_code_{nc}.dkae", net))
        rows.append((nc, *evaluate(net, prep.val, p_val)))
    files.append(write_csv(out / "code_sweep.csv", ["code_dim", "val_recon_loss", "val_code_loss"], rows))
    write_manifest(out, "code-sweep", cfg, [f.name for f in files])
    return rows


def improvement_table(losses: dict[str, float]) -> dict[tuple[str, str], float]:
    """Relative improvement in percent of each row kernel over each column kernel."""
    return {(r, c): 100.0 * (losses[c] - losses[r]) / losses[r] for r in losses for c in losses}


def run_ideal_kernel_table(cfg: ExperimentConfig, out_dir) -> dict[str, float]:
    out = Path(out_dir)
    prep = prepare(cfg)
    if prep.test.labels is None:
        raise ValueError("the ideal-kernel table needs labelled data")
    k_ideal = ideal_kernel(prep.test.labels)
    p_test = prep.kernel(prep.test)
    net_ae = train_network(cfg, prep, lam=0.0)
    net_dk = train_network(cfg, prep, lam=cfg.lam)
    h_ae = encode(net_ae, prep.test.samples)
    h_dk = encode(net_dk, prep.test.samples)
    kernels = {"P": p_test, "K_AE": h_ae @ h_ae.T, "C": h_dk @ h_dk.T}
    losses = {name: code_loss(k, k_ideal) for name, k in kernels.items()}
    imp = improvement_table(losses)
    names = list(losses)
    rows = [(r, losses[r], *[imp[(r, c)] for c in names]) for r in names]
    files = [
        write_csv(out / "ideal_table.csv", ["kernel", "code_loss_vs_ideal", *[f"improvement_vs_{c}" for c in names]], rows),
        _save(out / "model_lambda_0.dkae", net_ae),
        _save(out / f"model_lambda_{_tag(cfg.lam)}.dkae", net_dk),
    ]
    order = np.argsort(prep.test.labels, kind="stable")
    for name, k in {**kernels, "K_I": k_ideal}.items():
        files.append(write_pgm(out / "kernels" / f"{name}.pgm", heatmap(k[np.ix_(order, order)])))
    write_manifest(out, "ideal-table", cfg, [f.relative_to(out) for f in files])
    return losses


def _components_grid(cfg: ExperimentConfig, n: int) -> list[int]:
    grid = cfg.components_grid or range(1, n + 1)
    return sorted({int(m) for m in grid if 1 <= int(m) <= n})


def run_kpca_comparison(cfg: ExperimentConfig, out_dir) -> list[tuple]:
    """Rank-m kPCA approximations of P against the dkAE code Gram matrix.

    Train columns compare ``Z_m Z_m^T`` with the training prior; test columns use
    Nystrom projections of the test points and the test-test prior block.
    """
    out = Path(out_dir)
    prep = prepare(cfg)
    files = []
    if cfg.checkpoint:
        net = load_network(cfg.checkpoint)
    else:
        net = train_network(cfg, prep)
        files.append(_save(out / "model.dkae", net))
    p_test = prep.kernel(prep.test)
    h_tr = encode(net, prep.train.samples)
    h_te = encode(net, prep.test.samples)
    dk_train = code_loss(h_tr @ h_tr.T, prep.p_train)
    dk_test = code_loss(h_te @ h_te.T, p_test)

    n = len(prep.train)
    model = kpca_fit(prep.p_train, n)
    z_tr = kpca_project(model)
    z_te = nystrom_project(model, prep.kernel(prep.test, prep.train))
    k_tr = np.zeros_like(prep.p_train)
    k_te = np.zeros_like(p_test)
    done = 0
    rows = []
    for m in _components_grid(cfg, n):
        upto = min(m, model.m)
        if upto > done:
            a, b = z_tr[:, done:upto], z_te[:, done:upto]
            k_tr += a @ a.T
            k_te += b @ b.T
            done = upto
        rows.append((m, code_loss(k_tr, prep.p_train), code_loss(k_te, p_test), dk_train, dk_test))
    files.append(write_csv(out / "kpca_comparison.csv",
                           ["m", "kpca_train_loss", "kpca_test_loss", "dkae_train_loss", "dkae_test_loss"], rows))
    write_manifest(out, "kpca-compare", cfg, [f.name for f in files])
    return rows


@dataclass
class DenoiseResult:
    components: int
    kpca_mse: float
    dkae_mse: float
    sigma: float
    reg: float


def denoise_classes(cfg: ExperimentConfig) -> tuple[int, ...]:
    if cfg.denoise_classes:
        return tuple(cfg.denoise_classes)
    return (5, 6) if cfg.uses_idx else (0, 1)


def run_denoising(cfg: ExperimentConfig, out_dir) -> DenoiseResult:
    """Denoise the noisy test split two ways and score both against the clean images.

    kPCA: eigenvectors of the training prior, Nystrom projection of the noisy
    points, RBF kernel ridge regression back to input space (width = median
    projected distance, regularizer picked on the noisy validation split).
    dkAE: encode the noisy points, keep the leading PCA directions of the
    training codes, decode.
    """
    out = Path(out_dir)
    prep = prepare(cfg, classes=denoise_classes(cfg))
    n = len(prep.train)
    m = min(cfg.components, max(1, n // 4), cfg.code_dim)
    noise_rng = make_rng(cfg.seed, STREAM_NOISE)
    noisy_val = add_gaussian_noise(prep.val, cfg.noise_std, noise_rng)
    noisy_test = add_gaussian_noise(prep.test, cfg.noise_std, noise_rng)

    model = kpca_fit(prep.p_train, m)
    z_tr = kpca_project(model)
    z_val = nystrom_project(model, prep.kernel(noisy_val, prep.train))
    z_te = nystrom_project(model, prep.kernel(noisy_test, prep.train))
    sigma = median_sigma(z_tr)
    z_all = np.vstack([z_tr, z_val])
    x_all = np.vstack([prep.train.samples, prep.val.samples])
    reg = grid_search_reg(z_all, x_all, sigma, cfg.krr_regs, np.arange(n), np.arange(n, len(z_all)))
    kpca_out = krr_predict(krr_fit(z_tr, prep.train.samples, sigma, reg), z_te)

    net = train_network(cfg, prep)
    pca = pca_fit(encode(net, prep.train.samples), m)
    dkae_out = decode(net, pca_backproject(pca, pca_project(pca, encode(net, noisy_test.samples))))

    clean = prep.test.samples
    result = DenoiseResult(m, float(np.mean((kpca_out - clean) ** 2)), float(np.mean((dkae_out - clean) ** 2)),
                           sigma, reg)
    files = [
        write_csv(out / "denoise.csv", ["noise_std", "components", "kpca_mse", "dkae_pca_mse", "krr_sigma", "krr_reg"],
                  [(float(cfg.noise_std), m, result.kpca_mse, result.dkae_mse, sigma, reg)]),
        _save(out / "model.dkae", net),
    ]
    panels = {"original": clean, "noisy": noisy_test.samples, "kpca": kpca_out, "dkae_pca": dkae_out}
    for i in range(min(cfg.dump_images, len(clean))):
        for kind, imgs in panels.items():
            files.append(write_pgm(out / "images" / f"{i:03d}_{kind}.pgm", imgs[i].reshape(prep.image_shape)))
    write_manifest(out, "denoise", cfg, [f.relative_to(out) for f in files])
    return result


def _save(path: Path, net: Network) -> Path:
    return atomic_write(path, network_bytes(net))
