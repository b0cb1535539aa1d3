"""Experiment configuration: a flat ``key = value`` text format.

Lines starting with ``#`` and blank lines are ignored. Lists are comma
separated. Unknown keys are rejected so typos do not silently fall back to
defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass
from pathlib import Path

from ..autoencoder import TrainConfig


@dataclass
class ExperimentConfig:
    seed: int = 0

    # data: synthetic blobs unless IDX files are given
    mnist_images: str = ""
    mnist_labels: str = ""
    subset_size: int = 2000
    classes: tuple[int, ...] = ()
    blobs_n: int = 600
    blobs_d: int = 20
    blobs_classes: int = 3
    blobs_separation: float = 1.0
    blobs_cluster_std: float = 0.0          # 0 means separation / 4
    split: tuple[float, ...] = (0.7, 0.15, 0.15)

    # probabilistic cluster kernel
    pck_q: int = 10
    pck_g: int = 10
    gmm_subset: int = 200
    gmm_max_iters: int = 100
    gmm_tol: float = 1e-6

    # autoencoder
    lam: float = 0.1
    hidden_dims: tuple[int, ...] = (16,)
    code_dim: int = 8
    batch_size: int = 64
    pretrain_epochs: int = 30
    finetune_epochs: int = 100
    batches_per_epoch: int = 0              # 0 means (n / k)^2
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint: str = ""

    # sweeps
    lambda_grid: tuple[float, ...] = (0.0, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)
    code_grid: tuple[int, ...] = (4, 16, 64, 256, 2000)
    components_grid: tuple[int, ...] = ()   # empty means every m in 1..n_train

    # denoising
    denoise_classes: tuple[int, ...] = ()   # empty: (5, 6) for IDX data, (0, 1) for blobs
    components: int = 32
    noise_std: float = 0.25
    krr_regs: tuple[float, ...] = (1e-3, 1e-2, 0.1, 0.5, 1.0, 10.0)
    dump_images: int = 8

    @property
    def uses_idx(self) -> bool:
        return bool(self.mnist_images)

    def train_config(self, **overrides) -> TrainConfig:
        cfg = TrainConfig(
            lam=self.lam, hidden_dims=tuple(self.hidden_dims), code_dim=self.code_dim,
            batch_size=self.batch_size, pretrain_epochs=self.pretrain_epochs,
            finetune_epochs=self.finetune_epochs, learning_rate=self.learning_rate,
            beta1=self.adam_beta1, beta2=self.adam_beta2, eps=self.adam_eps, seed=self.seed,
            batches_per_epoch=self.batches_per_epoch or None,
        )
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for key in ("mnist_images", "mnist_labels", "checkpoint"):
            path = getattr(self, key)
            if path and not Path(path).exists():
                raise ValueError(f"{key}: no such file {path}")
        for key in ("lambda_grid", "code_grid", "krr_regs"):
            if not getattr(self, key):
                raise ValueError(f"{key} must not be empty")
        if any(not 0.0 <= v <= 1.0 for v in self.lambda_grid):
            raise ValueError("lambda_grid values must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.components < 1:
            raise ValueError("components must be >= 1")
        self.train_config()

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


ALIASES = {"lambda": "lam"}


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _convert(name: str, raw: str):
    hint = typing.get_type_hints(ExperimentConfig)[name]
    raw = raw.strip()
    try:
        if typing.get_origin(hint) is tuple:
            (elem, _) = typing.get_args(hint)
            return tuple(elem(s) for s in (p.strip() for p in raw.split(",")) if s)
        return hint(raw)
    except ValueError as exc:
        raise ValueError(f"bad value for {name!r}: {raw!r}") from exc


def apply_overrides(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    changes = {}
    for key, raw in values.items():
        name = ALIASES.get(key, key).replace("-", "_")
        if name not in known:
            raise ValueError(f"unknown config key {key!r}")
        changes[name] = _convert(name, raw) if isinstance(raw, str) else raw
    return dataclasses.replace(cfg, **changes)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return apply_overrides(base or ExperimentConfig(), values)


MANIFEST_MARKER = "# configuration"


def load_config(path) -> ExperimentConfig:
    """Read a config file; a run manifest is accepted too (its configuration section is used)."""
    text = Path(path).read_text()
    if MANIFEST_MARKER in text:
        text = text.split(MANIFEST_MARKER, 1)[1]
    return parse_config_text(text)
