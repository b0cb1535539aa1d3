"""Output files: CSV tables, binary PGM images and the run manifest.

Everything is written to a temporary file in the target directory and then
renamed into place, so readers never observe a half-written file.
"""
from __future__ import annotations

import io
import os
import platform
import tempfile
from pathlib import Path

import numpy as np
import scipy

from .. import __version__


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        buf.write(",".join(format_value(v) for v in row) + "\n")
    return atomic_write(path, buf.getvalue().encode())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def pgm_bytes(img) -> bytes:
    """8-bit binary PGM (P5) of an image with values in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    pix = np.rint(255.0 * np.clip(img, 0.0, 1.0)).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path, img) -> Path:
    return atomic_write(path, pgm_bytes(img))


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    pix = np.frombuffer(parts[4], dtype=np.uint8)
    if pix.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, got {pix.size}")
    return pix.reshape(h, w)


def heatmap(k) -> np.ndarray:
    """Min-max scale a matrix into [0, 1] for display."""
    k = np.asarray(k, dtype=np.float64)
    lo, hi = k.min(), k.max()
    return np.zeros_like(k) if hi <= lo else (k - lo) / (hi - lo)


def write_manifest(out_dir, command: str, cfg, outputs) -> Path:
    lines = [
        f"command = {command}",
        f"seed = {cfg.seed}",
        f"config_sha256 = {cfg.digest()}",
        f"dkae_version = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        "outputs = " + ",".join(sorted(str(p) for p in outputs)),
        "",
        "# configuration",
        cfg.to_text(),
    ]
    return atomic_write(Path(out_dir) / "manifest.txt", "\n".join(lines).encode())
