"""
Result records of a β sweep and their on-disk formats.

  results.csv      beta,c_beta,m_beta,I_beta,dist_to_UV,residual,norm_u,norm_v
                   12 significant digits, β decreasing down the file
  manifest.txt     the full run configuration as key = value lines
  *.bin            field snapshots: little-endian int64 ndim, int64 shape,
                   then float64 values in row-major order
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src import __version__

CSV_COLUMNS = ["beta", "c_beta", "m_beta", "I_beta", "dist_to_UV", "residual", "norm_u", "norm_v"]
FLOAT_FORMAT = "%.12g"

INITIAL_GUESS = "gaussian exp(-|x|^2 / w^2), w = 2 / sqrt(v_infinity), centered at the origin"


@dataclass
class SweepRecord:
    """One row of the convergence table."""
    beta: float
    c_beta: float
    m_beta: float
    I_beta: float
    dist_to_UV: float
    residual: float
    norm_u: float
    norm_v: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        # Round-off allowance for c_beta <= m_beta.
        if self.c_beta > self.m_beta + 1e-12 * max(1.0, abs(self.m_beta)):
            raise ValueError(f"c_beta={self.c_beta!r} exceeds m_beta={self.m_beta!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunManifest:
    """Everything needed to reproduce one run."""
    config: object
    created_at: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    code_version: str = __version__
    initial_guess: str = INITIAL_GUESS

    @classmethod
    def from_config(cls, config) -> "RunManifest":
        return cls(config=config)

    @property
    def seed(self) -> int:
        return self.config.seed

    def items(self) -> list[tuple[str, str]]:
        return [
            *self.config.items(),
            ("initial_guess", self.initial_guess),
            ("code_version", self.code_version),
            ("created_at", self.created_at),
        ]


# ─── CSV ─────────────────────────────────────────────────────────────────────

def records_frame(records: list[SweepRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([r.to_dict() for r in records], columns=CSV_COLUMNS)
    return frame.sort_values("beta", ascending=False, kind="stable").reset_index(drop=True)


def emit_csv(records: list[SweepRecord], path: Union[str, Path]) -> Path:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    records_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_csv(path: Union[str, Path]) -> list[SweepRecord]:
    frame = pd.read_csv(path, dtype=float)
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    return [SweepRecord(**{c: float(row[c]) for c in CSV_COLUMNS}) for _, row in frame.iterrows()]


# ─── Manifest ────────────────────────────────────────────────────────────────

def write_manifest(manifest: RunManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in manifest.items():
            f.write(f"{key} = {value}\n")
    return path


def read_manifest(path: Union[str, Path]) -> dict[str, str]:
    entries = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            key, sep, value = line.rstrip("\n").partition(" = ")
            if sep:
                entries[key] = value
    return entries


# ─── Binary field snapshots ──────────────────────────────────────────────────

def write_snapshot(path: Union[str, Path], values: np.ndarray) -> Path:
    values = np.ascontiguousarray(values, dtype="<f8")
    header = np.array([values.ndim, *values.shape], dtype="<i8")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(values.tobytes(order="C"))
    return path


def read_snapshot(path: Union[str, Path]) -> np.ndarray:
    raw = Path(path).read_bytes()
    ndim = int(np.frombuffer(raw, dtype="<i8", count=1)[0])
    shape = tuple(int(n) for n in np.frombuffer(raw, dtype="<i8", count=ndim, offset=8))
    offset = 8 * (1 + ndim)
    expected = int(np.prod(shape)) * 8
    if len(raw) - offset != expected:
        raise ValueError(f"{path}: expected {expected} bytes of values, found {len(raw) - offset}")
    return np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape).astype(float)
