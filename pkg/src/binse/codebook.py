"""Spectral-shape codebooks: generalized Lloyd training over LSF vectors plus binary I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .linpred import ArModel, LsfVector, ar_to_lsf, levinson_durbin, lsf_to_ar
from .signal_core import Frame, autocorrelation

_MAGIC = b"CBK1"
_VERSION = 1
_KINDS = {"speech": 0, "noise": 1}
_KINDS_INV = {v: k for k, v in _KINDS.items()}

SILENCE_ENERGY = 1e-8
LLOYD_MAX_ITERS = 100
LLOYD_REL_TOL = 1e-6


class CodebookFormatError(ValueError):
    """Malformed codebook file; the message names the failing byte offset."""


@dataclass(frozen=True)
class Codebook:
    """Ordered set of LSF spectral-shape entries, all of one order."""

    entries: npt.NDArray[np.float64]  # shape (count, order)
    kind: str

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise ValueError("codebook needs at least one entry of shape (count, order)")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown codebook kind {self.kind!r}")
        for row in entries:
            LsfVector(row)  # validates monotonicity / bounds
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return self.entries.shape[1]

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def ar_models(self) -> list[ArModel]:
        return [lsf_to_ar(LsfVector(row)) for row in self.entries]


def _frame_to_lsf(frame: Frame, order: int) -> npt.NDArray[np.float64] | None:
    if frame.energy < SILENCE_ENERGY:
        return None
    r = autocorrelation(frame, order)
    if r[0] <= 0:
        return None
    try:
        model = levinson_durbin(r)
        return ar_to_lsf(model).frequencies
    except (ValueError, ArithmeticError):
        return None


def train(
    training_frames,
    size: int,
    order: int,
    seed: int,
    kind: str = "speech",
    on_iteration=None,
) -> Codebook:
    """Train a codebook with the generalized Lloyd algorithm on LSF vectors.

    Frames below the silence-energy threshold are skipped.  Initial
    centroids are ``size`` distinct training vectors drawn under ``seed``;
    empty cells are repaired by splitting the highest-distortion cell.
    """
    if size < 1:
        raise ValueError("codebook size must be >= 1")
    vectors = []
    for frame in training_frames:
        lsf = _frame_to_lsf(frame, order)
        if lsf is not None:
            vectors.append(lsf)
    if len(vectors) < size:
        raise ValueError(
            f"need at least {size} usable training frames, got {len(vectors)}"
        )
    data = np.array(vectors)
    rng = np.random.default_rng(seed)
    centroids = data[rng.choice(len(data), size=size, replace=False)].copy()

    prev_distortion = np.inf
    for iteration in range(LLOYD_MAX_ITERS):
        d2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        per_vector = d2[np.arange(len(data)), assign]
        distortion = float(per_vector.mean())
        if on_iteration is not None:
            on_iteration(iteration, distortion)
        cell_distortion = np.bincount(assign, weights=per_vector, minlength=size)
        for cell in range(size):
            members = data[assign == cell]
            if len(members):
                centroids[cell] = members.mean(axis=0)
            else:
                worst = int(np.argmax(cell_distortion))
                centroids[cell] = centroids[worst] + 1e-4
                centroids[worst] = centroids[worst] - 1e-4
        if prev_distortion - distortion < LLOYD_REL_TOL * max(distortion, 1e-30):
            break
        prev_distortion = distortion

    centroids = _sanitize_centroids(centroids)
    order_idx = np.lexsort(centroids.T[::-1])
    return Codebook(centroids[order_idx], kind)


def _sanitize_centroids(centroids: npt.NDArray[np.float64]):
    """Force strict monotonicity inside (0, pi); averaging can only violate it marginally."""
    eps = 1e-9
    out = centroids.copy()
    for row in out:
        np.clip(row, eps, np.pi - eps, out=row)
        for i in range(1, len(row)):
            if row[i] <= row[i - 1]:
                row[i] = row[i - 1] + eps
    return out


def save(cb: Codebook, path) -> None:
    """Write the binary CBK1 format (little-endian, float64 LSF entries)."""
    payload = struct.pack(
        "<4sHBHI", _MAGIC, _VERSION, _KINDS[cb.kind], cb.order, cb.size
    )
    payload += cb.entries.astype("<f8").tobytes()
    Path(path).write_bytes(payload)


def load(path) -> Codebook:
    raw = Path(path).read_bytes()
    header_len = struct.calcsize("<4sHBHI")
    if len(raw) < header_len:
        raise CodebookFormatError(f"truncated header at offset {len(raw)}")
    magic, version, kind_code, order, count = struct.unpack_from("<4sHBHI", raw, 0)
    if magic != _MAGIC:
        raise CodebookFormatError(f"bad magic {magic!r} at offset 0")
    if version != _VERSION:
        raise CodebookFormatError(f"unsupported version {version} at offset 4")
    if kind_code not in _KINDS_INV:
        raise CodebookFormatError(f"unknown kind byte {kind_code} at offset 6")
    expected = header_len + count * order * 8
    if len(raw) != expected:
        raise CodebookFormatError(
            f"truncated entry table at offset {len(raw)} (expected {expected} bytes)"
        )
    entries = np.frombuffer(raw, dtype="<f8", offset=header_len).reshape(count, order)
    try:
        return Codebook(entries.copy(), _KINDS_INV[kind_code])
    except ValueError as exc:
        raise CodebookFormatError(f"invalid entry data: {exc}") from exc
