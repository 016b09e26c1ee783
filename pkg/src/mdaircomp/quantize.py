"""Scalar stochastic quantization, count-vector bookkeeping and VQ codebooks.

Indices are zero-based throughout: codeword ``q`` of a codebook with ``Q``
levels is ``levels[q]`` for ``q`` in ``0..Q-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Codebook:
    """Uniform endpoint-inclusive scalar codebook on ``[lo, hi]``."""

    levels: np.ndarray
    lo: float
    hi: float

    @property
    def q(self) -> int:
        return int(self.levels.size)

    @property
    def bits(self) -> float:
        return float(np.log2(self.q))

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / (self.q - 1)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def sq_norm(self) -> float:
        return float(np.dot(self.levels, self.levels))

    def to_record(self) -> str:
        return json.dumps(
            {"kind": "uniform", "lo": self.lo, "hi": self.hi, "q": self.q,
             "levels": self.levels.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_record(cls, text: str) -> "Codebook":
        rec = json.loads(text)
        cb = make_uniform_codebook(rec["lo"], rec["hi"], rec["q"])
        if not np.allclose(cb.levels, np.asarray(rec["levels"]), rtol=0, atol=1e-12):
            raise ValueError("stored levels do not match a uniform grid on the stored range")
        return cb


def make_uniform_codebook(lo: float, hi: float, q: int) -> Codebook:
    """Build ``q`` equally spaced levels including both endpoints."""
    if int(q) != q or q < 2:
        raise ValueError(f"codebook needs at least 2 levels, got {q}")
    if not lo < hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    q = int(q)
    levels = lo + (hi - lo) * np.arange(q) / (q - 1)
    levels[-1] = hi
    return Codebook(levels=levels, lo=float(lo), hi=float(hi))


def quantize_stochastic(s, cb: Codebook, rng: np.random.Generator):
    """Randomized rounding of ``s`` to one of its two bracketing codewords.

    With ``u_l <= s < u_{l+1}`` the upper index is chosen with probability
    ``(s - u_l) / (u_{l+1} - u_l)``, so the dequantized value is unbiased.
    Inputs outside ``[lo, hi]`` map deterministically to the boundary index.

    Parameters
    ----------
    s : float or array_like
        Source value(s).
    cb : Codebook
    rng : numpy.random.Generator
        One uniform draw is consumed per element, in or out of range.

    Returns
    -------
    int or ndarray of int
        Zero-based codeword indices with the shape of ``s``.
    """
    s_arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s_arr)):
        raise ValueError("non-finite source value")
    u = cb.levels
    draws = rng.random(s_arr.shape)
    lower = np.clip(np.searchsorted(u, s_arr, side="right") - 1, 0, cb.q - 2)
    frac = (s_arr - u[lower]) / (u[lower + 1] - u[lower])
    idx = lower + (draws < frac)
    idx = np.where(s_arr < cb.lo, 0, idx)
    idx = np.where(s_arr >= cb.hi, cb.q - 1, idx)
    idx = idx.astype(np.int64)
    return int(idx) if idx.ndim == 0 else idx


def dequantize(idx, cb: Codebook):
    idx_arr = np.asarray(idx)
    if np.any(idx_arr < 0) or np.any(idx_arr >= cb.q):
        raise IndexError(f"codeword index out of range [0, {cb.q})")
    out = cb.levels[idx_arr]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CountVector:
    """Histogram of codeword selections over all devices."""

    counts: np.ndarray
    k_total: int

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.counts))


def aggregate_counts(indices, q: int) -> CountVector:
    indices = np.asarray(indices, dtype=np.int64).ravel()
    if indices.size == 0:
        raise ValueError("no devices to aggregate")
    if indices.min() < 0 or indices.max() >= q:
        raise IndexError(f"codeword index out of range [0, {q})")
    counts = np.bincount(indices, minlength=q)
    return CountVector(counts=counts, k_total=int(indices.size))


def reconstruct_average(z_hat, cb: Codebook, k: int) -> float:
    """Estimated average ``u^T z_hat / k``; ``z_hat`` may be non-integer."""
    if k < 1:
        raise ValueError("device count must be positive")
    z_hat = np.asarray(z_hat, dtype=float)
    if z_hat.shape[0] != cb.q:
        raise ValueError(f"count vector has length {z_hat.shape[0]}, codebook has {cb.q}")
    return cb.levels @ z_hat / k


# ---------------------------------------------------------------------------
# vector quantization


@dataclass(frozen=True)
class VectorCodebook:
    centroids: np.ndarray  # (Q, W)
    distortion_history: tuple = field(default=(), compare=False)

    @property
    def q(self) -> int:
        return self.centroids.shape[0]

    @property
    def w(self) -> int:
        return self.centroids.shape[1]

    def reconstruct_average(self, z_hat, k: int) -> np.ndarray:
        z_hat = np.asarray(z_hat, dtype=float)
        if z_hat.shape[0] != self.q:
            raise ValueError("count vector length does not match codebook size")
        return self.centroids.T @ z_hat / k


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # exact per-pair differences; the expanded ||x||^2 - 2x.c + ||c||^2 form
    # breaks the lowest-index tie rule through rounding
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("nqw,nqw->nq", diff, diff)


def _assign(x: np.ndarray, c: np.ndarray, chunk: int = 2048):
    labels = np.empty(x.shape[0], dtype=np.int64)
    mind = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        d = _sq_dists(x[start:start + chunk], c)
        labels[start:start + chunk] = d.argmin(axis=1)
        mind[start:start + chunk] = d.min(axis=1)
    return labels, mind


def kmeans_codebook(samples, q: int, rng: np.random.Generator, iters: int = 50) -> VectorCodebook:
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are reseeded to the sample farthest from its centroid. The
    per-iteration within-cluster sum of squares is kept in
    ``distortion_history`` (entry 0 is the seeding distortion).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be an (n, W) array")
    n = x.shape[0]
    if q < 1 or q > n:
        raise ValueError(f"cannot fit {q} centroids to {n} samples")

    centers = np.empty((q, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    mind = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, q):
        total = mind.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(np.searchsorted(np.cumsum(mind), rng.random() * total, side="right"))
            pick = min(pick, n - 1)
        centers[j] = x[pick]
        mind = np.minimum(mind, np.sum((x - centers[j]) ** 2, axis=1))

    labels, mind = _assign(x, centers)
    history = [float(mind.sum())]
    for _ in range(iters):
        counts = np.bincount(labels, minlength=q)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(mind))
            centers[j] = x[far]
            mind[far] = 0.0
        new_labels, mind = _assign(x, centers)
        history.append(float(mind.sum()))
        if np.array_equal(new_labels, labels) and nonempty.all():
            break
        labels = new_labels
    return VectorCodebook(centroids=centers, distortion_history=tuple(history))


def vq_assign(v, vcb: VectorCodebook):
    """Nearest centroid index (ties go to the lowest index).

    Accepts a single ``(W,)`` vector or a batch ``(n, W)``.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    x = v[None, :] if single else v
    if x.shape[1] != vcb.w:
        raise ValueError(f"vector dimension {x.shape[1]} != codebook dimension {vcb.w}")
    labels, _ = _assign(x, vcb.centroids)
    return int(labels[0]) if single else labels
