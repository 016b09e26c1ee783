"""Preambles, uplink superposition and channel-hardening combining.

The blind scheme applies no transmit pre-equalization: every device sends the
preamble column of its codeword through its own channel, and the server
combines with the conjugate composite channel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelSet, NoiseBlock, crandn

MASTER_SHAPE = (60, 256)
DEFAULT_MASTER_SEED = 20240601


@dataclass(frozen=True)
class SensingMatrix:
    p: np.ndarray  # (L, Q) complex
    kind: str  # "gaussian" or "dft"
    parent_seed: Optional[int] = None
    amplitude: float = 1.0  # transmit scaling: devices send amplitude * p[:, q]

    @property
    def tx(self) -> np.ndarray:
        """Transmitted codewords as seen by the receiver, ``amplitude * p``."""
        return self.p if self.amplitude == 1.0 else self.amplitude * self.p

    @property
    def l(self) -> int:
        return self.p.shape[0]

    @property
    def q(self) -> int:
        return self.p.shape[1]

    def save(self, path) -> None:
        header = {"kind": self.kind, "l": self.l, "q": self.q, "seed": self.parent_seed,
                  "amplitude": self.amplitude}
        np.savez(path, header=np.array(json.dumps(header, sort_keys=True)),
                 real=np.ascontiguousarray(self.p.real), imag=np.ascontiguousarray(self.p.imag))

    @classmethod
    def load(cls, path) -> "SensingMatrix":
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            p = data["real"] + 1j * data["imag"]
        if p.shape != (header["l"], header["q"]):
            raise ValueError(f"stored matrix shape {p.shape} disagrees with header {header}")
        return cls(p=p, kind=header["kind"], parent_seed=header["seed"],
                   amplitude=header.get("amplitude", 1.0))


def master_codebook(seed: int = DEFAULT_MASTER_SEED) -> SensingMatrix:
    """The fixed 60 x 256 CN(0, 1) modulation codebook shared by all devices."""
    rng = np.random.default_rng(seed)
    return SensingMatrix(p=crandn(rng, MASTER_SHAPE), kind="gaussian", parent_seed=seed)


def gaussian_sensing_matrix(l: int, q: int, seed: int = DEFAULT_MASTER_SEED) -> SensingMatrix:
    """Top-left ``l x q`` block of the master codebook."""
    if not (1 <= l <= MASTER_SHAPE[0] and 1 <= q <= MASTER_SHAPE[1]):
        raise ValueError(f"({l}, {q}) does not fit inside the {MASTER_SHAPE} master codebook")
    master = master_codebook(seed)
    return SensingMatrix(p=master.p[:l, :q].copy(), kind="gaussian", parent_seed=seed)


def dft_sensing_matrix(l: int, q: int, unit_power: bool = False) -> SensingMatrix:
    """First ``q`` columns of the unitary ``l``-point DFT matrix.

    ``p`` is always orthonormal. With ``unit_power`` the transmit amplitude is
    ``sqrt(l)`` so each channel use carries unit power, matching CN(0, 1)
    Gaussian preambles.
    """
    if q > l:
        raise ValueError(f"orthogonal DFT preamble needs q <= l, got q={q}, l={l}")
    rows = np.arange(l)[:, None]
    cols = np.arange(q)[None, :]
    p = np.exp(-2j * np.pi * rows * cols / l) / np.sqrt(l)
    return SensingMatrix(p=p, kind="dft", amplitude=float(np.sqrt(l)) if unit_power else 1.0)


def transmit_superpose(p: SensingMatrix, indices, cs: ChannelSet, noise: Optional[NoiseBlock]) -> np.ndarray:
    """Received block ``Y = sum_k p_{idx_k} h_k^T + N`` of shape ``(L, M)``.

    ``P[:, idx] @ H^T`` is exactly the sum of the K rank-one device terms.
    """
    indices = np.asarray(indices, dtype=np.int64).ravel()
    if indices.size != cs.k:
        raise ValueError(f"{indices.size} device indices for {cs.k} channels")
    if indices.min() < 0 or indices.max() >= p.q:
        raise IndexError("codeword index outside the preamble matrix")
    y = p.tx[:, indices] @ cs.h_matrix.T
    if noise is not None:
        if noise.n_matrix.shape != y.shape:
            raise ValueError(f"noise block {noise.n_matrix.shape} vs received block {y.shape}")
        y = y + noise.n_matrix
    return y


def harden_combine(y: np.ndarray, cs: ChannelSet) -> np.ndarray:
    """``Y conj(h_bar) / M``."""
    if y.shape[1] != cs.m:
        raise ValueError(f"received block has {y.shape[1]} antennas, channel has {cs.m}")
    return y @ np.conj(cs.h_bar) / cs.m


def ideal_observation(p: SensingMatrix, z, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Pure AWGN reference: ``P z + n`` with ``n ~ CN(0, sigma2 I)``."""
    clean = p.tx @ np.asarray(z, dtype=float)
    if sigma2 == 0:
        return clean.astype(complex)
    return clean + crandn(rng, clean.shape, var=sigma2)


@dataclass(frozen=True)
class RealStackedModel:
    y_r: np.ndarray  # (2L,) or (2L, B)
    p_r: np.ndarray  # (2L, Q)
    noise_var_r: float

    @property
    def l(self) -> int:
        return self.p_r.shape[0] // 2


def stack_matrix(p: np.ndarray) -> np.ndarray:
    return np.vstack([p.real, p.imag])


def stack_vector(y: np.ndarray) -> np.ndarray:
    return np.concatenate([y.real, y.imag], axis=0)


def unstack(x_r: np.ndarray) -> np.ndarray:
    half = x_r.shape[0] // 2
    return x_r[:half] + 1j * x_r[half:]


def real_stack(y_bar: np.ndarray, p: SensingMatrix, noise_var: float) -> RealStackedModel:
    """Real reformulation valid because the count vector is real."""
    if y_bar.shape[0] != p.l:
        raise ValueError(f"observation length {y_bar.shape[0]} vs preamble length {p.l}")
    return RealStackedModel(y_r=stack_vector(y_bar), p_r=stack_matrix(p.tx), noise_var_r=noise_var / 2.0)

