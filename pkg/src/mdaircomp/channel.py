"""Rayleigh massive-MIMO channels, hardening metric and AWGN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples with variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelSet:
    h_matrix: np.ndarray  # (M, K), column k is device k's channel

    @property
    def m(self) -> int:
        return self.h_matrix.shape[0]

    @property
    def k(self) -> int:
        return self.h_matrix.shape[1]

    @property
    def h_bar(self) -> np.ndarray:
        """Composite channel (sum over devices), assumed perfectly known."""
        return self.h_matrix.sum(axis=1)

    def device_gains(self) -> np.ndarray:
        """Effective per-device gain ``h_k^T conj(h_bar) / M`` after combining."""
        return self.h_matrix.T @ np.conj(self.h_bar) / self.m


@dataclass(frozen=True)
class NoiseBlock:
    n_matrix: np.ndarray  # (L, M)
    sigma2: float


def sample_rayleigh(m: int, k: int, rng: np.random.Generator, pathloss: float = 1.0) -> ChannelSet:
    if m < 1 or k < 1:
        raise ValueError("need at least one antenna and one device")
    return ChannelSet(h_matrix=crandn(rng, (m, k), var=pathloss))


def hardening_metric(cs: ChannelSet) -> float:
    """``||H^H H / M - I_K||_F^2 / K^2``."""
    h = cs.h_matrix
    gram = h.conj().T @ h / cs.m
    dev = gram - np.eye(cs.k)
    return float(np.sum(np.abs(dev) ** 2) / cs.k ** 2)


def sample_awgn(l: int, m: int, sigma2: float, rng: np.random.Generator) -> NoiseBlock:
    if sigma2 < 0:
        raise ValueError(f"negative noise variance {sigma2}")
    if sigma2 == 0:
        return NoiseBlock(np.zeros((l, m), dtype=complex), 0.0)
    return NoiseBlock(crandn(rng, (l, m), var=sigma2), float(sigma2))


def post_combine_noise_var(cs: ChannelSet, sigma2: float) -> float:
    """Per-entry variance of ``N conj(h_bar) / M``: ``sigma2 ||h_bar||^2 / M^2``."""
    hb = cs.h_bar
    return float(sigma2 * np.real(np.vdot(hb, hb)) / cs.m ** 2)


def snr_db_to_sigma2(snr_db: float) -> float:
    """Noise variance for unit-power transmit symbols."""
    return float(10.0 ** (-snr_db / 10.0))


SNR_REFERENCES = ("combiner", "antenna")


def antenna_noise_var(snr_db: float, m: int, k: int, reference: str = "combiner") -> float:
    """Per-antenna AWGN variance realizing ``snr_db`` at the chosen reference.

    ``antenna``: the SNR is the per-antenna ratio, ``sigma2 = 10^(-SNR/10)``.
    ``combiner``: the SNR holds at the combiner output, so the expected
    variance of ``N conj(h_bar) / M`` (``sigma2_ant K / M``) equals
    ``10^(-SNR/10)``.
    """
    sigma2 = snr_db_to_sigma2(snr_db)
    if reference == "antenna":
        return sigma2
    if reference == "combiner":
        return sigma2 * m / k
    raise ValueError(f"unknown SNR reference {reference!r}; expected one of {SNR_REFERENCES}")


def sample_gram(m: int, k: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` Gram matrices ``H^H H`` without materializing ``H``.

    Uses the Bartlett factorization of the complex Wishart law: ``G = T T^H``
    with ``T`` lower triangular, ``|T_ii|^2 ~ Gamma(m - i, 1)`` (zero-based
    ``i``) and ``T_ij ~ CN(0, 1)`` below the diagonal. Returns an array of
    shape ``(size, k, k)`` distributed exactly as for ``H`` with i.i.d.
    CN(0, 1) entries of shape ``(m, k)``. Requires ``m >= k``.
    """
    if m < k:
        raise ValueError("Bartlett sampler needs m >= k")
    t = np.zeros((size, k, k), dtype=complex)
    rows, cols = np.tril_indices(k, -1)
    t[:, rows, cols] = crandn(rng, (size, rows.size))
    diag = np.sqrt(rng.gamma(shape=m - np.arange(k), size=(size, k)))
    t[:, np.arange(k), np.arange(k)] = diag
    return t @ np.conj(np.swapaxes(t, 1, 2))


def gains_from_gram(gram: np.ndarray, m: int):
    """Per-device combining gains and ``||h_bar||^2`` from Gram matrices.

    With ``G_jk = h_j^H h_k`` the gain of device k is ``sum_j G_jk / M`` and
    ``||h_bar||^2 = sum_jk G_jk``.
    """
    gains = gram.sum(axis=-2) / m
    hbar_sq = np.real(gram.sum(axis=(-2, -1)))
    return gains, hbar_sq
