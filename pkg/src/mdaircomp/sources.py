"""Source distributions for device data."""

from __future__ import annotations

import numpy as np
from scipy import stats

TRUNC_GAUSS_MEAN = 0.5
TRUNC_GAUSS_STD = 0.15

SOURCE_DISTS = ("uniform", "truncated_gaussian", "dirichlet")


def _truncnorm():
    a = (0.0 - TRUNC_GAUSS_MEAN) / TRUNC_GAUSS_STD
    b = (1.0 - TRUNC_GAUSS_MEAN) / TRUNC_GAUSS_STD
    return stats.truncnorm(a, b, loc=TRUNC_GAUSS_MEAN, scale=TRUNC_GAUSS_STD)


def sample_sources(dist: str, size, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Draw device source values.

    ``uniform`` and ``truncated_gaussian`` produce scalars on [0, 1] with the
    given ``size``. ``dirichlet`` produces probability vectors; ``size`` must
    then be ``(n, W)`` and ``alpha`` is the symmetric concentration.
    """
    if dist == "uniform":
        return rng.random(size)
    if dist == "truncated_gaussian":
        return _truncnorm().rvs(size=size, random_state=rng)
    if dist == "dirichlet":
        n, w = size
        return rng.dirichlet(np.full(w, alpha), size=n)
    raise ValueError(f"unknown source distribution {dist!r}; expected one of {SOURCE_DISTS}")


def source_pdf(dist: str):
    """Density on [0, 1] of a scalar source distribution."""
    if dist == "uniform":
        return lambda x: np.where((x >= 0) & (x <= 1), 1.0, 0.0)
    if dist == "truncated_gaussian":
        return _truncnorm().pdf
    raise ValueError(f"no scalar density for {dist!r}")
