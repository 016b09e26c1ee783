"""LASSO count recovery with ISTA, integer rounding and the matched filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..airlink import RealStackedModel, SensingMatrix


class PowerIterationError(RuntimeError):
    def __init__(self, msg, last_value, last_vector):
        super().__init__(msg)
        self.last_value = last_value
        self.last_vector = last_vector


def soft_threshold(x, beta):
    """``sign(x) * max(|x| - beta, 0)``, element-wise."""
    if np.any(np.asarray(beta) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(x) * np.maximum(np.abs(x) - beta, 0.0)


def max_eigen_gram(p_r: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of ``p_r^T p_r`` by power iteration.

    Stops once the Rayleigh quotient changes by less than ``tol`` relative.
    """
    p_r = np.asarray(p_r, dtype=float)
    if not np.any(p_r):
        raise ValueError("zero matrix has no dominant eigenvector")
    gram = p_r.T @ p_r
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ gram @ v)
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            # start vector in the null space; restart along the largest column
            v = gram[:, np.argmax(np.sum(gram ** 2, axis=0))].copy()
            v /= np.linalg.norm(v)
            continue
        v = w / norm
        new = float(v @ gram @ v)
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    raise PowerIterationError(f"power iteration did not converge in {max_iter} steps", lam, v)


@dataclass(frozen=True)
class LassoProblem:
    """``min_z 0.5 ||y_r - p_r z||^2 + rho ||z||_1`` on the real-stacked model.

    ``rho`` may be a scalar or, for a batch ``y_r`` of shape ``(2L, B)``, a
    length-``B`` vector with one weight per column.
    """

    model: RealStackedModel
    rho: object = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.rho) < 0):
            raise ValueError("regularization weight must be non-negative")


def default_rho(noise_var_r: float, q: int, scale: float = 1.0):
    """Universal threshold ``scale * sqrt(2 sigma_r^2 ln Q)``."""
    return scale * np.sqrt(2.0 * np.asarray(noise_var_r) * np.log(q))


def lasso_objective(p_r, y_r, z, rho):
    resid = y_r - p_r @ z
    return 0.5 * np.sum(resid ** 2, axis=0) + rho * np.sum(np.abs(z), axis=0)


def ista_solve(prob: LassoProblem, t: int, lam_max: Optional[float] = None, trajectory: bool = True):
    """Run ``t`` ISTA iterations from ``z = 0`` with step ``1 / lambda_max``.

    Returns the iterates ``z^(1) .. z^(t)`` stacked along a new leading axis,
    or only ``z^(t)`` when ``trajectory`` is False. The threshold is
    ``rho / lambda_max`` so the fixed point is the LASSO minimizer.
    """
    if t < 1:
        raise ValueError("need at least one iteration")
    p_r = prob.model.p_r
    y_r = prob.model.y_r
    if lam_max is None:
        lam_max = max_eigen_gram(p_r)
    mu = 1.0 / lam_max
    beta = mu * np.asarray(prob.rho, dtype=float)

    # z - mu p^T (p z - y) = (I - mu G) z + mu p^T y
    gram = p_r.T @ p_r
    step = np.eye(gram.shape[0]) - mu * gram
    drive = mu * (p_r.T @ y_r)
    z = np.zeros_like(drive)
    out = np.empty((t,) + z.shape) if trajectory else None
    for i in range(t):
        z = soft_threshold(step @ z + drive, beta)
        if trajectory:
            out[i] = z
    return out if trajectory else z


def improve_round(z_hat):
    """Round half away from zero, then clamp at zero."""
    z_hat = np.asarray(z_hat, dtype=float)
    rounded = np.sign(z_hat) * np.floor(np.abs(z_hat) + 0.5)
    return np.maximum(rounded, 0.0).astype(np.int64)


def matched_filter_detect(p: SensingMatrix, y_bar: np.ndarray) -> np.ndarray:
    """Correlation receiver ``clamp0(round(Re(P^H y) / a))`` for orthonormal ``P``.

    ``a`` is the transmit amplitude of the preamble (1 for a plain unitary DFT).
    """
    if p.kind != "dft" and not np.allclose(p.p.conj().T @ p.p, np.eye(p.q), atol=1e-10):
        raise ValueError("matched filter needs a preamble with orthonormal columns")
    return improve_round(np.real(p.p.conj().T @ y_bar) / p.amplitude)
