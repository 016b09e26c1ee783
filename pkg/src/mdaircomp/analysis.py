"""Error bounds, optimal quantization level and sparsity statistics.

The total-error bound is the sum of a quantization term, which falls like
``1 / q^2``, and a detection term, which grows like ``q ln q`` because a finer
codebook spreads the same number of devices over more, less separable
codewords. Their balance gives the optimal number of levels ``q*``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from . import pipeline
from .channel import antenna_noise_var, snr_db_to_sigma2
from .config import ScenarioConfig
from .quantize import CountVector, make_uniform_codebook, quantize_stochastic
from .sources import sample_sources

log = logging.getLogger(__name__)

DEFAULT_Q_GRID = (2, 4, 8, 16, 32, 64, 128, 256)


class BoundValidityWarning(UserWarning):
    """The preamble is too short for the sparse-recovery guarantee."""


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the total-error bound.

    Attributes
    ----------
    r : float
        Half-range ``R`` of the source scalars.
    k : int
        Number of devices.
    l : int
        Preamble length.
    sigma2_eff : float
        Noise variance seen by the detector after combining.
    c0 : float
        Estimator-dependent constant of the detection term.
    u_sq_norm : float
        ``||u||^2`` of the codebook levels.
    codebook_range : tuple, optional
        ``(lo, hi)`` of the scalar codebook. When given, ``||u||^2`` is
        recomputed for each candidate ``q`` from its own codebook.
    """

    r: float
    k: int
    l: int
    sigma2_eff: float
    c0: float = 1.0
    u_sq_norm: float = 1.0
    codebook_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.r <= 0 or self.k < 1 or self.l < 1:
            raise ValueError("r, k and l must be positive")
        if self.sigma2_eff < 0 or self.c0 < 0 or self.u_sq_norm < 0:
            raise ValueError("sigma2_eff, c0 and u_sq_norm must be non-negative")

    def u_sq_norm_for(self, q: int) -> float:
        if self.codebook_range is None:
            return self.u_sq_norm
        return make_uniform_codebook(*self.codebook_range, q).sq_norm


@dataclass(frozen=True)
class SweepRecord:
    q: int
    l: int
    snr_db: float
    m: int
    mse_empirical: float
    mse_bound: float
    sparsity_mean: float
    trials: int
    detector_id: str
    seed: int

    CSV_HEADER = ("q", "l", "snr_db", "m", "detector", "trials", "mse_empirical", "mse_bound",
                  "sparsity_mean", "seed")

    def csv_row(self) -> tuple:
        return (self.q, self.l, self.snr_db, self.m, self.detector_id, self.trials,
                self.mse_empirical, self.mse_bound, self.sparsity_mean, self.seed)


def _check_q(q):
    if q < 2:
        raise ValueError(f"need q >= 2, got {q}")


def quant_term(bp: BoundParams, q: int) -> float:
    """Quantization part of the bound, ``(2 / K) R^2 / (3 q^2)``."""
    _check_q(q)
    return 2.0 * bp.r ** 2 / (3.0 * bp.k * q ** 2)


def quant_term_from_codebook(cb, k: int) -> float:
    """Same term from a concrete codebook's step: ``(2 / K) delta^2 / 12``."""
    return 2.0 * cb.delta ** 2 / (12.0 * k)


def detection_valid(bp: BoundParams, q: int) -> bool:
    """Whether ``L >= K ln(q / K)``, the preamble-length condition of the bound."""
    return bp.l >= bp.k * np.log(q / bp.k)


def detect_term(bp: BoundParams, q: int, warn: bool = True) -> float:
    """Detection part, ``c0 ||u||^2 2 sigma2_eff q ln q / (K L)``."""
    _check_q(q)
    if warn and not detection_valid(bp, q):
        warnings.warn(f"L={bp.l} is below K ln(q/K)={bp.k * np.log(q / bp.k):.3g} at q={q}; "
                      "the detection bound is not guaranteed", BoundValidityWarning, stacklevel=2)
    return bp.c0 * bp.u_sq_norm_for(q) * 2.0 * bp.sigma2_eff * q * np.log(q) / (bp.k * bp.l)


def total_bound(bp: BoundParams, q: int, warn: bool = True) -> float:
    return quant_term(bp, q) + detect_term(bp, q, warn=warn)


def bound_curve(bp: BoundParams, q_grid: Iterable[int] = DEFAULT_Q_GRID) -> np.ndarray:
    return np.array([total_bound(bp, q, warn=False) for q in q_grid])


def optimal_q_bound(bp: BoundParams, q_grid: Iterable[int] = DEFAULT_Q_GRID) -> int:
    """Grid minimizer of :func:`total_bound`; ties go to the smaller ``q``."""
    grid = sorted(set(int(q) for q in q_grid))
    if not grid:
        raise ValueError("empty q grid")
    values = bound_curve(bp, grid)
    return grid[int(np.argmin(values))]  # argmin returns the first minimum


def is_strictly_unimodal(values: Sequence[float], interior: bool = True) -> bool:
    """Strictly decreasing up to the minimum, strictly increasing after it."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)):
        return False
    i = int(np.argmin(v))
    if interior and not 0 < i < v.size - 1:
        return False
    return bool(np.all(np.diff(v[: i + 1]) < 0) and np.all(np.diff(v[i:]) > 0))


def terms_balanced(bp: BoundParams, q_grid: Iterable[int] = DEFAULT_Q_GRID, ratio: float = 100.0) -> bool:
    """True if both terms are within ``ratio`` of each other at some grid point."""
    for q in q_grid:
        a, b = quant_term(bp, q), detect_term(bp, q, warn=False)
        if a > 0 and b > 0 and max(a, b) / min(a, b) <= ratio:
            return True
    return False


def expected_sigma2_eff(cfg: ScenarioConfig, snr_db: float = None, m: int = None, ideal: bool = False) -> float:
    """Mean combined-noise variance ``sigma2_ant K / M`` for a scenario."""
    snr_db = cfg.snr_db if snr_db is None else snr_db
    if ideal:
        return snr_db_to_sigma2(snr_db)
    m = cfg.m if m is None else m
    return antenna_noise_var(snr_db, m, cfg.k, cfg.snr_reference) * cfg.k / m


def bound_params_for(cfg: ScenarioConfig, l: int = None, snr_db: float = None, m: int = None,
                     c0: float = None) -> BoundParams:
    """Bound inputs for a scenario, with ``||u||^2`` taken per ``q`` from its codebook."""
    return BoundParams(r=(cfg.hi - cfg.lo) / 2.0, k=cfg.k, l=cfg.l if l is None else l,
                       sigma2_eff=expected_sigma2_eff(cfg, snr_db, m),
                       c0=cfg.c0 if c0 is None else c0,
                       u_sq_norm=make_uniform_codebook(cfg.lo, cfg.hi, cfg.q).sq_norm,
                       codebook_range=(cfg.lo, cfg.hi))


def calibrate_c0(points: Iterable[Tuple[BoundParams, int, float]]) -> float:
    """Least-squares ``c0`` fitting ``total_bound`` to measured MSE.

    ``points`` holds ``(bp, q, mse)`` triples; ``bp.c0`` is ignored. The bound
    is linear in ``c0``, so the fit has the closed form
    ``sum d (mse - a) / sum d^2`` with ``a`` the quantization term and ``d``
    the detection term at ``c0 = 1``. Clamped at zero.
    """
    num = den = 0.0
    n = 0
    for bp, q, mse in points:
        if not np.isfinite(mse):
            continue
        d = detect_term(replace(bp, c0=1.0), q, warn=False)
        num += d * (mse - quant_term(bp, q))
        den += d * d
        n += 1
    if n == 0:
        raise ValueError("no finite measurements to calibrate against")
    if den == 0:
        raise ValueError("detection term vanishes at every point; c0 is not identifiable")
    return max(num / den, 0.0)


# ---------------------------------------------------------------------------
# empirical error


def empirical_mse(true_avgs, estimates) -> float:
    """Mean of ``(true - estimate)^2`` over all symbols and trials."""
    a = np.asarray(true_avgs, dtype=float).ravel()
    b = np.asarray(estimates, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty input")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean((a - b) ** 2))


def optimal_q_empirical(cfg: ScenarioConfig, q_grid: Iterable[int] = None, trials: int = None,
                        l: int = None, snr_db: float = None, tag: str = "optq", cache_dir=None):
    """Run the full pipeline for every ``q`` and pick the lowest empirical MSE.

    Returns ``(q_star, records)`` with one :class:`SweepRecord` per ``q`` in
    grid order. Failed trials are excluded from the MSE and logged.
    """
    grid = sorted(set(int(q) for q in (cfg.q_grid if q_grid is None else q_grid)))
    if not grid:
        raise ValueError("empty q grid")
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ValueError("need at least one trial")
    l = cfg.l if l is None else l
    snr_db = cfg.snr_db if snr_db is None else snr_db
    run_cfg = cfg.replace(l=l, snr_db=snr_db, q=grid[0], trials=trials)
    bp = bound_params_for(run_cfg)
    records = []
    for q in grid:
        qcfg = run_cfg.replace(q=q)
        rx = pipeline.receiver_for(qcfg, cache_dir=cache_dir)
        cb = pipeline.scalar_codebook(qcfg)
        cell = pipeline.cell_index(l, q, snr_db, cfg.m)
        recs = pipeline.run_cell(qcfg, rx, cb, tag, cell)
        failed = sum(r.failed for r in recs)
        if failed:
            log.warning("%d of %d trials failed at q=%d, l=%d", failed, trials, q, l)
        records.append(SweepRecord(
            q=q, l=l, snr_db=snr_db, m=cfg.m, mse_empirical=pipeline.cell_mse(recs),
            mse_bound=total_bound(bp, q, warn=False),
            sparsity_mean=float(np.mean([r.sparsity for r in recs])),
            trials=trials, detector_id=cfg.detector, seed=cfg.master_seed))
    mses = np.array([r.mse_empirical for r in records])
    q_star = grid[int(np.nanargmin(mses))]
    return q_star, records


# ---------------------------------------------------------------------------
# sparsity


def effective_sparsity(counts: CountVector) -> int:
    return counts.support


def support_sizes(indices: np.ndarray) -> np.ndarray:
    """Number of distinct codewords in each row of a ``(trials, K)`` index array."""
    idx = np.sort(np.asarray(indices), axis=1)
    return 1 + np.count_nonzero(np.diff(idx, axis=1), axis=1)


def sparsity_sweep(source_dist: str, k: int, q_grid: Iterable[int], trials: int,
                   rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0, per_trial: bool = False):
    """Mean ``||z||_0`` per ``q`` for ``k`` devices quantizing one scalar each.

    With ``per_trial`` the full ``(len(q_grid), trials)`` support array is
    returned instead of the means.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    out = []
    for q in q_grid:
        cb = make_uniform_codebook(lo, hi, int(q))
        s = sample_sources(source_dist, (trials, k), rng)
        out.append(support_sizes(quantize_stochastic(s, cb, rng)))
    out = np.array(out)
    return out if per_trial else out.mean(axis=1)
