"""End-to-end Monte Carlo trials: quantize, transmit, combine, detect, average."""

from __future__ import annotations

import concurrent.futures
import logging
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import airlink
from .airlink import SensingMatrix, stack_matrix
from .config import ScenarioConfig
from .channel import (antenna_noise_var, crandn, gains_from_gram, post_combine_noise_var, sample_awgn,
                       sample_gram, sample_rayleigh, snr_db_to_sigma2)
from .detect import (LassoProblem, ListaParams, TrainConfig, default_rho, improve_round, ista_solve,
                      lista_forward, lista_init, lista_train, matched_filter_detect, max_eigen_gram)
from .quantize import (Codebook, VectorCodebook, aggregate_counts, kmeans_codebook, make_uniform_codebook,
                       quantize_stochastic, vq_assign)
from .sources import sample_sources

log = logging.getLogger(__name__)

THREADS_ENV = "MDAIRCOMP_THREADS"


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode())


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-mode stream derivation.

    The generator for trial ``i`` of cell ``c`` of experiment ``tag`` is seeded
    from ``SeedSequence(master_seed, spawn_key=(tag_id(tag), c, i))``: a pure
    function of its coordinates, distinct for every distinct key.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(x) for x in key)))


@dataclass
class TrialRecord:
    seed: tuple
    true_avg: np.ndarray
    quant_avg: np.ndarray
    est_avg: np.ndarray
    sq_error: float
    detector_iters_or_layers: int
    sparsity: float
    detection_exact: bool
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class Receiver:
    """Everything the server needs for one (L, Q) operating point."""

    p: SensingMatrix
    detector: str
    iters: int = 300
    rho_scale: float = 1.0
    lista: Optional[ListaParams] = None
    lam_max: float = field(init=False, default=None)
    p_r: np.ndarray = field(init=False, default=None)

    def __post_init__(self):
        self.p_r = stack_matrix(self.p.tx)
        if self.detector != "matched_filter":
            self.lam_max = max_eigen_gram(self.p_r)
        if self.detector in ("lista", "improved_lista") and self.lista is None:
            raise ValueError("LISTA detector needs trained parameters")

    @property
    def depth(self) -> int:
        if self.detector in ("lista", "improved_lista"):
            return self.lista.layers
        if self.detector == "matched_filter":
            return 1
        return self.iters

    def detect(self, y_bar: np.ndarray, noise_var: float) -> np.ndarray:
        """Estimated count vector from the combined observation ``y_bar``."""
        if self.detector == "matched_filter":
            return matched_filter_detect(self.p, y_bar).astype(float)
        y_r = airlink.stack_vector(y_bar)
        if self.detector in ("lista", "improved_lista"):
            z = lista_forward(self.lista, y_r)
        else:
            rho = default_rho(noise_var / 2.0, self.p.q, self.rho_scale)
            model = airlink.RealStackedModel(y_r=y_r, p_r=self.p_r, noise_var_r=noise_var / 2.0)
            z = ista_solve(LassoProblem(model, rho), self.iters, lam_max=self.lam_max, trajectory=False)
        if self.detector.startswith("improved"):
            return improve_round(z).astype(float)
        return z


def sensing_for(l: int, q: int, detector: str, codebook_seed: int, unit_power: bool = True) -> SensingMatrix:
    if detector == "matched_filter":
        return airlink.dft_sensing_matrix(l, q, unit_power=unit_power)
    return airlink.gaussian_sensing_matrix(l, q, codebook_seed)


@dataclass
class Observation:
    """Everything the server sees in one trial, plus the ground truth."""

    sources: np.ndarray  # (K, W)
    indices: np.ndarray  # (K, W)
    counts: np.ndarray  # (Q, W)
    y_bar: np.ndarray  # (L, W) combined observations
    noise_var: np.ndarray  # (W,) combined-noise variance per symbol


def observe(cfg: ScenarioConfig, p: SensingMatrix, cb: Codebook, rng: np.random.Generator,
            ideal: bool = False, m: int = None, snr_db: float = None) -> Observation:
    """Quantize, transmit and combine ``cfg.w`` symbols over one channel draw.

    With ``ideal=True`` the channel is bypassed: ``y = P z + n`` with
    ``n ~ CN(0, 10^(-SNR/10))``.
    """
    m = cfg.m if m is None else m
    snr_db = cfg.snr_db if snr_db is None else snr_db
    sigma2 = snr_db_to_sigma2(snr_db)
    ant_var = antenna_noise_var(snr_db, m, cfg.k, cfg.snr_reference)
    k, w = cfg.k, cfg.w
    s = sample_sources(cfg.source_dist, (k, w), rng, alpha=cfg.vq.alpha)
    idx = quantize_stochastic(s, cb, rng)
    cs = None if ideal else sample_rayleigh(m, k, rng)
    counts = np.empty((cb.q, w), dtype=np.int64)
    y_bar = np.empty((p.l, w), dtype=complex)
    noise_var = np.empty(w)
    for i in range(w):
        counts[:, i] = aggregate_counts(idx[:, i], cb.q).counts
        if ideal:
            y_bar[:, i] = airlink.ideal_observation(p, counts[:, i], sigma2, rng)
            noise_var[i] = sigma2
        else:
            noise = sample_awgn(p.l, m, ant_var, rng)
            y_bar[:, i] = airlink.harden_combine(airlink.transmit_superpose(p, idx[:, i], cs, noise), cs)
            noise_var[i] = post_combine_noise_var(cs, ant_var)
    return Observation(s, idx, counts, y_bar, noise_var)


def run_trial(cfg: ScenarioConfig, rx: Receiver, cb: Codebook, rng: np.random.Generator,
              seed=(), ideal: bool = False, m: int = None, snr_db: float = None) -> TrialRecord:
    """One Monte Carlo draw of the scalar scheme over ``cfg.w`` symbols.

    The channel is drawn once per trial and shared by all symbols. A detector
    exception is stored in the record instead of propagating.
    """
    obs = observe(cfg, rx.p, cb, rng, ideal=ideal, m=m, snr_db=snr_db)
    k, w = cfg.k, cfg.w
    true_avg = obs.sources.mean(axis=0)
    quant_avg = cb.levels[obs.indices].mean(axis=0)
    est_avg = np.empty(w)
    sparsity = float(np.mean(np.count_nonzero(obs.counts, axis=0)))
    exact = True
    error = None
    for i in range(w):
        try:
            z_hat = rx.detect(obs.y_bar[:, i], obs.noise_var[i])
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            est_avg[:] = np.nan
            exact = False
            break
        est_avg[i] = cb.levels @ z_hat / k
        exact = exact and np.array_equal(z_hat, obs.counts[:, i])
    sq_error = float(np.mean((true_avg - est_avg) ** 2)) if error is None else float("nan")
    return TrialRecord(seed=tuple(seed), true_avg=true_avg, quant_avg=quant_avg, est_avg=est_avg,
                       sq_error=sq_error, detector_iters_or_layers=rx.depth, sparsity=sparsity,
                       detection_exact=bool(exact), error=error)


def run_vq_trial(cfg: ScenarioConfig, rx: Receiver, vcb: VectorCodebook, rng: np.random.Generator,
                 seed=(), snr_db: float = None) -> TrialRecord:
    """One draw of the vector scheme: each device sends one centroid index.

    ``true_avg`` and ``est_avg`` are length-``W`` vectors and ``sq_error`` is
    their mean squared difference per dimension.
    """
    snr_db = cfg.snr_db if snr_db is None else snr_db
    k = cfg.k
    ant_var = antenna_noise_var(snr_db, cfg.m, k, cfg.snr_reference)
    v = sample_sources("dirichlet", (k, vcb.w), rng, alpha=cfg.vq.alpha)
    idx = vq_assign(v, vcb)
    counts = aggregate_counts(idx, vcb.q)
    cs = sample_rayleigh(cfg.m, k, rng)
    noise = sample_awgn(rx.p.l, cfg.m, ant_var, rng)
    y_bar = airlink.harden_combine(airlink.transmit_superpose(rx.p, idx, cs, noise), cs)
    true_avg = v.mean(axis=0)
    quant_avg = vcb.centroids[idx].mean(axis=0)
    try:
        z_hat = rx.detect(y_bar, post_combine_noise_var(cs, ant_var))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        nan = np.full(vcb.w, np.nan)
        return TrialRecord(tuple(seed), true_avg, quant_avg, nan, float("nan"), rx.depth,
                           float(counts.support), False, f"{type(exc).__name__}: {exc}")
    est_avg = vcb.reconstruct_average(z_hat, k)
    return TrialRecord(seed=tuple(seed), true_avg=true_avg, quant_avg=quant_avg, est_avg=est_avg,
                       sq_error=float(np.mean((true_avg - est_avg) ** 2)), detector_iters_or_layers=rx.depth,
                       sparsity=float(counts.support), detection_exact=bool(np.array_equal(z_hat, counts.counts)))


def train_vq_codebook(cfg: ScenarioConfig, q: int) -> VectorCodebook:
    """k-means codebook fitted to ``cfg.vq.train_samples`` Dirichlet vectors."""
    rng = trial_rng(cfg.master_seed, tag_id("vq-train"), q)
    samples = sample_sources("dirichlet", (cfg.vq.train_samples, cfg.vq.w), rng, alpha=cfg.vq.alpha)
    return kmeans_codebook(samples, q, rng, iters=cfg.vq.kmeans_iters)


def cell_index(*coords) -> int:
    """Stable integer key for a sweep cell, e.g. ``cell_index(l, q, snr_db, m)``."""
    return tag_id(":".join(repr(c) for c in coords))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_cell(cfg: ScenarioConfig, rx: Receiver, cb, tag: str, cell: int,
             trials: int = None, trial_fn=None, **kw) -> list:
    """Run ``trials`` independent trials; results are in trial order.

    ``trial_fn`` defaults to :func:`run_trial`; pass :func:`run_vq_trial`
    with a vector codebook as ``cb`` for the vector scheme.
    """
    trials = cfg.trials if trials is None else trials
    trial_fn = run_trial if trial_fn is None else trial_fn
    key = tag_id(tag)

    def one(i):
        return trial_fn(cfg, rx, cb, trial_rng(cfg.master_seed, key, cell, i),
                        seed=(cfg.master_seed, key, cell, i), **kw)

    n_threads = thread_count()
    if n_threads == 1:
        return [one(i) for i in range(trials)]
    with concurrent.futures.ThreadPoolExecutor(n_threads) as pool:
        return list(pool.map(one, range(trials)))


def cell_mse(records) -> float:
    errs = [r.sq_error for r in records if not r.failed]
    return float(np.mean(errs)) if errs else float("nan")


# ---------------------------------------------------------------------------
# LISTA training data and cache


def combined_batch(p: SensingMatrix, cb: Codebook, k: int, m: int, sigma2: float,
                   source_dist: str, rng: np.random.Generator, n: int):
    """``n`` real-stacked combined observations with their true count vectors.

    Samples the combined model ``y = P sum_k g_k e_{idx_k} + n_bar`` directly:
    the gains come from Wishart Gram draws and ``n_bar`` is drawn as
    ``CN(0, sigma2 ||h_bar||^2 / M^2)``, which is the exact law of
    ``N conj(h_bar) / M`` given ``h_bar``.
    """
    s = sample_sources(source_dist, (n, k), rng)
    idx = quantize_stochastic(s, cb, rng)
    if m >= k:
        gains, hbar_sq = gains_from_gram(sample_gram(m, k, rng, n), m)
    else:
        h = crandn(rng, (n, m, k))
        hbar = h.sum(axis=2)
        gains = np.einsum("nmk,nm->nk", h, np.conj(hbar)) / m
        hbar_sq = np.sum(np.abs(hbar) ** 2, axis=1)
    rows = np.repeat(np.arange(n), k)
    z_eff = np.zeros((n, cb.q), dtype=complex)
    np.add.at(z_eff, (rows, idx.ravel()), gains.ravel())
    z_true = np.zeros((n, cb.q))
    np.add.at(z_true, (rows, idx.ravel()), 1.0)
    noise_var = sigma2 * hbar_sq / m ** 2
    y_bar = z_eff @ p.tx.T + crandn(rng, (n, p.l)) * np.sqrt(noise_var)[:, None]
    return airlink.stack_vector(y_bar.T), z_true.T


def train_lista(p: SensingMatrix, cb: Codebook, cfg: ScenarioConfig, snr_db: float = None):
    """Train LISTA for one sensing matrix at the scenario's operating point."""
    lt = cfg.lista
    train_snr = _train_snr(cfg, snr_db)
    sigma2 = antenna_noise_var(train_snr, cfg.m, cfg.k, cfg.snr_reference)
    p_r = stack_matrix(p.tx)
    rho = float(default_rho(sigma2 * cfg.k / cfg.m / 2.0, p.q, cfg.rho_scale))
    init = lista_init(p_r, cfg.layers, rho)
    tcfg = TrainConfig(batch_size=lt.batch_size, epochs=lt.epochs, batches_per_epoch=lt.batches_per_epoch,
                       learning_rate=lt.learning_rate, train_snr_db=train_snr,
                       source_distribution=cfg.source_dist, seed=lt.seed, grad_clip=lt.grad_clip)

    def batch_fn(rng, n):
        return combined_batch(p, cb, cfg.k, cfg.m, sigma2, cfg.source_dist, rng, n)

    params, curve = lista_train(init, batch_fn, tcfg, rng=trial_rng(lt.seed, tag_id("lista-train")))
    params.meta.update(l=p.l, q=p.q, layers=cfg.layers, k=cfg.k, m=cfg.m)
    return params, curve


def _train_snr(cfg: ScenarioConfig, snr_db: float = None) -> float:
    if cfg.lista.train_snr_db is not None:
        return cfg.lista.train_snr_db
    return cfg.snr_db if snr_db is None else snr_db


def lista_cache_name(p: SensingMatrix, cfg: ScenarioConfig, snr_db: float = None) -> str:
    """File name encoding everything the trained parameters depend on."""
    lt = cfg.lista
    return (f"lista_L{p.l}_Q{p.q}_snr{_train_snr(cfg, snr_db):g}_seed{lt.seed}_T{cfg.layers}_K{cfg.k}_M{cfg.m}"
            f"_{cfg.snr_reference}_lr{lt.learning_rate:g}_clip{lt.grad_clip:g}"
            f"_b{lt.batch_size}x{lt.batches_per_epoch}x{lt.epochs}_cb{cfg.codebook_seed}.npz")


def cached_lista(p: SensingMatrix, cb: Codebook, cfg: ScenarioConfig, cache_dir=None, snr_db: float = None):
    """Load trained parameters from ``cache_dir`` or train and store them."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / lista_cache_name(p, cfg, snr_db)
        if path.exists():
            return ListaParams.load(path, stack_matrix(p.tx))
    params, _ = train_lista(p, cb, cfg, snr_db=snr_db)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        params.save(path)
    return params


def scalar_codebook(cfg: ScenarioConfig, q: int = None) -> Codebook:
    return make_uniform_codebook(cfg.lo, cfg.hi, cfg.q if q is None else q)


def receiver_for(cfg: ScenarioConfig, detector: str = None, cache_dir=None, snr_db: float = None) -> Receiver:
    """Sensing matrix and detector for ``cfg.l x cfg.q``; trains LISTA if needed."""
    detector = cfg.detector if detector is None else detector
    p = sensing_for(cfg.l, cfg.q, detector, cfg.codebook_seed, cfg.dft_unit_power)
    lista = None
    if detector in ("lista", "improved_lista"):
        lista = cached_lista(p, scalar_codebook(cfg), cfg, cache_dir=cache_dir, snr_db=snr_db)
    return Receiver(p, detector, iters=cfg.iters, rho_scale=cfg.rho_scale, lista=lista)
