"""Monte Carlo sweeps behind each experiment.

Every experiment takes a :class:`ScenarioConfig` and returns an
:class:`ExperimentResult`: a fixed-header table plus a small dict of headline
metrics. Tables are pure functions of the config, including ``master_seed``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import airlink, analysis, pipeline
from ..airlink import MASTER_SHAPE
from ..channel import hardening_metric, sample_rayleigh
from ..config import ConfigError, ScenarioConfig
from ..detect import LassoProblem, default_rho, improve_round, ista_solve, lasso_objective, lista_forward
from ..pipeline import tag_id, trial_rng

log = logging.getLogger(__name__)

# Per-experiment scenario settings, applied on top of the defaults when
# no config file is given.
PRESETS = {
    "hardening": dict(trials=200),
    "convergence": dict(l=25, q=32, snr_db=10.0, iters=300, layers=10, detector="improved_ista"),
    "mse-vs-q": dict(snr_db=20.0),
    "optq-vs-l": dict(),
    "sparsity": dict(),
    "mse-vs-m": dict(l=30, q=32, snr_db=20.0),
    "vq": dict(snr_grid=[0.0, 5.0, 10.0, 15.0, 20.0]),
    "train-lista": dict(l=25, q=32, snr_db=10.0),
}


def preset_config(name: str, base: ScenarioConfig = None) -> ScenarioConfig:
    base = ScenarioConfig() if base is None else base
    cfg = base.replace(**PRESETS.get(name, {}))
    if name == "vq":
        cfg = cfg.replace(vq=dataclasses.replace(cfg.vq, enabled=True))
    return cfg


@dataclass
class ExperimentResult:
    name: str
    header: tuple
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name):
        i = self.header.index(name)
        return [row[i] for row in self.rows]


# ---------------------------------------------------------------------------


def experiment_hardening(cfg: ScenarioConfig) -> ExperimentResult:
    """Hardening metric versus antenna count, ``cfg.trials`` channels per ``M``."""
    header = ("m", "k", "realizations", "metric_mean", "metric_median", "expected")
    rows = []
    key = tag_id("hardening")
    for m in cfg.m_grid:
        vals = np.array([hardening_metric(sample_rayleigh(m, cfg.k, trial_rng(cfg.master_seed, key, m, i)))
                         for i in range(cfg.trials)])
        rows.append((m, cfg.k, cfg.trials, float(vals.mean()), float(np.median(vals)), 1.0 / m))
    medians = [r[4] for r in rows]
    summary = {"strictly_decreasing_median": bool(np.all(np.diff(medians) < 0)),
               "mean_times_m": {str(r[0]): r[3] * r[0] for r in rows}}
    return ExperimentResult("hardening", header, rows, summary)


def experiment_convergence(cfg: ScenarioConfig, lista=None, cache_dir=None) -> ExperimentResult:
    """Per-iteration computation MSE of ISTA, LISTA and their rounded versions.

    All four detectors see the same ``cfg.trials`` observations. "Improved"
    applies integer rounding and clamping to every iterate. LISTA columns are
    empty past ``cfg.layers``. ``ista_objective`` is the LASSO objective
    averaged over trials.
    """
    cb = pipeline.scalar_codebook(cfg)
    p = airlink.gaussian_sensing_matrix(cfg.l, cfg.q, cfg.codebook_seed)
    if lista is None:
        lista = pipeline.cached_lista(p, cb, cfg, cache_dir=cache_dir)
    if lista.layers != cfg.layers:
        raise ConfigError(f"LISTA has {lista.layers} layers, config asks for {cfg.layers}")
    rx = pipeline.Receiver(p, "ista", iters=cfg.iters, rho_scale=cfg.rho_scale)
    key = tag_id("convergence")
    y_cols, nv, truth, quant = [], [], [], []
    for i in range(cfg.trials):
        obs = pipeline.observe(cfg, p, cb, trial_rng(cfg.master_seed, key, 0, i))
        y_cols.append(obs.y_bar)
        nv.append(obs.noise_var)
        truth.append(obs.sources.mean(axis=0))
        quant.append(cb.levels[obs.indices].mean(axis=0))
    y_r = airlink.stack_vector(np.concatenate(y_cols, axis=1))
    noise_var = np.concatenate(nv)
    true_avg = np.concatenate(truth)
    quant_avg = np.concatenate(quant)
    levels = cb.levels / cfg.k

    def mse_curve(traj):
        return np.mean((np.einsum("q,tqn->tn", levels, traj) - true_avg) ** 2, axis=1)

    rho = default_rho(noise_var / 2.0, cfg.q, cfg.rho_scale)
    model = airlink.RealStackedModel(y_r=y_r, p_r=rx.p_r, noise_var_r=float(np.mean(noise_var)) / 2.0)
    traj = ista_solve(LassoProblem(model, rho), cfg.iters, lam_max=rx.lam_max)
    ista = mse_curve(traj)
    ista_imp = mse_curve(improve_round(traj).astype(float))
    objective = np.array([np.mean(lasso_objective(rx.p_r, y_r, z, rho)) for z in traj])
    del traj
    _, ltraj = lista_forward(lista, y_r, trajectory=True)
    lst = mse_curve(ltraj)
    lst_imp = mse_curve(improve_round(ltraj).astype(float))

    header = ("iteration", "mse_ista", "mse_improved_ista", "mse_lista", "mse_improved_lista", "ista_objective")
    rows = []
    for t in range(cfg.iters):
        in_lista = t < lista.layers
        rows.append((t + 1, float(ista[t]), float(ista_imp[t]), float(lst[t]) if in_lista else None,
                     float(lst_imp[t]) if in_lista else None, float(objective[t])))
    t_ref = min(250, cfg.iters) - 1
    t_l = lista.layers - 1
    summary = {
        "trials": cfg.trials,
        "lista_layers": lista.layers,
        "reference_iteration": t_ref + 1,
        "mse_lista_final": float(lst[t_l]),
        "mse_improved_lista_final": float(lst_imp[t_l]),
        "mse_ista_at_layers": float(ista[min(t_l, cfg.iters - 1)]),
        "mse_ista_at_reference": float(ista[t_ref]),
        "mse_improved_ista_at_reference": float(ista_imp[t_ref]),
        "mse_quantization_only": float(np.mean((quant_avg - true_avg) ** 2)),
        "objective_non_increasing": bool(np.all(np.diff(objective) <= 1e-10 * np.abs(objective[1:]))),
    }
    return ExperimentResult("convergence", header, rows, summary)


def _feasible_q(cfg: ScenarioConfig, l: int):
    grid = []
    for q in sorted(set(cfg.q_grid)):
        if cfg.detector == "matched_filter" and q > l:
            log.info("skipping q=%d > l=%d for the matched filter", q, l)
        elif cfg.detector != "matched_filter" and q > MASTER_SHAPE[1]:
            log.info("skipping q=%d beyond the master codebook", q)
        else:
            grid.append(q)
    return grid


def _u_shape(records) -> dict:
    mse = np.array([r.mse_empirical for r in records])
    i = int(np.nanargmin(mse))
    interior = 0 < i < len(mse) - 1
    margin = float(min(mse[0], mse[-1]) / mse[i] - 1.0) if mse[i] > 0 else float("inf")
    return {"q_star": records[i].q, "interior": bool(interior), "endpoint_margin": margin}


def experiment_mse_vs_q(cfg: ScenarioConfig, cache_dir=None) -> ExperimentResult:
    """Empirical MSE and bound versus ``q`` for every ``L`` in ``cfg.l_grid``."""
    rows, per_l = [], {}
    for l in cfg.l_grid:
        q_star, recs = analysis.optimal_q_empirical(cfg, _feasible_q(cfg, l), l=l, tag="mse-vs-q",
                                                    cache_dir=cache_dir)
        rows.extend(r.csv_row() for r in recs)
        bp = analysis.bound_params_for(cfg, l=l)
        per_l[str(l)] = dict(_u_shape(recs), q_star_bound=analysis.optimal_q_bound(bp, cfg.q_grid))
    return ExperimentResult("mse-vs-q", analysis.SweepRecord.CSV_HEADER, rows,
                            {"snr_db": cfg.snr_db, "per_l": per_l})


def experiment_optq_vs_l(cfg: ScenarioConfig, cache_dir=None) -> ExperimentResult:
    """Empirical and bound-based ``q*`` over the ``(snr, L)`` grid."""
    rows, qstar = [], []
    for snr in cfg.snr_grid:
        for l in cfg.l_grid:
            q_emp, recs = analysis.optimal_q_empirical(cfg, _feasible_q(cfg, l), l=l, snr_db=snr,
                                                       tag="optq-vs-l", cache_dir=cache_dir)
            rows.extend(r.csv_row() for r in recs)
            q_bnd = analysis.optimal_q_bound(analysis.bound_params_for(cfg, l=l, snr_db=snr), cfg.q_grid)
            qstar.append({"snr_db": snr, "l": l, "q_star_empirical": q_emp, "q_star_bound": q_bnd})
    return ExperimentResult("optq-vs-l", analysis.SweepRecord.CSV_HEADER, rows, {"q_star": qstar})


def experiment_sparsity(cfg: ScenarioConfig) -> ExperimentResult:
    """Mean and maximum occupied bins versus ``q`` for both scalar sources and every ``K``."""
    header = ("source_dist", "k", "q", "trials", "sparsity_mean", "sparsity_max")
    rows = []
    key = tag_id("sparsity")
    bound_ok = True
    for d, dist in enumerate(("uniform", "truncated_gaussian")):
        for k in cfg.k_grid:
            rng = trial_rng(cfg.master_seed, key, d, k)
            sup = analysis.sparsity_sweep(dist, k, cfg.q_grid, cfg.trials, rng, cfg.lo, cfg.hi, per_trial=True)
            for q, s in zip(cfg.q_grid, sup):
                bound_ok = bound_ok and int(s.max()) <= min(k, q)
                rows.append((dist, k, q, cfg.trials, float(s.mean()), int(s.max())))
    return ExperimentResult("sparsity", header, rows, {"support_within_min_k_q": bool(bound_ok)})


def experiment_mse_vs_m(cfg: ScenarioConfig, cache_dir=None) -> ExperimentResult:
    """MSE versus antenna count, plus the pure-AWGN Ideal baseline.

    Trials are split into ``cfg.replicates`` equal groups; the median is
    taken over the group means.
    """
    header = ("label", "m", "snr_db", "trials", "replicates", "mse_mean", "mse_median")
    rx = pipeline.receiver_for(cfg, cache_dir=cache_dir)
    cb = pipeline.scalar_codebook(cfg)
    rows = []

    def stats(recs):
        groups = np.array_split(np.arange(len(recs)), cfg.replicates)
        reps = [pipeline.cell_mse([recs[i] for i in g]) for g in groups if len(g)]
        return pipeline.cell_mse(recs), float(np.median(reps))

    for m in cfg.m_grid:
        recs = pipeline.run_cell(cfg, rx, cb, "mse-vs-m", pipeline.cell_index(m), m=m)
        rows.append(("fading", m, cfg.snr_db, cfg.trials, cfg.replicates) + stats(recs))
    recs = pipeline.run_cell(cfg, rx, cb, "mse-vs-m", pipeline.cell_index("ideal"), ideal=True)
    ideal = stats(recs)
    rows.append(("ideal", None, cfg.snr_db, cfg.trials, cfg.replicates) + ideal)
    medians = [r[6] for r in rows[:-1]]
    summary = {"strictly_decreasing_median": bool(np.all(np.diff(medians) < 0)),
               "ratio_largest_m_to_ideal": rows[-2][5] / ideal[0] if ideal[0] > 0 else float("inf")}
    return ExperimentResult("mse-vs-m", header, rows, summary)


def experiment_vq(cfg: ScenarioConfig) -> ExperimentResult:
    """MSE versus SNR for the scalar baseline and each vector codebook size.

    Both schemes use ``cfg.vq.channel_uses`` channel uses per trial. The
    scalar baseline spends ``channel_uses / W`` of them on each of the ``W``
    elements with an orthogonal preamble and the matched filter. The vector
    scheme sends one index with an orthogonal preamble when it fits and a
    Gaussian preamble with improved ISTA otherwise.
    """
    vq = cfg.vq
    if not vq.enabled:
        raise ConfigError("vq experiment needs vq.enabled = true")
    header = ("scheme", "q", "l", "snr_db", "trials", "mse")
    l_scalar = vq.channel_uses // vq.w
    scalar_det = "matched_filter" if vq.scalar_q <= l_scalar else "improved_ista"
    scfg = cfg.replace(w=vq.w, l=l_scalar, q=vq.scalar_q, detector=scalar_det, source_dist="dirichlet")
    srx = pipeline.receiver_for(scfg)
    scb = pipeline.scalar_codebook(scfg)

    vrx = {}
    codebooks = {}
    for q in vq.centroid_counts:
        det = "matched_filter" if q <= vq.channel_uses else "improved_ista"
        qcfg = cfg.replace(l=vq.channel_uses, q=q, detector=det)
        vrx[q] = pipeline.receiver_for(qcfg)
        codebooks[q] = pipeline.train_vq_codebook(cfg, q)

    rows = []
    for snr in cfg.snr_grid:
        recs = pipeline.run_cell(scfg, srx, scb, "vq", pipeline.cell_index("scalar", vq.scalar_q, snr),
                                 snr_db=snr)
        rows.append(("scalar", vq.scalar_q, l_scalar, snr, cfg.trials, pipeline.cell_mse(recs)))
        for q in vq.centroid_counts:
            recs = pipeline.run_cell(cfg, vrx[q], codebooks[q], "vq", pipeline.cell_index("vq", q, snr),
                                     trial_fn=pipeline.run_vq_trial, snr_db=snr)
            rows.append(("vq", q, vq.channel_uses, snr, cfg.trials, pipeline.cell_mse(recs)))
    summary = {"distortion": {str(q): float(cb.distortion_history[-1]) for q, cb in codebooks.items()}}
    return ExperimentResult("vq", header, rows, summary)


EXPERIMENTS = {
    "hardening": experiment_hardening,
    "convergence": experiment_convergence,
    "mse-vs-q": experiment_mse_vs_q,
    "optq-vs-l": experiment_optq_vs_l,
    "sparsity": experiment_sparsity,
    "mse-vs-m": experiment_mse_vs_m,
    "vq": experiment_vq,
}
