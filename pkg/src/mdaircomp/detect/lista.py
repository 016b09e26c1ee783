"""Learned ISTA: an unrolled, trainable version of the ISTA recursion.

Layer ``t`` computes ``z <- T_{beta_t}(z - mu_t (B z - A y))`` with ``A``
(``Q x 2L``) and ``B`` (``Q x Q``) shared across layers and a step ``mu_t``
and threshold ``beta_t`` per layer. With ``A = p_r^T``, ``B = p_r^T p_r``,
``mu_t = 1 / lambda_max`` and ``beta_t = rho / lambda_max`` every layer is
one ISTA step.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .ista import max_eigen_gram

log = logging.getLogger(__name__)

FILE_VERSION = 1


@dataclass
class ListaParams:
    a: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def layers(self) -> int:
        return self.beta.size

    @property
    def q(self) -> int:
        return self.b.shape[0]

    @property
    def m_rows(self) -> int:
        return self.a.shape[1]

    def copy(self) -> "ListaParams":
        return ListaParams(self.a.copy(), self.b.copy(), self.beta.copy(), self.mu.copy(), dict(self.meta))

    def save(self, path) -> None:
        meta = dict(self.meta, version=FILE_VERSION, layers=self.layers,
                    a_shape=list(self.a.shape), b_shape=list(self.b.shape))
        np.savez(path, a=self.a, b=self.b, beta=self.beta, mu=self.mu,
                 meta=np.array(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path, p_r: np.ndarray = None) -> "ListaParams":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            params = cls(data["a"], data["b"], data["beta"], data["mu"], meta)
        if meta.get("version") != FILE_VERSION:
            raise ValueError(f"unsupported LISTA file version {meta.get('version')}")
        if p_r is not None and params.a.shape != (p_r.shape[1], p_r.shape[0]):
            raise ValueError(
                f"stored parameters expect a {params.a.shape[1]}x{params.a.shape[0]} "
                f"real sensing matrix, got {p_r.shape}")
        return params


def lista_init(p_r: np.ndarray, layers: int, rho: float, lam_max: float = None) -> ListaParams:
    if layers < 1:
        raise ValueError("LISTA needs at least one layer")
    if lam_max is None:
        lam_max = max_eigen_gram(p_r)
    return ListaParams(
        a=p_r.T.copy(),
        b=p_r.T @ p_r,
        beta=np.full(layers, rho / lam_max),
        mu=np.full(layers, 1.0 / lam_max),
    )


def _soft(x, beta):
    return np.sign(x) * np.maximum(np.abs(x) - beta, 0.0)


def lista_forward(params: ListaParams, y_r: np.ndarray, trajectory: bool = False):
    """Run the unrolled network on ``y_r`` of shape ``(2L,)`` or ``(2L, B)``.

    Returns the final layer output, plus the stacked per-layer outputs when
    ``trajectory`` is True.
    """
    if y_r.shape[0] != params.m_rows:
        raise ValueError(f"input length {y_r.shape[0]} != expected {params.m_rows}")
    ay = params.a @ y_r
    z = np.zeros_like(ay)
    traj = []
    for t in range(params.layers):
        z = _soft(z - params.mu[t] * (params.b @ z - ay), params.beta[t])
        if trajectory:
            traj.append(z)
    if trajectory:
        return z, np.stack(traj)
    return z


def lista_loss(params: ListaParams, y_r: np.ndarray, z_true: np.ndarray) -> float:
    """Final-layer squared error, averaged over batch columns."""
    z = lista_forward(params, y_r)
    n = 1 if z.ndim == 1 else z.shape[1]
    return float(np.sum((z - z_true) ** 2) / n)


def lista_gradient(params: ListaParams, y_r: np.ndarray, z_true: np.ndarray):
    """Loss and reverse-mode gradients w.r.t. ``a``, ``b``, ``beta``, ``mu``.

    ``y_r`` is ``(2L, B)`` and ``z_true`` is ``(Q, B)``. The soft-threshold
    derivative at ``|r| == beta`` is taken as zero.
    """
    if y_r.ndim == 1:
        y_r, z_true = y_r[:, None], np.asarray(z_true)[:, None]
    n = y_r.shape[1]
    if n == 0:
        raise ValueError("empty batch")
    a, b, mu, beta = params.a, params.b, params.mu, params.beta
    ay = a @ y_r

    zs = [np.zeros((params.q, n))]
    vs, rs = [], []
    for t in range(params.layers):
        v = b @ zs[-1] - ay
        r = zs[-1] - mu[t] * v
        vs.append(v)
        rs.append(r)
        zs.append(_soft(r, beta[t]))

    err = zs[-1] - z_true
    loss = float(np.sum(err ** 2) / n)

    g_a = np.zeros_like(a)
    g_b = np.zeros_like(b)
    g_beta = np.zeros_like(beta)
    g_mu = np.zeros_like(mu)
    g_ay = np.zeros_like(ay)
    gz = 2.0 * err / n
    for t in reversed(range(params.layers)):
        r = rs[t]
        active = np.abs(r) > beta[t]
        gr = np.where(active, gz, 0.0)
        g_beta[t] = -np.sum(gr * np.sign(r))
        g_mu[t] = -np.sum(gr * vs[t])
        gv = -mu[t] * gr
        g_b += gv @ zs[t].T
        g_ay -= gv
        gz = gr + b.T @ gv
    g_a = g_ay @ y_r.T
    grads = ListaParams(a=g_a, b=g_b, beta=g_beta, mu=g_mu)
    return loss, grads


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    batches_per_epoch: int = 1000
    learning_rate: float = 3e-5
    train_snr_db: float = 10.0
    source_distribution: str = "uniform"
    seed: int = 0
    loss: str = "final_mse"
    grad_clip: float = 10.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.batches_per_epoch < 1:
            raise ValueError("batch size, epochs and batches per epoch must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.loss != "final_mse":
            raise ValueError(f"unsupported loss {self.loss!r}")


class TrainingDiverged(FloatingPointError):
    pass


def lista_train(init: ListaParams, batch_fn, cfg: TrainConfig, rng: np.random.Generator = None):
    """Plain SGD over freshly simulated batches.

    Parameters
    ----------
    init : ListaParams
        Starting point, typically :func:`lista_init`. Not modified.
    batch_fn : callable
        ``batch_fn(rng, n) -> (y_r, z_true)`` with shapes ``(2L, n)`` and
        ``(Q, n)``.
    cfg : TrainConfig
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``cfg.seed``.

    Returns
    -------
    params : ListaParams
    curve : ndarray
        Entry 0 is the loss of ``init`` on a held-out batch, entry ``e`` the
        mean training loss over epoch ``e``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    params = init.copy()
    y0, z0 = batch_fn(rng, max(cfg.batch_size, 256))
    curve = [lista_loss(params, y0, z0)]
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        total = 0.0
        for step in range(cfg.batches_per_epoch):
            y, z = batch_fn(rng, cfg.batch_size)
            loss, g = lista_gradient(params, y, z)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch} step {step} "
                    f"(learning rate {lr}); last finite epoch losses {curve}")
            if cfg.grad_clip > 0:
                norm = np.sqrt(sum(np.sum(x ** 2) for x in (g.a, g.b, g.beta, g.mu)))
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    g = replace(g, a=g.a * scale, b=g.b * scale, beta=g.beta * scale, mu=g.mu * scale)
            params.a -= lr * g.a
            params.b -= lr * g.b
            params.mu -= lr * g.mu
            params.beta = np.maximum(params.beta - lr * g.beta, 0.0)
            total += loss
        curve.append(total / cfg.batches_per_epoch)
        log.info("epoch %d: mean loss %.5g", epoch, curve[-1])
    params.meta.update(seed=cfg.seed, train_snr_db=cfg.train_snr_db,
                       learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                       epochs=cfg.epochs, batches_per_epoch=cfg.batches_per_epoch)
    return params, np.asarray(curve)
