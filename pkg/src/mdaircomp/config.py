"""Scenario configuration: a flat JSON record plus optional nested blocks."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import List, Optional

from .airlink import DEFAULT_MASTER_SEED, MASTER_SHAPE
from .channel import SNR_REFERENCES
from .sources import SOURCE_DISTS

DETECTORS = ("ista", "improved_ista", "lista", "improved_lista", "matched_filter")


class ConfigError(ValueError):
    pass


@dataclass
class VQConfig:
    enabled: bool = False
    w: int = 10
    centroid_counts: List[int] = field(default_factory=lambda: [4, 8, 16, 32, 64])
    train_samples: int = 10_000
    kmeans_iters: int = 50
    alpha: float = 1.0
    scalar_q: int = 4
    channel_uses: int = 40  # total preamble budget shared by both schemes


@dataclass
class ListaTrainConfig:
    batch_size: int = 64
    epochs: int = 30
    batches_per_epoch: int = 1000
    learning_rate: float = 3e-5
    train_snr_db: Optional[float] = None  # None: train at the scenario SNR
    seed: int = 0
    grad_clip: float = 10.0


@dataclass
class ScenarioConfig:
    k: int = 10
    m: int = 1024
    l: int = 25
    q: int = 32
    snr_db: float = 20.0
    w: int = 1
    source_dist: str = "uniform"
    detector: str = "improved_ista"
    iters: int = 300
    layers: int = 10
    rho_scale: float = 1.0
    trials: int = 1000
    master_seed: int = 0
    codebook_seed: int = DEFAULT_MASTER_SEED
    lo: float = 0.0
    hi: float = 1.0
    c0: float = 1.0
    snr_reference: str = "combiner"
    dft_unit_power: bool = True
    q_grid: List[int] = field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128, 256])
    l_grid: List[int] = field(default_factory=lambda: [20, 30, 40])
    snr_grid: List[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    m_grid: List[int] = field(default_factory=lambda: [16, 64, 256, 1024])
    k_grid: List[int] = field(default_factory=lambda: [10, 20, 50])
    replicates: int = 5
    vq: VQConfig = field(default_factory=VQConfig)
    lista: ListaTrainConfig = field(default_factory=ListaTrainConfig)

    def validate(self) -> "ScenarioConfig":
        for name in ("k", "m", "l", "q", "w", "iters", "layers", "trials", "replicates"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.q < 2 or any(q < 2 for q in self.q_grid):
            raise ConfigError("quantization needs at least 2 levels")
        if self.source_dist not in SOURCE_DISTS:
            raise ConfigError(f"unknown source_dist {self.source_dist!r}")
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector {self.detector!r}; choose from {DETECTORS}")
        if self.detector == "matched_filter" and self.q > self.l:
            raise ConfigError(f"matched_filter needs q <= l (q={self.q}, l={self.l})")
        if self.detector != "matched_filter" and (self.l > MASTER_SHAPE[0] or self.q > MASTER_SHAPE[1]):
            raise ConfigError(f"l x q = {self.l} x {self.q} exceeds the master codebook {MASTER_SHAPE}")
        if self.snr_reference not in SNR_REFERENCES:
            raise ConfigError(f"snr_reference must be one of {SNR_REFERENCES}")
        if not self.lo < self.hi:
            raise ConfigError("lo must be below hi")
        if self.rho_scale < 0 or self.c0 < 0:
            raise ConfigError("rho_scale and c0 must be non-negative")
        vq = self.vq
        if vq.enabled:
            if vq.w < 1 or vq.channel_uses < vq.w or vq.channel_uses % vq.w:
                raise ConfigError("vq.channel_uses must be a positive multiple of vq.w")
            if vq.channel_uses > MASTER_SHAPE[0] or max(vq.centroid_counts) > MASTER_SHAPE[1]:
                raise ConfigError(f"vq dimensions exceed the master codebook {MASTER_SHAPE}")
            if min(vq.centroid_counts) < 2 or vq.scalar_q < 2 or vq.train_samples < max(vq.centroid_counts):
                raise ConfigError("vq needs at least 2 levels and as many training samples as centroids")
        return self

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        nested = {"vq": VQConfig, "lista": ListaTrainConfig}
        kwargs = {}
        for key, sub in nested.items():
            if key in data:
                kwargs[key] = _build(sub, data.pop(key), prefix=f"{key}.")
        cfg = _build(cls, data, **kwargs)
        return cfg.validate()

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes).validate()


def _build(cls, data, prefix="", **extra):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or cls.__name__} block must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + u for u in unknown)}")
    try:
        return cls(**data, **extra)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return ScenarioConfig.from_json(text)
