"""System parameters, fading statistics and channel-state sampling.

Normalized gains: alpha0 = |h_sd|^2/sigma2_sd, alpha_i = |h_si|^2/sigma2_sr_i,
beta_i = |h_id|^2/sigma2_rd_i.  Each is Gamma-distributed with shape k and
scale avg_snr (Nakagami-m squared amplitude), all links independent.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "NetworkConfig",
    "ChannelStats",
    "ChannelState",
    "CsiMode",
    "Scheme",
    "EffectiveGainView",
    "sample_state",
    "sample_state_batch",
    "effective_gains",
    "load_config_file",
    "config_to_dict",
    "trial_rng",
    "CHUNK",
]


class CsiMode(enum.Enum):
    """What the relays know about the fading."""

    FULL = "full"
    STATS_ONLY = "stats"
    PARTIAL_ALPHA = "partial_alpha"  # source-side links instantaneous, beta averaged
    PARTIAL_BETA = "partial_beta"    # relay-destination links instantaneous, alpha averaged


class Scheme(enum.Enum):
    ALL_PARTICIPATE = "ap"
    SELECTIVE = "sel"


def _as_vector(x, m: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(m, float(arr))
    if arr.shape != (m,):
        raise ValueError(f"{name} must be scalar or length-{m}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class NetworkConfig:
    """Static system parameters: relay count, gains, noise, caps, budget."""

    m: int
    relay_gain: np.ndarray      # a_i, per relay
    sigma2_sd: float
    sigma2_sr: np.ndarray       # per relay
    sigma2_rd: np.ndarray       # per relay
    es_max: float
    ei_max: np.ndarray          # per relay
    e_tot: float
    snr_threshold: float        # linear

    def __post_init__(self):
        object.__setattr__(self, "relay_gain", _as_vector(self.relay_gain, self.m, "relay_gain"))
        object.__setattr__(self, "sigma2_sr", _as_vector(self.sigma2_sr, self.m, "sigma2_sr"))
        object.__setattr__(self, "sigma2_rd", _as_vector(self.sigma2_rd, self.m, "sigma2_rd"))
        object.__setattr__(self, "ei_max", _as_vector(self.ei_max, self.m, "ei_max"))
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        for name in ("sigma2_sd", "es_max", "e_tot"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("relay_gain", "sigma2_sr", "sigma2_rd", "ei_max"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} entries must be strictly positive")
        if self.snr_threshold < 0:
            raise ValueError("snr_threshold must be nonnegative")

    @property
    def zeta(self) -> np.ndarray:
        """1 / sigma2_sr, recomputed so it can never go stale."""
        return 1.0 / self.sigma2_sr

    @classmethod
    def defaults(cls, m: int = 3, sigma2: float = 1.0) -> "NetworkConfig":
        """Baseline system: 3 relays, unit gains, equal noise, caps 3, budget 5.5,
        threshold 5 dB."""
        return cls(
            m=m,
            relay_gain=np.ones(m),
            sigma2_sd=sigma2,
            sigma2_sr=np.full(m, sigma2),
            sigma2_rd=np.full(m, sigma2),
            es_max=3.0,
            ei_max=np.full(m, 3.0),
            e_tot=5.5,
            snr_threshold=10.0 ** 0.5,
        )

    def with_noise(self, sigma2: float) -> "NetworkConfig":
        return replace(
            self,
            sigma2_sd=sigma2,
            sigma2_sr=np.full(self.m, sigma2),
            sigma2_rd=np.full(self.m, sigma2),
        )


@dataclass(frozen=True)
class ChannelStats:
    """Gamma (shape, scale) parameters of the normalized link gains."""

    m: int
    k_sd: float
    avg_snr_sd: float
    k_sr: np.ndarray
    avg_snr_sr: np.ndarray
    k_rd: np.ndarray
    avg_snr_rd: np.ndarray

    def __post_init__(self):
        for name in ("k_sr", "avg_snr_sr", "k_rd", "avg_snr_rd"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), self.m, name))
        if not (self.k_sd > 0 and self.avg_snr_sd > 0):
            raise ValueError("direct-link shape and average SNR must be positive")
        for name in ("k_sr", "avg_snr_sr", "k_rd", "avg_snr_rd"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} entries must be strictly positive")

    @classmethod
    def defaults(cls, m: int = 3, k: float = 1.0, avg_snr: float = 0.5) -> "ChannelStats":
        return cls(
            m=m,
            k_sd=k, avg_snr_sd=avg_snr,
            k_sr=np.full(m, k), avg_snr_sr=np.full(m, avg_snr),
            k_rd=np.full(m, k), avg_snr_rd=np.full(m, avg_snr),
        )

    def scaled(self, factor: float) -> "ChannelStats":
        """Scale every average SNR by `factor` (e.g. 1/sigma2 when renormalizing)."""
        return replace(
            self,
            avg_snr_sd=self.avg_snr_sd * factor,
            avg_snr_sr=self.avg_snr_sr * factor,
            avg_snr_rd=self.avg_snr_rd * factor,
        )

    def with_common_shape(self, k: float) -> "ChannelStats":
        return replace(
            self, k_sd=k, k_sr=np.full(self.m, k), k_rd=np.full(self.m, k)
        )

    @property
    def mean_alpha0(self) -> float:
        return self.k_sd * self.avg_snr_sd

    @property
    def mean_alpha(self) -> np.ndarray:
        return self.k_sr * self.avg_snr_sr

    @property
    def mean_beta(self) -> np.ndarray:
        return self.k_rd * self.avg_snr_rd


@dataclass(frozen=True)
class ChannelState:
    """One realization of the normalized instantaneous gains."""

    alpha0: float
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D with equal length")
        if self.alpha0 < 0 or np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ValueError("gains must be nonnegative")

    @property
    def m(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class EffectiveGainView:
    """The gains an allocator is permitted to optimize against.

    When beta_averaged is True the relay-destination side must be treated
    through the averaged functional form using (k_rd, avg_snr_rd); `beta`
    is then None.
    """

    alpha0: float
    alpha: np.ndarray
    beta: np.ndarray | None
    beta_averaged: bool


def sample_state(stats: ChannelStats, rng: np.random.Generator) -> ChannelState:
    """Draw one independent realization of all link gains."""
    a0 = rng.gamma(shape=stats.k_sd, scale=stats.avg_snr_sd)
    alpha = rng.gamma(shape=stats.k_sr, scale=stats.avg_snr_sr)
    beta = rng.gamma(shape=stats.k_rd, scale=stats.avg_snr_rd)
    return ChannelState(alpha0=float(a0), alpha=alpha, beta=beta)


def sample_state_batch(stats: ChannelStats, rng: np.random.Generator, n: int):
    """Draw n realizations at once; returns (alpha0 (n,), alpha (n,m), beta (n,m)).

    Draw order is fixed (alpha0, alpha, beta) so a batch equals n sequential
    single draws from the same stream only in distribution, not bitwise; for
    bitwise reproducibility key the stream by the batch (see trial_rng).
    """
    a0 = rng.gamma(shape=stats.k_sd, scale=stats.avg_snr_sd, size=n)
    alpha = rng.gamma(
        shape=np.broadcast_to(stats.k_sr, (n, stats.m)),
        scale=np.broadcast_to(stats.avg_snr_sr, (n, stats.m)),
    )
    beta = rng.gamma(
        shape=np.broadcast_to(stats.k_rd, (n, stats.m)),
        scale=np.broadcast_to(stats.avg_snr_rd, (n, stats.m)),
    )
    return a0, alpha, beta


CHUNK = 4096  # trials per RNG stream; the unit of parallel work


def trial_rng(seed: int, point_index: int, chunk_index: int) -> np.random.Generator:
    """Counter-keyed stream: results depend only on (seed, point, chunk),
    never on how chunks are distributed across workers."""
    ss = np.random.SeedSequence((int(seed), int(point_index), int(chunk_index)))
    return np.random.Generator(np.random.Philox(ss))


def effective_gains(mode: CsiMode, state: ChannelState, stats: ChannelStats) -> EffectiveGainView:
    """Project a realization onto what the given CSI mode may act on."""
    if state.m != stats.m:
        raise ValueError("state and stats disagree on relay count")
    if mode is CsiMode.FULL:
        return EffectiveGainView(state.alpha0, state.alpha.copy(), state.beta.copy(), False)
    if mode is CsiMode.PARTIAL_BETA:
        return EffectiveGainView(stats.mean_alpha0, stats.mean_alpha.copy(), state.beta.copy(), False)
    if mode is CsiMode.PARTIAL_ALPHA:
        return EffectiveGainView(state.alpha0, state.alpha.copy(), None, True)
    if mode is CsiMode.STATS_ONLY:
        return EffectiveGainView(stats.mean_alpha0, stats.mean_alpha.copy(), None, True)
    raise ValueError(f"unknown CSI mode {mode!r}")


_CONFIG_KEYS = {
    "m", "relay_gain", "sigma2_sd", "sigma2_sr", "sigma2_rd",
    "es_max", "ei_max", "e_tot", "snr_threshold_db",
    "k_sd", "k_sr", "k_rd", "avg_snr_sd", "avg_snr_sr", "avg_snr_rd",
}


def load_config_file(path_or_dict) -> tuple[NetworkConfig, ChannelStats]:
    """Flat JSON config -> (NetworkConfig, ChannelStats).

    Per-relay fields accept a scalar (broadcast) or a length-m array.
    Unknown keys are rejected.  snr_threshold_db is converted once here.
    """
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
    else:
        with open(path_or_dict) as f:
            raw = json.load(f)
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    m = int(raw.get("m", 3))
    cfg = NetworkConfig(
        m=m,
        relay_gain=raw.get("relay_gain", 1.0),
        sigma2_sd=float(raw.get("sigma2_sd", 1.0)),
        sigma2_sr=raw.get("sigma2_sr", 1.0),
        sigma2_rd=raw.get("sigma2_rd", 1.0),
        es_max=float(raw.get("es_max", 3.0)),
        ei_max=raw.get("ei_max", 3.0),
        e_tot=float(raw.get("e_tot", 5.5)),
        snr_threshold=10.0 ** (float(raw.get("snr_threshold_db", 5.0)) / 10.0),
    )
    stats = ChannelStats(
        m=m,
        k_sd=float(raw.get("k_sd", 1.0)),
        avg_snr_sd=float(raw.get("avg_snr_sd", 0.5)),
        k_sr=raw.get("k_sr", 1.0),
        avg_snr_sr=raw.get("avg_snr_sr", 0.5),
        k_rd=raw.get("k_rd", 1.0),
        avg_snr_rd=raw.get("avg_snr_rd", 0.5),
    )
    return cfg, stats


def config_to_dict(cfg: NetworkConfig, stats: ChannelStats) -> dict:
    """Inverse of load_config_file (arrays as lists, threshold back to dB)."""
    return {
        "m": cfg.m,
        "relay_gain": cfg.relay_gain.tolist(),
        "sigma2_sd": cfg.sigma2_sd,
        "sigma2_sr": cfg.sigma2_sr.tolist(),
        "sigma2_rd": cfg.sigma2_rd.tolist(),
        "es_max": cfg.es_max,
        "ei_max": cfg.ei_max.tolist(),
        "e_tot": cfg.e_tot,
        "snr_threshold_db": 10.0 * np.log10(cfg.snr_threshold) if cfg.snr_threshold > 0 else -np.inf,
        "k_sd": stats.k_sd,
        "avg_snr_sd": stats.avg_snr_sd,
        "k_sr": stats.k_sr.tolist(),
        "avg_snr_sr": stats.avg_snr_sr.tolist(),
        "k_rd": stats.k_rd.tolist(),
        "avg_snr_rd": stats.avg_snr_rd.tolist(),
    }
