"""End-to-end SNR objectives: instantaneous, averaged, hybrids, gradients.

Instantaneous (destination uses maximal-ratio combining over the direct
branch and the m fixed-gain relay branches):

    snr = E_s * ( alpha0 + sum_i alpha_i - sum_i alpha_i*zeta_i/(a_i E_i beta_i + zeta_i) )

Averaged over the Gamma fading of all links, each relay's subtracted term
becomes mean_alpha_i * G(k_i, z_i) with z_i = zeta_i/(a_i E_i avg_snr_rd_i)
and G(k, z) = z^k e^z Gamma(1-k, z) in (0, 1).  For Rayleigh links (k = 1)
G reduces to z e^z E1(z), which is kept as a separate evaluation path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .channel import ChannelState, ChannelStats, CsiMode, NetworkConfig

__all__ = [
    "PowerAllocation",
    "snr_instant",
    "snr_avg",
    "snr_hybrid",
    "snr_selective",
    "grad_snr",
    "avg_bracket",
    "instant_bracket",
]

_EI_FLOOR = 1e-300  # below this a relay is treated as silent


@dataclass(frozen=True)
class PowerAllocation:
    """Source energy and per-relay energies (selective: one nonzero entry)."""

    e_s: float
    e: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))
        if self.e_s < 0 or np.any(self.e < 0):
            raise ValueError("powers must be nonnegative")

    @property
    def total(self) -> float:
        return float(self.e_s + self.e.sum())

    def is_feasible(self, cfg: NetworkConfig, tol: float = 1e-9) -> bool:
        """Check the box and budget constraints (never silently enforced)."""
        return bool(
            self.e_s <= cfg.es_max + tol
            and np.all(self.e <= cfg.ei_max + tol)
            and self.total <= cfg.e_tot + tol
        )


def instant_bracket(e, alpha0, alpha, beta, zeta, gain):
    """alpha0 + sum(alpha) - sum(alpha*zeta/(gain*e*beta + zeta)); vectorized.

    At e_i = 0 the i-th subtracted term equals alpha_i exactly, so a silent
    relay contributes nothing.
    """
    e = np.asarray(e, dtype=float)
    sub = alpha * zeta / (gain * e * beta + zeta)
    return alpha0 + np.sum(alpha - sub, axis=-1)


def snr_instant(alloc: PowerAllocation, state: ChannelState, cfg: NetworkConfig) -> float:
    """Instantaneous end-to-end SNR of the allocation on a realization."""
    if alloc.e.shape != (cfg.m,) or state.m != cfg.m:
        raise ValueError("dimension mismatch")
    return float(
        alloc.e_s * instant_bracket(alloc.e, state.alpha0, state.alpha, state.beta,
                                    cfg.zeta, cfg.relay_gain)
    )


def _loss_factor(k_rd, z, path: str):
    """G(k, z) per relay with the requested evaluation path ('general' or
    'rayleigh'); z may carry a leading batch dimension."""
    z = np.asarray(z, dtype=float)
    if path == "rayleigh":
        return z * specfun.exp_scaled_exp1(z)
    # general path: per-relay shape (columns share k)
    k_rd = np.atleast_1d(np.asarray(k_rd, dtype=float))
    if z.ndim <= 1:
        zcols = np.atleast_1d(z)
        return np.array([
            specfun.power_scaled_tail(k_rd[i], zcols[i]) for i in range(zcols.shape[0])
        ])
    out = np.empty_like(z)
    for i in range(z.shape[-1]):
        out[..., i] = specfun.power_scaled_tail(k_rd[i], z[..., i])
    return out


def _resolve_path(k_rd, path: str) -> str:
    if path == "auto":
        return "rayleigh" if np.all(np.asarray(k_rd) == 1.0) else "general"
    if path == "rayleigh" and not np.all(np.asarray(k_rd) == 1.0):
        raise ValueError("rayleigh path requires every relay-destination shape k = 1")
    return path


def avg_bracket(e, a0_term, a_terms, k_rd, avg_snr_rd, zeta, gain, path: str = "auto"):
    """a0_term + sum(a_terms) - sum(a_terms * G(k, z)) with z = zeta/(gain*e*avg_snr_rd).

    a0_term / a_terms are the source-side factors: link means for the fully
    averaged objective, instantaneous alphas for the partial-alpha hybrid.
    The e -> 0 limit of each subtracted term (a_terms * 1) is taken exactly.
    Vectorized over a leading batch dimension of e (and optionally a_terms).
    """
    path = _resolve_path(k_rd, path)
    e = np.asarray(e, dtype=float)
    c = zeta / (gain * np.asarray(avg_snr_rd, dtype=float))
    live = e > _EI_FLOOR
    z = np.where(live, c / np.where(live, e, 1.0), np.inf)
    g = np.ones_like(z)
    if np.any(live):
        if z.ndim <= 1:
            g[live] = np.where(
                live, _loss_factor(k_rd, np.where(live, z, 1.0), path), 1.0
            )[live]
        else:
            gz = _loss_factor(k_rd, np.where(live, z, 1.0), path)
            g = np.where(live, gz, 1.0)
    sub = a_terms * g
    return a0_term + np.sum(a_terms - sub, axis=-1)


def snr_avg(alloc: PowerAllocation, stats: ChannelStats, cfg: NetworkConfig,
            path: str = "auto") -> float:
    """Average end-to-end SNR of a fixed allocation over the fading."""
    if np.any(alloc.e < 0) or alloc.e_s < 0:
        raise ValueError("powers must be nonnegative")
    br = avg_bracket(alloc.e, stats.mean_alpha0, stats.mean_alpha,
                     stats.k_rd, stats.avg_snr_rd, cfg.zeta, cfg.relay_gain, path)
    return float(alloc.e_s * br)


def snr_hybrid(mode: CsiMode, alloc: PowerAllocation, state: ChannelState,
               stats: ChannelStats, cfg: NetworkConfig, path: str = "auto") -> float:
    """The objective each CSI mode actually optimizes."""
    if mode is CsiMode.FULL:
        return snr_instant(alloc, state, cfg)
    if mode is CsiMode.STATS_ONLY:
        return snr_avg(alloc, stats, cfg, path)
    if mode is CsiMode.PARTIAL_BETA:
        view_state = ChannelState(stats.mean_alpha0, stats.mean_alpha, state.beta)
        return snr_instant(alloc, view_state, cfg)
    if mode is CsiMode.PARTIAL_ALPHA:
        br = avg_bracket(alloc.e, state.alpha0, state.alpha,
                         stats.k_rd, stats.avg_snr_rd, cfg.zeta, cfg.relay_gain, path)
        return float(alloc.e_s * br)
    raise ValueError(f"unknown CSI mode {mode!r}")


def snr_selective(e_s: float, e_i: float, relay: int, mode: CsiMode,
                  state: ChannelState, stats: ChannelStats, cfg: NetworkConfig) -> float:
    """Restriction of snr_hybrid to the {source, relay, destination} sub-network."""
    if not 0 <= relay < cfg.m:
        raise IndexError(f"relay index {relay} out of range for m={cfg.m}")
    e = np.zeros(cfg.m)
    e[relay] = e_i
    alloc = PowerAllocation(e_s, e)
    if mode in (CsiMode.FULL, CsiMode.PARTIAL_BETA):
        view = state if mode is CsiMode.FULL else ChannelState(
            stats.mean_alpha0, stats.mean_alpha, state.beta)
        a0, al, be = view.alpha0, view.alpha[relay], view.beta[relay]
        zeta, gain = cfg.zeta[relay], cfg.relay_gain[relay]
        return float(e_s * (a0 + al - al * zeta / (gain * e_i * be + zeta)))
    a0_term = stats.mean_alpha0 if mode is CsiMode.STATS_ONLY else state.alpha0
    a_i = stats.mean_alpha[relay] if mode is CsiMode.STATS_ONLY else state.alpha[relay]
    br = avg_bracket(np.array([e_i]), a0_term, np.array([a_i]),
                     stats.k_rd[relay:relay + 1], stats.avg_snr_rd[relay:relay + 1],
                     cfg.zeta[relay:relay + 1], cfg.relay_gain[relay:relay + 1])
    return float(e_s * br)


def _grad_instant(e_s, e, alpha0, alpha, beta, zeta, gain):
    den = gain * e * beta + zeta
    g_s = alpha0 + np.sum(alpha - alpha * zeta / den)
    g_e = e_s * alpha * zeta * gain * beta / den**2
    return np.concatenate(([g_s], g_e))


def _grad_avg(e_s, e, a0_term, a_terms, k_rd, avg_snr_rd, zeta, gain, path):
    path = _resolve_path(k_rd, path)
    c = zeta / (gain * avg_snr_rd)
    live = e > _EI_FLOOR
    z = np.where(live, c / np.where(live, e, 1.0), np.inf)
    g = np.ones_like(z)
    dterm = a_terms * k_rd / c  # exact e -> 0 limit of d/de
    if np.any(live):
        zl = np.where(live, z, 1.0)
        gl = _loss_factor(k_rd, zl, path)
        if path == "rayleigh":
            dg = specfun.power_scaled_tail_dz(1.0, zl, g=gl)
        else:
            dg = np.array([
                specfun.power_scaled_tail_dz(k_rd[i], zl[i], g=gl[i])
                for i in range(zl.shape[0])
            ])
        g = np.where(live, gl, 1.0)
        dterm = np.where(live, a_terms * dg * z / np.where(live, e, 1.0), dterm)
    g_s = a0_term + np.sum(a_terms - a_terms * g)
    return np.concatenate(([g_s], e_s * dterm))


def grad_snr(mode: CsiMode, alloc: PowerAllocation, state: ChannelState,
             stats: ChannelStats, cfg: NetworkConfig, path: str = "auto") -> np.ndarray:
    """Analytic gradient of snr_hybrid w.r.t. (E_s, E_1..E_m)."""
    e_s, e = alloc.e_s, alloc.e
    if mode is CsiMode.FULL:
        return _grad_instant(e_s, e, state.alpha0, state.alpha, state.beta,
                             cfg.zeta, cfg.relay_gain)
    if mode is CsiMode.PARTIAL_BETA:
        return _grad_instant(e_s, e, stats.mean_alpha0, stats.mean_alpha, state.beta,
                             cfg.zeta, cfg.relay_gain)
    if mode is CsiMode.STATS_ONLY:
        return _grad_avg(e_s, e, stats.mean_alpha0, stats.mean_alpha,
                         stats.k_rd, stats.avg_snr_rd, cfg.zeta, cfg.relay_gain, path)
    if mode is CsiMode.PARTIAL_ALPHA:
        return _grad_avg(e_s, e, state.alpha0, state.alpha,
                         stats.k_rd, stats.avg_snr_rd, cfg.zeta, cfg.relay_gain, path)
    raise ValueError(f"unknown CSI mode {mode!r}")
