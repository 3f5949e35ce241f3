"""All-participate allocators.

Two dual problems over the box {0 <= E_s <= es_max, 0 <= E_i <= ei_max}:

* SNR maximization under the total budget E_s + sum E_i <= e_tot.  With
  instantaneous (or beta-instantaneous) gains the KKT system has a closed
  water-filling form; box conflicts are resolved by an active-set sweep
  (clamp-to-cap moves first, then clamp-to-zero moves).
* Energy minimization subject to snr >= threshold.  Closed water-filling
  form for instantaneous gains; for averaged objectives a bisection over
  the common marginal value with per-relay 1-D solves (the problem reduced
  over E_s is convex, so the stationary point is the optimum).

All closed-form paths verify their own KKT conditions and fall back to a
projected-gradient (or budget-bisection) solve if the check fails; the
fallback is exercised only on degenerate inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelState, ChannelStats, CsiMode, EffectiveGainView, NetworkConfig
from .objective import PowerAllocation, avg_bracket, instant_bracket
from . import specfun

__all__ = [
    "SolverPath",
    "WaterfillState",
    "AllocationReport",
    "opa_full",
    "opa_full_batch",
    "opa_stats",
    "ee_full",
    "ee_full_batch",
    "ee_stats",
    "upa",
    "project_box_budget",
]

POWER_TOL = 1e-9     # absolute feasibility tolerance on powers
SNR_RTOL = 1e-9      # relative tolerance on threshold equality
PG_MAX_ITER = 5000


class SolverPath(enum.Enum):
    CLOSED_FORM = "closed_form"
    ACTIVE_SET = "active_set"
    PROJECTED_GRADIENT = "projected_gradient"
    ALL_MAX_FALLBACK = "all_max_fallback"


@dataclass(frozen=True)
class WaterfillState:
    """Final active-set partition: interior X, zero-clamped Y, cap-clamped Z."""

    interior: frozenset
    zeroed: frozenset
    capped: frozenset
    multiplier: float

    def __post_init__(self):
        sets = (self.interior, self.zeroed, self.capped)
        total = sum(len(s) for s in sets)
        union = self.interior | self.zeroed | self.capped
        if len(union) != total:
            raise ValueError("active sets must be pairwise disjoint")


@dataclass
class AllocationReport:
    allocation: PowerAllocation
    objective: float
    feasible: bool
    iterations: int
    solver_path: SolverPath
    relay_index: int | None = None
    converged: bool = True
    kkt_residual: float | None = None
    waterfill: WaterfillState | None = field(default=None, repr=False)


def _unpack_gains(gains, m: int):
    if isinstance(gains, ChannelState):
        a0, al, be = gains.alpha0, gains.alpha, gains.beta
    elif isinstance(gains, EffectiveGainView):
        if gains.beta_averaged:
            raise ValueError("this allocator needs instantaneous beta gains")
        a0, al, be = gains.alpha0, gains.alpha, gains.beta
    else:
        a0, al, be = gains
        al = np.asarray(al, dtype=float)
        be = np.asarray(be, dtype=float)
    if al.shape[-1] != m:
        raise ValueError("gain vectors disagree with relay count")
    return float(a0), np.asarray(al, dtype=float), np.asarray(be, dtype=float)


# ---------------------------------------------------------------------------
# projection and projected gradient (shared by the averaged-objective solvers)
# ---------------------------------------------------------------------------

def project_box_budget(y: np.ndarray, caps: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {0 <= x <= caps, sum(x) <= budget}."""
    x = np.clip(y, 0.0, caps)
    if x.sum() <= budget:
        return x
    lo, hi = 0.0, float(np.max(y))
    for _ in range(100):
        tau = 0.5 * (lo + hi)
        if np.clip(y - tau, 0.0, caps).sum() > budget:
            lo = tau
        else:
            hi = tau
    return np.clip(y - hi, 0.0, caps)


def _pg_maximize(fun, grad, x0, caps, budget, max_iter=PG_MAX_ITER, rtol=1e-8):
    """Projected gradient ascent with backtracking; returns (x, f, iters, pg, ok)."""
    x = project_box_budget(np.asarray(x0, dtype=float), caps, budget)
    f = fun(x)
    step = 1.0
    pg_norm = np.inf
    for it in range(1, max_iter + 1):
        g = grad(x)
        probe = 1e-6
        pg_norm = float(np.linalg.norm(project_box_budget(x + probe * g, caps, budget) - x) / probe)
        if pg_norm <= rtol * (1.0 + abs(f)):
            return x, f, it, pg_norm, True
        accepted = False
        for _ in range(60):
            cand = project_box_budget(x + step * g, caps, budget)
            fc = fun(cand)
            if fc >= f + 1e-4 * float(g @ (cand - x)) and fc >= f:
                x, f = cand, fc
                step *= 1.3
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # step collapsed to numerical zero: treat as converged stationary
            return x, f, it, pg_norm, pg_norm <= 1e-6 * (1.0 + abs(f))
    return x, f, max_iter, pg_norm, False


# ---------------------------------------------------------------------------
# SNR maximization, instantaneous gains (closed water-filling + active set)
# ---------------------------------------------------------------------------

def opa_full_batch(a0, al, be, cfg: NetworkConfig, tol: float = 1e-12):
    """Vectorized water-filling SNR maximizer.

    a0: (N,), al/be: (N, m).  Returns (e_s (N,), e (N, m), iters (N,),
    fallback mask (N,)).  Elements whose KKT check fails are re-solved by
    projected gradient.
    """
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    al = np.atleast_2d(np.asarray(al, dtype=float))
    be = np.atleast_2d(np.asarray(be, dtype=float))
    N, m = al.shape
    zeta, gain, ei_max = cfg.zeta, cfg.relay_gain, cfg.ei_max
    es_max, e_tot = cfg.es_max, cfg.e_tot

    es_out = np.zeros(N)
    e_out = np.zeros((N, m))
    iters = np.zeros(N, dtype=int)
    fell_back = np.zeros(N, dtype=bool)

    if m == 0:
        es_out[:] = min(es_max, e_tot)
        return es_out, e_out, iters, fell_back

    if es_max + ei_max.sum() <= e_tot + tol:
        # budget slack: monotone objective puts everything at the caps
        es_out[:] = es_max
        e_out[:] = ei_max
        return es_out, e_out, iters, fell_back

    dead = (al <= 0.0) | (be <= 0.0)
    status = np.where(dead, 1, 0).astype(np.int8)  # 0=X interior, 1=Y zero, 2=Z cap
    be_safe = np.where(be > 0.0, be, 1.0)
    c = zeta / (gain * be_safe)
    w = np.sqrt(np.maximum(al, 0.0) * c)
    cap_term = al * zeta / (gain * ei_max * be + zeta)

    E = np.zeros((N, m))
    done = np.zeros(N, dtype=bool)
    all_zero = (a0 <= 0.0) & np.all(dead, axis=1)
    done |= all_zero

    for it in range(1, m + 3):
        act = ~done
        if not act.any():
            break
        inX = (status == 0) & act[:, None]
        inY = status == 1
        inZ = status == 2
        a_eff = a0 + np.where(~inY, al, 0.0).sum(1) - np.where(inZ, cap_term, 0.0).sum(1)
        W = np.where(inX, w, 0.0).sum(1)
        Cx = np.where(inX, c, 0.0).sum(1)
        e_bud = e_tot - np.where(inZ, ei_max, 0.0).sum(1)
        bad = act & ((a_eff <= tol) | (e_bud < -tol))
        hasX = inX.any(1)

        with np.errstate(divide="ignore", invalid="ignore"):
            T = np.sqrt(np.maximum(e_bud + Cx, 0.0) / np.maximum(a_eff, tol))
            es_unc = (a_eff - np.where(T > 0, W / np.where(T > 0, T, 1.0), np.inf)) * T**2
        scap = act & hasX & (es_unc > es_max)
        fac = np.where(scap,
                       (e_tot - es_max - np.where(inZ, ei_max, 0.0).sum(1) + Cx)
                       / np.where(W > 0, W, 1.0),
                       T)
        Enew = w * fac[:, None] - c
        E = np.where(inX, Enew, E)

        over = inX & (E > ei_max + 1e-12)
        under = inX & (E < -1e-12)
        has_over = over.any(1)
        has_under = under.any(1) & ~has_over  # cap conflicts first
        status[over & has_over[:, None]] = 2
        status[under & has_under[:, None]] = 1
        newly_done = act & ~has_over & ~has_under & ~bad
        iters[newly_done] = it
        fell_back |= bad
        done |= newly_done | bad

    fell_back |= ~done & ~all_zero

    inY = status == 1
    inZ = status == 2
    e_out = np.where(inY, 0.0, np.where(inZ, ei_max, np.clip(E, 0.0, ei_max)))
    e_out[all_zero] = 0.0
    es_out = np.clip(e_tot - e_out.sum(1), 0.0, es_max)
    es_out[all_zero] = 0.0

    # KKT verification (cheap): equal marginals on the interior, dominated on
    # Y, dominating on Z, source marginal >= multiplier when source capped.
    ok = ~fell_back
    den = gain * e_out * be + zeta
    gs = a0 + (al - al * zeta / den).sum(1)
    ge = es_out[:, None] * al * zeta * gain * be / den**2
    interior = (e_out > 1e-12) & (e_out < ei_max - 1e-12)
    src_int = es_out < es_max * (1.0 - 1e-12)
    mult = np.where(src_int, gs, np.where(interior, ge, 0.0).max(1))
    slack = 1e-6 * (np.abs(mult) + np.abs(gs)) + 1e-12
    bad_int = (np.abs(ge - mult[:, None]) > slack[:, None]) & interior
    bad_y = (ge > mult[:, None] + slack[:, None]) & (e_out <= 1e-12) & ~dead
    bad_z = (ge < mult[:, None] - slack[:, None]) & (e_out >= ei_max - 1e-12)
    bad_s = ~src_int & (gs < mult - slack)
    kkt_bad = bad_int.any(1) | bad_y.any(1) | bad_z.any(1) | bad_s
    fell_back |= ok & kkt_bad & ~all_zero

    for idx in np.nonzero(fell_back)[0]:
        es_out[idx], e_out[idx], iters[idx] = _pg_instant(
            a0[idx], al[idx], be[idx], cfg)
    return es_out, e_out, iters, fell_back


def _pg_instant(a0, al, be, cfg: NetworkConfig):
    zeta, gain = cfg.zeta, cfg.relay_gain
    caps = np.concatenate(([cfg.es_max], cfg.ei_max))

    def fun(x):
        return x[0] * instant_bracket(x[1:], a0, al, be, zeta, gain)

    def grad(x):
        den = gain * x[1:] * be + zeta
        gs = instant_bracket(x[1:], a0, al, be, zeta, gain)
        return np.concatenate(([gs], x[0] * al * zeta * gain * be / den**2))

    best = None
    starts = [np.full(cfg.m + 1, cfg.e_tot / (cfg.m + 1)),
              np.concatenate(([cfg.es_max], np.full(cfg.m, 1e-3))),
              np.concatenate(([1e-3], np.full(cfg.m, cfg.e_tot / max(cfg.m, 1))))]
    for x0 in starts:
        x, f, it, _, _ = _pg_maximize(fun, grad, x0, caps, cfg.e_tot)
        if best is None or f > best[1]:
            best = (x, f, it)
    x, _, it = best
    return x[0], x[1:], it


def opa_full(gains, cfg: NetworkConfig) -> AllocationReport:
    """Maximize the instantaneous end-to-end SNR subject to budget and boxes."""
    a0, al, be = _unpack_gains(gains, cfg.m)
    es, e, iters, fb = opa_full_batch(a0[None] if np.ndim(a0) else np.array([a0]),
                                      al[None, :], be[None, :], cfg)
    e_s, evec = float(es[0]), e[0]
    obj = float(e_s * instant_bracket(evec, a0, al, be, cfg.zeta, cfg.relay_gain))
    interior = frozenset(i for i in range(cfg.m) if 1e-12 < evec[i] < cfg.ei_max[i] - 1e-12)
    zeroed = frozenset(i for i in range(cfg.m) if evec[i] <= 1e-12)
    capped = frozenset(range(cfg.m)) - interior - zeroed
    den = cfg.relay_gain * evec * be + cfg.zeta
    gs = a0 + float((al - al * cfg.zeta / den).sum())
    path = SolverPath.PROJECTED_GRADIENT if fb[0] else (
        SolverPath.ACTIVE_SET if iters[0] > 1 else SolverPath.CLOSED_FORM)
    return AllocationReport(
        allocation=PowerAllocation(e_s, evec),
        objective=obj,
        feasible=True,
        iterations=int(iters[0]),
        solver_path=path,
        waterfill=WaterfillState(interior, zeroed, capped, max(gs, 1e-300)),
    )


# ---------------------------------------------------------------------------
# SNR maximization, averaged objectives (projected gradient)
# ---------------------------------------------------------------------------

def _alpha_terms(mode: CsiMode, state, stats: ChannelStats):
    if mode is CsiMode.STATS_ONLY:
        return stats.mean_alpha0, stats.mean_alpha
    if mode is CsiMode.PARTIAL_ALPHA:
        if state is None:
            raise ValueError("partial-alpha mode needs a channel realization")
        return state.alpha0, state.alpha
    raise ValueError(f"averaged solver does not handle mode {mode!r}")


def opa_stats(mode: CsiMode, state, stats: ChannelStats, cfg: NetworkConfig,
              x0: np.ndarray | None = None) -> AllocationReport:
    """Maximize the averaged (or partial-alpha hybrid) SNR by projected gradient.

    `x0` warm-starts the solve (used by the per-realization sweeps); without
    it a small multi-start is run to guard against flat ridges.
    """
    a0_term, a_terms = _alpha_terms(mode, state, stats)
    zeta, gain = cfg.zeta, cfg.relay_gain
    caps = np.concatenate(([cfg.es_max], cfg.ei_max))
    c = zeta / (gain * stats.avg_snr_rd)

    def fun(x):
        return x[0] * avg_bracket(x[1:], a0_term, a_terms, stats.k_rd,
                                  stats.avg_snr_rd, zeta, gain)

    def grad(x):
        e = x[1:]
        live = e > 1e-300
        z = np.where(live, c / np.where(live, e, 1.0), np.inf)
        g = np.ones_like(z)
        d = a_terms * stats.k_rd / c
        if live.any():
            zl = np.where(live, z, 1.0)
            gl = np.empty_like(zl)
            dl = np.empty_like(zl)
            for i in range(cfg.m):
                gl[i] = specfun.power_scaled_tail(stats.k_rd[i], zl[i])
                dl[i] = specfun.power_scaled_tail_dz(stats.k_rd[i], zl[i], g=gl[i])
            g = np.where(live, gl, 1.0)
            d = np.where(live, a_terms * dl * z / np.where(live, e, 1.0), d)
        gs = a0_term + float(np.sum(a_terms - a_terms * g))
        return np.concatenate(([gs], x[0] * d))

    if x0 is not None:
        x, f, it, pg, ok = _pg_maximize(fun, grad, x0, caps, cfg.e_tot)
    else:
        best = None
        for start in (np.full(cfg.m + 1, cfg.e_tot / (cfg.m + 1)),
                      np.concatenate(([cfg.es_max],
                                      np.full(cfg.m, max(cfg.e_tot - cfg.es_max, 0.1) / max(cfg.m, 1)))),
                      np.concatenate(([0.2 * cfg.es_max], np.full(cfg.m, cfg.e_tot / max(cfg.m, 1))))):
            cand = _pg_maximize(fun, grad, start, caps, cfg.e_tot)
            if best is None or cand[1] > best[1]:
                best = cand
        x, f, it, pg, ok = best
    return AllocationReport(
        allocation=PowerAllocation(float(x[0]), x[1:]),
        objective=float(f),
        feasible=True,
        iterations=it,
        solver_path=SolverPath.PROJECTED_GRADIENT,
        converged=ok,
        kkt_residual=pg,
    )


# ---------------------------------------------------------------------------
# energy minimization, instantaneous gains
# ---------------------------------------------------------------------------

def ee_full_batch(a0, al, be, cfg: NetworkConfig, gamma_th: float | None = None,
                  tol: float = 1e-12):
    """Vectorized minimum-power allocator for snr >= gamma_th.

    Returns (e_s, e, iters, feasible, fallback).  Infeasible elements carry
    the all-caps allocation.
    """
    gamma_th = cfg.snr_threshold if gamma_th is None else float(gamma_th)
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    al = np.atleast_2d(np.asarray(al, dtype=float))
    be = np.atleast_2d(np.asarray(be, dtype=float))
    N, m = al.shape
    zeta, gain, ei_max, es_max = cfg.zeta, cfg.relay_gain, cfg.ei_max, cfg.es_max

    es_out = np.zeros(N)
    e_out = np.zeros((N, m))
    iters = np.zeros(N, dtype=int)
    feasible = np.ones(N, dtype=bool)
    fell_back = np.zeros(N, dtype=bool)

    if gamma_th <= 0.0:
        return es_out, e_out, iters, feasible, fell_back

    cap_term = al * zeta / (gain * ei_max * be + zeta) if m else np.zeros((N, 0))
    brk_caps = a0 + (al - cap_term).sum(1)
    infeasible = es_max * brk_caps < gamma_th * (1.0 - 1e-12)
    feasible = ~infeasible
    es_out[infeasible] = es_max
    e_out[infeasible] = ei_max

    dead = (al <= 0.0) | (be <= 0.0)
    be_safe = np.where(be > 0.0, be, 1.0)
    c = zeta / (gain * be_safe)
    w = np.sqrt(np.maximum(al, 0.0) * c)
    sqrt_th = np.sqrt(gamma_th)

    forced_y = dead.copy()
    for rerun in range(m + 1):
        status = np.where(forced_y, 1, 0).astype(np.int8)
        E = np.zeros((N, m))
        done = infeasible.copy()
        for it in range(1, m + 3):
            act = ~done
            if not act.any():
                break
            inX = (status == 0) & act[:, None]
            inY = status == 1
            inZ = status == 2
            a_eff = a0 + np.where(~inY, al, 0.0).sum(1) - np.where(inZ, cap_term, 0.0).sum(1)
            W = np.where(inX, w, 0.0).sum(1)
            hasX = inX.any(1)
            bad = act & (a_eff <= tol)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = (W / sqrt_th + 1.0) / np.maximum(a_eff, tol)
                es_unc = rho * gamma_th
                scap = act & (es_unc > es_max)
                denom = es_max * a_eff - gamma_th
                bad |= scap & (denom <= tol)
                fac = np.where(scap, es_max * W / np.where(np.abs(denom) > tol, denom, 1.0),
                               rho * sqrt_th)
            Enew = w * fac[:, None] - c
            E = np.where(inX, Enew, E)
            over = inX & (E > ei_max + 1e-12)
            under = inX & (E < -1e-12)
            has_over = over.any(1)
            has_under = under.any(1) & ~has_over
            status[over & has_over[:, None]] = 2
            status[under & has_under[:, None]] = 1
            newly = act & ~has_over & ~has_under & ~bad
            iters[newly] += it
            fell_back |= bad
            done |= newly | bad
        fell_back |= ~done & ~infeasible

        inY = status == 1
        inZ = status == 2
        e_run = np.where(inY, 0.0, np.where(inZ, ei_max, np.clip(E, 0.0, ei_max)))
        # with any free power the formulas meet the threshold with equality;
        # recompute E_s exactly from the constraint for numerical tightness
        brk = a0 + (al - al * zeta / (gain * e_run * be + zeta)).sum(1)
        es_run = np.clip(gamma_th / np.maximum(brk, tol), 0.0, es_max)
        solved = ~infeasible & ~fell_back
        es_out = np.where(solved, es_run, es_out)
        e_out = np.where(solved[:, None], e_run, e_out)

        snr = es_out * brk
        overshoot = solved & (snr > gamma_th * (1.0 + SNR_RTOL)) & (es_out >= es_max * (1 - 1e-12))
        # re-run excluding relays zeroed in this pass (skipping the forced set)
        if not overshoot.any():
            break
        forced_y = forced_y | (overshoot[:, None] & (status == 1))

    snr = es_out * (a0 + (al - al * zeta / (gain * e_out * be + zeta)).sum(1))
    interiorish = (es_out > 1e-12) & ((es_out < es_max - 1e-12)
                                      | ((e_out > 1e-12) & (e_out < ei_max - 1e-12)).any(1))
    not_tight = feasible & (
        (snr < gamma_th * (1.0 - 10 * SNR_RTOL))
        | (interiorish & (np.abs(snr - gamma_th) > 10 * SNR_RTOL * gamma_th))
    )
    fell_back |= not_tight
    for idx in np.nonzero(fell_back & feasible)[0]:
        es_out[idx], e_out[idx], iters[idx] = _ee_budget_bisection(
            a0[idx], al[idx], be[idx], cfg, gamma_th)
    return es_out, e_out, iters, feasible, fell_back


def _ee_budget_bisection(a0, al, be, cfg: NetworkConfig, gamma_th: float):
    """Exact fallback: the minimal budget P with max-SNR(P) >= gamma_th,
    found by bisection over the OPA solver (max-SNR is increasing in P)."""
    from dataclasses import replace

    def snr_at(P):
        sub = replace(cfg, e_tot=P)
        es, e, _, _ = opa_full_batch(np.array([a0]), al[None], be[None], sub)
        return es[0], e[0], float(es[0] * instant_bracket(e[0], a0, al, be, cfg.zeta, cfg.relay_gain))

    hi = cfg.es_max + float(cfg.ei_max.sum())
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        _, _, s = snr_at(mid)
        if s >= gamma_th:
            hi = mid
        else:
            lo = mid
    es, e, _ = snr_at(hi)
    return es, e, 80


def ee_full(gains, cfg: NetworkConfig, gamma_th: float | None = None) -> AllocationReport:
    """Minimize total consumed power subject to snr >= gamma_th and boxes."""
    gamma_th = cfg.snr_threshold if gamma_th is None else float(gamma_th)
    a0, al, be = _unpack_gains(gains, cfg.m)
    es, e, iters, feas, fb = ee_full_batch(np.array([a0]), al[None], be[None], cfg, gamma_th)
    e_s, evec = float(es[0]), e[0]
    total = e_s + evec.sum()
    if not feas[0]:
        path = SolverPath.ALL_MAX_FALLBACK
    elif fb[0]:
        path = SolverPath.PROJECTED_GRADIENT
    elif iters[0] > 1:
        path = SolverPath.ACTIVE_SET
    else:
        path = SolverPath.CLOSED_FORM
    return AllocationReport(
        allocation=PowerAllocation(e_s, evec),
        objective=float(total),
        feasible=bool(feas[0]),
        iterations=int(iters[0]),
        solver_path=path,
    )


# ---------------------------------------------------------------------------
# energy minimization, averaged objectives
# ---------------------------------------------------------------------------

def _relay_level_solve(s_target, a_terms, k_rd, c, ei_max, n_iter=64):
    """Per-relay energies with marginal bracket gain equal to s_target.

    The marginal d_i(E) = a_i * G'(z) z / E decreases in E (bracket concave),
    so each relay solves by bisection, clipped to its box.
    """
    s_target = np.atleast_1d(np.asarray(s_target, dtype=float))
    batch = s_target.shape[0]
    m = a_terms.shape[-1]
    a_b = np.broadcast_to(a_terms, (batch, m))
    c_b = np.broadcast_to(c, (batch, m))
    d0 = a_b * k_rd / c_b          # marginal at E -> 0+
    lo = np.zeros((batch, m))
    hi = np.broadcast_to(ei_max, (batch, m)).copy()

    def marginal(E):
        out = np.empty_like(E)
        for i in range(m):
            Ei = E[:, i]
            live = Ei > 1e-300
            z = np.where(live, c_b[:, i] / np.where(live, Ei, 1.0), np.inf)
            zl = np.where(live, z, 1.0)
            g = specfun.power_scaled_tail(k_rd[i], zl)
            dg = specfun.power_scaled_tail_dz(k_rd[i], zl, g=g)
            out[:, i] = np.where(live, a_b[:, i] * dg * zl / np.where(live, Ei, 1.0),
                                 d0[:, i])
        return out

    at_zero = d0 <= s_target[:, None]          # even the first joule is not worth it
    at_cap = marginal(hi) >= s_target[:, None]  # cap still pays at the margin
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        too_high = marginal(mid) >= s_target[:, None]
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
    E = 0.5 * (lo + hi)
    E = np.where(at_zero, 0.0, E)
    E = np.where(at_cap & ~at_zero, np.broadcast_to(ei_max, (batch, m)), E)
    return E


def ee_stats_batch(mode: CsiMode, a0_term, a_terms, stats: ChannelStats,
                   cfg: NetworkConfig, gamma_th: float | None = None):
    """Vectorized minimum-power allocator for the averaged objective.

    a0_term (N,), a_terms (N, m) are the source-side factors (means for
    stats-only, instantaneous alphas for partial-alpha).  Returns
    (e_s, e, iters, feasible).
    """
    gamma_th = cfg.snr_threshold if gamma_th is None else float(gamma_th)
    a0_term = np.atleast_1d(np.asarray(a0_term, dtype=float))
    a_terms = np.atleast_2d(np.asarray(a_terms, dtype=float))
    N, m = a_terms.shape
    zeta, gain = cfg.zeta, cfg.relay_gain
    c = zeta / (gain * stats.avg_snr_rd)
    k_rd = stats.k_rd

    es_out = np.zeros(N)
    e_out = np.zeros((N, m))
    feasible = np.ones(N, dtype=bool)
    if gamma_th <= 0.0:
        return es_out, e_out, np.zeros(N, dtype=int), feasible

    def bracket_of(E):
        return avg_bracket(E, a0_term, a_terms, k_rd, stats.avg_snr_rd, zeta, gain)

    caps = np.broadcast_to(cfg.ei_max, (N, m))
    brk_caps = bracket_of(caps)
    infeasible = cfg.es_max * brk_caps < gamma_th * (1.0 - 1e-12)
    feasible = ~infeasible

    # Outer bisection over the common marginal s.  Raising s starves the
    # relays, so bracket(E(s)) decreases in s.  Two monotone root problems:
    # stationarity bracket(s)^2 = s*gamma_th (source interior) and the
    # source-cap boundary bracket(s) = gamma_th/es_max; the optimum sits at
    # the smaller root, located by one bisection on the union predicate.
    d0 = a_terms * k_rd / c
    s_hi = np.maximum(d0.max(1), 1e-30) * (1.0 + 1e-9)
    s_lo = np.full(N, 1e-30)
    brk_floor = gamma_th / cfg.es_max
    for _ in range(64):
        s_mid = np.sqrt(s_lo * s_hi)
        E = _relay_level_solve(s_mid, a_terms, k_rd, c, cfg.ei_max)
        brk = bracket_of(E)
        past_root = (brk**2 <= s_mid * gamma_th) | (brk <= brk_floor)
        s_hi = np.where(past_root, s_mid, s_hi)
        s_lo = np.where(past_root, s_lo, s_mid)
    E = _relay_level_solve(s_hi, a_terms, k_rd, c, cfg.ei_max)
    brk = bracket_of(E)
    es = np.clip(gamma_th / np.maximum(brk, 1e-300), 0.0, cfg.es_max)

    es_out = np.where(feasible, es, cfg.es_max)
    e_out = np.where(feasible[:, None], E, caps)
    return es_out, e_out, np.full(N, 64, dtype=int), feasible


def ee_stats(mode: CsiMode, state, stats: ChannelStats, cfg: NetworkConfig,
             gamma_th: float | None = None) -> AllocationReport:
    """Scalar wrapper over ee_stats_batch for the averaged dual problem."""
    a0_term, a_terms = _alpha_terms(mode, state, stats)
    es, e, iters, feas = ee_stats_batch(mode, np.array([a0_term]), a_terms[None, :],
                                        stats, cfg, gamma_th)
    total = float(es[0] + e[0].sum())
    return AllocationReport(
        allocation=PowerAllocation(float(es[0]), e[0]),
        objective=total,
        feasible=bool(feas[0]),
        iterations=int(iters[0]),
        solver_path=(SolverPath.PROJECTED_GRADIENT if feas[0]
                     else SolverPath.ALL_MAX_FALLBACK),
    )


def upa(cfg: NetworkConfig) -> PowerAllocation:
    """Uniform split of the budget over source and relays, clipped to caps."""
    share = cfg.e_tot / (cfg.m + 1)
    return PowerAllocation(min(share, cfg.es_max), np.minimum(share, cfg.ei_max))
