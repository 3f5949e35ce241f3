"""Special-function kernels shared by the SNR objectives.

The averaged relay objective needs the upper incomplete gamma function
Gamma(s, z) at non-positive, generally non-integer order s = 1 - k (k the
fading shape), which scipy does not provide.  The evaluation here combines

* a modified-Lentz continued fraction for z >= max(1, s + 1), computed in
  the exp-scaled form e^z * Gamma(s, z) = z^s * H so that large z never
  underflows (method per Numerical Recipes, ch. 6, extended to s <= 0);
* a cancellation-free power series for z < 1, anchored at a shifted order
  sigma in (-0.5, 0.5] and walked down to s by the stable (for z < 1)
  downward recurrence e^z*Gamma(s-1, z) = (e^z*Gamma(s, z) - z^{s-1})/(s-1);
* an independent exponential-integral series anchor for integer s <= 0.

Everything is vectorized over z; orders are scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

__all__ = [
    "NumericTolerance",
    "ConvergenceError",
    "upper_gamma_tail",
    "exp_scaled_upper_gamma",
    "power_scaled_tail",
    "scaled_gamma_term",
    "exp1",
    "q_function",
]

_TINY = 1e-300


@dataclass(frozen=True)
class NumericTolerance:
    """Accuracy targets for the iterative kernels."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


_DEFAULT_TOL = NumericTolerance()


class ConvergenceError(ArithmeticError):
    """An iteration failed to converge; carries the last iterate."""

    def __init__(self, message: str, last_value):
        super().__init__(message)
        self.last_value = last_value


def _lentz_scaled(s: float, z: np.ndarray, tol: NumericTolerance) -> np.ndarray:
    """e^z * Gamma(s, z) by modified Lentz on the standard continued fraction.

    Reliable for z >= max(1, s + 1); converges for strongly negative s too
    (empirically < 100 iterations down to s = -10 at z = 1).
    """
    b = z + 1.0 - s
    c = np.full_like(z, 1.0 / _TINY)
    d = 1.0 / np.where(np.abs(b) < _TINY, _TINY, b)
    h = d.copy()
    active = np.ones(z.shape, dtype=bool)
    for i in range(1, tol.max_iter + 1):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        np.copyto(d, _TINY, where=np.abs(d) < _TINY)
        c = b + an / c
        np.copyto(c, _TINY, where=np.abs(c) < _TINY)
        d = 1.0 / d
        delt = d * c
        h = np.where(active, h * delt, h)
        active &= np.abs(delt - 1.0) >= 1e-15
        if not active.any():
            break
    else:
        raise ConvergenceError(
            f"continued fraction for Gamma({s}, z) did not converge",
            np.exp(s * np.log(z)) * h,
        )
    # z^s in log form: z >= 1 with s in [-10, 2] stays well inside range
    return np.exp(s * np.log(z)) * h


def _series_gamma_unscaled(s: float, z: np.ndarray, tol: NumericTolerance) -> np.ndarray:
    """Gamma(s, z) for small z via the cancellation-free expansion

        Gamma(s,z) = [ (Gamma(1+s)-1) - (z^s-1) ]/s - z^s sum_{n>=1} (-z)^n/((s+n) n!)

    valid for non-integer s (no pole among the s+n) and s in (-0.5, 2].
    The bracketed head is formed with expm1/lgamma so that s -> 0 is stable.
    """
    logz = np.log(z)
    head = (math.expm1(math.lgamma(1.0 + s)) - np.expm1(s * logz)) / s
    zs = np.exp(s * logz)
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for n in range(1, tol.max_iter + 1):
        term = term * (-z) / n
        contrib = term / (s + n)
        total = total + contrib
        if np.all(np.abs(contrib) <= 1e-16 * (np.abs(total) + 1e-30)):
            break
    else:
        raise ConvergenceError(
            f"small-z series for Gamma({s}, z) did not converge", head - zs * total
        )
    return head - zs * total


def _exp1_series(z: np.ndarray, tol: NumericTolerance) -> np.ndarray:
    """E1(z) for z < 1 by its classical series (independent of scipy)."""
    total = -np.euler_gamma - np.log(z)
    term = np.ones_like(z)
    for n in range(1, tol.max_iter + 1):
        term = term * (-z) / n
        contrib = -term / n
        total = total + contrib
        if np.all(np.abs(contrib) <= 1e-16 * (np.abs(total) + 1e-30)):
            break
    return total


def exp_scaled_upper_gamma(s: float, z, tol: NumericTolerance | None = None):
    """e^z * Gamma(s, z) for s <= 2, z > 0, vectorized over z."""
    tol = tol or _DEFAULT_TOL
    s = float(s)
    if s > 2.0:
        raise ValueError(f"order s={s} unsupported (only s <= 2 needed here)")
    zarr = np.asarray(z, dtype=float)
    scalar = zarr.ndim == 0
    zarr = np.atleast_1d(zarr)
    if np.any(~(zarr > 0.0)):
        raise ValueError("z must be strictly positive")
    out = np.empty_like(zarr)

    if s == 1.0:
        out[:] = 1.0  # Gamma(1, z) = e^{-z}
        if scalar:
            return float(out[0])
        return out

    zswitch = max(1.0, s + 1.0)
    big = zarr >= zswitch
    if big.any():
        out[big] = _lentz_scaled(s, zarr[big], tol)
    small = ~big
    if small.any():
        zs = zarr[small]
        ez = np.exp(zs)
        if s > 0.5:
            val = ez * _series_gamma_unscaled(s, zs, tol)
        else:
            n_int = round(s)
            if abs(s - n_int) < 1e-12:
                # integer order: anchor at Gamma(0, z) = E1(z), walk down
                val = ez * _exp1_series(zs, tol)
                cur = 0.0
                steps = int(-n_int)
            else:
                nshift = max(0, math.ceil(-0.5 - s))
                sigma = s + nshift
                val = ez * _series_gamma_unscaled(sigma, zs, tol)
                cur = sigma
                steps = nshift
            for _ in range(steps):
                val = (val - np.exp((cur - 1.0) * np.log(zs))) / (cur - 1.0)
                cur -= 1.0
        out[small] = val
    if scalar:
        return float(out[0])
    return out


def upper_gamma_tail(s: float, z, tol: NumericTolerance | None = None):
    """Upper incomplete gamma Gamma(s, z) = int_z^inf e^{-t} t^{s-1} dt.

    Supports the non-positive and non-integer orders s = 1 - k needed by the
    averaged objectives (s <= 2).  For z beyond ~700 the unscaled value
    underflows double precision; use exp_scaled_upper_gamma there instead.
    """
    zarr = np.asarray(z, dtype=float)
    if np.any(~(zarr > 0.0)):
        raise ValueError("z must be strictly positive")
    return np.exp(-zarr) * exp_scaled_upper_gamma(s, z, tol)


def power_scaled_tail(k: float, z, tol: NumericTolerance | None = None):
    """z^k e^z Gamma(1 - k, z) for shape k > 0, vectorized, overflow-safe.

    This is the factor multiplying each relay's average branch SNR in the
    averaged objective; it lies in (0, 1), tending to 1 as z -> inf (no relay
    power) and to 0 as z -> 0.  For z >= 1 it equals z * H with H the Lentz
    continued-fraction value, which avoids forming z^k at all.
    """
    tol = tol or _DEFAULT_TOL
    k = float(k)
    if k <= 0.0:
        raise ValueError("shape k must be positive")
    zarr = np.asarray(z, dtype=float)
    scalar = zarr.ndim == 0
    zarr = np.atleast_1d(zarr)
    if np.any(~(zarr > 0.0)):
        raise ValueError("z must be strictly positive")
    out = np.empty_like(zarr)
    s = 1.0 - k

    huge = zarr > 1e12
    if huge.any():
        zz = zarr[huge]
        out[huge] = 1.0 - k / zz + k * (k + 1.0) / zz**2 - k * (k + 1.0) * (k + 2.0) / zz**3
    big = (zarr >= max(1.0, s + 1.0)) & ~huge
    if big.any():
        zz = zarr[big]
        # reuse the CF: e^z Gamma(s,z) = z^s H  =>  z^k e^z Gamma(1-k,z) = z * H
        v = _lentz_scaled(s, zz, tol)
        out[big] = zz * v / np.exp(s * np.log(zz))
    small = ~big & ~huge
    if small.any():
        zz = zarr[small]
        out[small] = np.exp(k * np.log(zz)) * exp_scaled_upper_gamma(s, zz, tol)
    if scalar:
        return float(out[0])
    return out


def power_scaled_tail_dz(k: float, z, g=None, tol: NumericTolerance | None = None):
    """d/dz of power_scaled_tail; pass g to reuse an existing evaluation.

    Identity: G'(z) = G(z) (k + z)/z - 1, with the asymptotic form used at
    very large z where the identity would cancel catastrophically.
    """
    zarr = np.asarray(z, dtype=float)
    scalar = zarr.ndim == 0
    zarr = np.atleast_1d(zarr)
    if g is None:
        g = power_scaled_tail(k, zarr, tol)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    out = g * (k + zarr) / zarr - 1.0
    huge = zarr > 1e8
    if huge.any():
        zz = zarr[huge]
        out[huge] = k / zz**2 - 2.0 * k * (k + 1.0) / zz**3 + 3.0 * k * (k + 1.0) * (k + 2.0) / zz**4
    if scalar:
        return float(out[0])
    return out


def scaled_gamma_term(k: float, z, tol: NumericTolerance | None = None):
    """(value, dvalue_dz) with value = e^z Gamma(1-k, z).

    The derivative follows from d Gamma(s,z)/dz = -z^{s-1} e^{-z}:
    dvalue/dz = value - z^{-k}.
    """
    k = float(k)
    if k <= 0.0:
        raise ValueError("shape k must be positive")
    zarr = np.asarray(z, dtype=float)
    if np.any(~(np.atleast_1d(zarr) > 0.0)):
        raise ValueError("z must be strictly positive")
    value = exp_scaled_upper_gamma(1.0 - k, z, tol)
    dvalue = value - np.exp(-k * np.log(zarr))
    if np.ndim(z) == 0:
        return float(value), float(dvalue)
    return value, dvalue


def exp1(x):
    """Exponential integral E1(x) = Gamma(0, x), x > 0 (scipy-backed)."""
    xarr = np.asarray(x, dtype=float)
    if np.any(~(np.atleast_1d(xarr) > 0.0)):
        raise ValueError("x must be strictly positive")
    out = _sp.exp1(xarr)
    if np.ndim(x) == 0:
        return float(out)
    return out


def exp_scaled_exp1(x):
    """e^x E1(x), safe for large x (switches to the continued fraction)."""
    xarr = np.asarray(x, dtype=float)
    scalar = xarr.ndim == 0
    xarr = np.atleast_1d(xarr)
    if np.any(~(xarr > 0.0)):
        raise ValueError("x must be strictly positive")
    out = np.empty_like(xarr)
    safe = xarr <= 600.0
    if safe.any():
        out[safe] = np.exp(xarr[safe]) * _sp.exp1(xarr[safe])
    if (~safe).any():
        out[~safe] = _lentz_scaled(0.0, xarr[~safe], _DEFAULT_TOL)
    if scalar:
        return float(out[0])
    return out


def q_function(x):
    """Gaussian tail probability Q(x) = 0.5 * erfc(x / sqrt(2))."""
    out = 0.5 * _sp.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    if np.ndim(x) == 0:
        return float(out)
    return out
