"""Black-Scholes reference pricing: exact call/put prices, Greeks, implied volatility.

Ground truth for dataset generation and for auditing any surrogate pricer.
Functions accept scalars or numpy arrays and broadcast; implied_vol is scalar.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# Below this sigma*sqrt(T) the price degenerates to the intrinsic limit (avoids 0/0 in d1).
VOL_TIME_FLOOR = 1e-10


class NoSolutionError(ValueError):
    """Target price lies outside the attainable no-arbitrage range."""


def norm_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def norm_pdf(x):
    """Standard normal density."""
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def norm_cdf_inv(p):
    """Inverse standard normal CDF; requires 0 < p < 1."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("norm_cdf_inv requires 0 < p < 1")
    return ndtri(p)


def _check_domain(S, K, T, sigma):
    if np.any(np.asarray(S) <= 0.0) or np.any(np.asarray(K) <= 0.0):
        raise ValueError("spot and strike must be positive")
    if np.any(np.asarray(T) <= 0.0):
        raise ValueError("maturity must be positive")
    if np.any(np.asarray(sigma) <= 0.0):
        raise ValueError("volatility must be positive")


def call_bounds(S, K, T, r, q):
    """No-arbitrage bounds on a European call: (max(F_q - K_r, 0), F_q)."""
    lo = np.maximum(S * np.exp(-q * T) - K * np.exp(-r * T), 0.0)
    hi = S * np.exp(-q * T)
    return lo, hi


def _d1_d2(S, K, T, r, q, sigma):
    vol_t = np.maximum(sigma * np.sqrt(T), VOL_TIME_FLOOR)
    d1 = (np.log(S / K) + (r - q) * T) / vol_t + 0.5 * vol_t
    return d1, d1 - vol_t, vol_t


def bs_call(S, K, T, r, q, sigma):
    """European call price with continuous dividend yield q.

    For sigma*sqrt(T) below VOL_TIME_FLOOR returns the intrinsic limit
    max(S e^{-qT} - K e^{-rT}, 0) exactly.
    """
    _check_domain(S, K, T, sigma)
    S, K, T, r, q, sigma = np.broadcast_arrays(
        *[np.asarray(v, dtype=float) for v in (S, K, T, r, q, sigma)]
    )
    disc_q = np.exp(-q * T)
    disc_r = np.exp(-r * T)
    d1, d2, _ = _d1_d2(S, K, T, r, q, sigma)
    price = S * disc_q * ndtr(d1) - K * disc_r * ndtr(d2)
    intrinsic = np.maximum(S * disc_q - K * disc_r, 0.0)
    out = np.where(sigma * np.sqrt(T) < VOL_TIME_FLOOR, intrinsic, price)
    return float(out) if out.ndim == 0 else out


def bs_put(S, K, T, r, q, sigma):
    """European put price with continuous dividend yield q."""
    _check_domain(S, K, T, sigma)
    S, K, T, r, q, sigma = np.broadcast_arrays(
        *[np.asarray(v, dtype=float) for v in (S, K, T, r, q, sigma)]
    )
    disc_q = np.exp(-q * T)
    disc_r = np.exp(-r * T)
    d1, d2, _ = _d1_d2(S, K, T, r, q, sigma)
    price = K * disc_r * ndtr(-d2) - S * disc_q * ndtr(-d1)
    intrinsic = np.maximum(K * disc_r - S * disc_q, 0.0)
    out = np.where(sigma * np.sqrt(T) < VOL_TIME_FLOOR, intrinsic, price)
    return float(out) if out.ndim == 0 else out


def bs_greeks(S, K, T, r, q, sigma):
    """Analytic call sensitivities: vega, dCdT, dCdK, d2CdK2.

    dCdT is the derivative with respect to time-to-maturity (r, q fixed),
    i.e. the calendar direction used by the no-arbitrage conditions.
    """
    _check_domain(S, K, T, sigma)
    S, K, T, r, q, sigma = np.broadcast_arrays(
        *[np.asarray(v, dtype=float) for v in (S, K, T, r, q, sigma)]
    )
    disc_q = np.exp(-q * T)
    disc_r = np.exp(-r * T)
    d1, d2, vol_t = _d1_d2(S, K, T, r, q, sigma)
    sqrt_t = np.sqrt(T)
    phi_d1 = norm_pdf(d1)
    vega = S * disc_q * phi_d1 * sqrt_t
    dCdT = (
        S * disc_q * phi_d1 * sigma / (2.0 * sqrt_t)
        + r * K * disc_r * ndtr(d2)
        - q * S * disc_q * ndtr(d1)
    )
    dCdK = -disc_r * ndtr(d2)
    d2CdK2 = disc_r * norm_pdf(d2) / (K * vol_t)
    if d1.ndim == 0:
        return {
            "vega": float(vega),
            "dCdT": float(dCdT),
            "dCdK": float(dCdK),
            "d2CdK2": float(d2CdK2),
        }
    return {"vega": vega, "dCdT": dCdT, "dCdK": dCdK, "d2CdK2": d2CdK2}


def implied_vol(S, K, T, r, q, C_target, tol=1e-10, max_iter=200):
    """Volatility solving bs_call(S,K,T,r,q,sigma) = C_target.

    Brackets the root and polishes with Newton steps guarded by bisection,
    so convergence inside the bracket is guaranteed. Falls back to pure
    bisection wherever vega is too small for a stable Newton step.

    Raises NoSolutionError when C_target is outside the open no-arbitrage
    interval (max(S e^{-qT} - K e^{-rT}, 0), S e^{-qT}).
    """
    S, K, T, r, q, C_target = (float(v) for v in (S, K, T, r, q, C_target))
    _check_domain(S, K, T, 1.0)
    lo_bound, hi_bound = call_bounds(S, K, T, r, q)
    if not (lo_bound < C_target < hi_bound):
        raise NoSolutionError(
            f"target {C_target} outside call bounds ({lo_bound}, {hi_bound})"
        )

    sig_lo, sig_hi = 1e-9, 1.0
    while bs_call(S, K, T, r, q, sig_hi) < C_target:
        sig_hi *= 2.0
        if sig_hi > 1e6:  # price saturates at hi_bound long before this
            raise NoSolutionError("failed to bracket implied volatility")
    if bs_call(S, K, T, r, q, sig_lo) >= C_target:
        return sig_lo

    sigma = 0.5 * (sig_lo + sig_hi)
    for _ in range(max_iter):
        diff = bs_call(S, K, T, r, q, sigma) - C_target
        if abs(diff) <= tol:
            return sigma
        if diff > 0.0:
            sig_hi = sigma
        else:
            sig_lo = sigma
        vega = bs_greeks(S, K, T, r, q, sigma)["vega"]
        if vega > 1e-12:
            candidate = sigma - diff / vega
            if sig_lo < candidate < sig_hi:
                sigma = candidate
                continue
        sigma = 0.5 * (sig_lo + sig_hi)
    return sigma
