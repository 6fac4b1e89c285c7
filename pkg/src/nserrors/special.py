"""Log-space regularized lower incomplete gamma function and its inverse.

Prior volumes inside a radius of a spherical Gaussian prior are chi-square
CDF values, which reach ``exp(-700)`` and below for high-dimensional
problems, so everything here works with ``log P(a, x)``.
"""

import numpy as np
from scipy import special

_SERIES_TERMS = 200
# below this, gammainc loses relative precision or underflows
_TINY = 1e-280
_LOGX_SUBNORMAL = -700.0


def _log_series(a, u):
    """log P(a, e^u) from the power series, valid for any x but used for small P."""
    x = np.exp(u)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _SERIES_TERMS):
        term = term * x / (a + k)
        total = total + term
        if np.all(term < 1e-17 * total):
            break
    return a * u - x - special.gammaln(a + 1.0) + np.log(total)


def log_gammainc_logx(a, u):
    """Return ``log P(a, e^u)`` for log-arguments ``u``.

    Accurate in both tails: uses ``log1p(-Q)`` when P is close to one and a
    log-space power series when P underflows.
    """
    a = float(a)
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    x = np.exp(u)
    with np.errstate(divide="ignore"):
        p = special.gammainc(a, x)
        q = special.gammaincc(a, x)
        upper = p > 0.5
        out[upper] = np.log1p(-q[upper])
        low = ~upper & ((p < _TINY) | (u < _LOGX_SUBNORMAL))
        mid = ~upper & ~low
        out[mid] = np.log(p[mid])
        if np.any(low):
            ul = u[low]
            res = np.full_like(ul, -np.inf)
            fin = np.isfinite(ul)
            res[fin] = _log_series(a, ul[fin])
            out[low] = res
    return out


def log_gammainc(a, x):
    """Return ``log P(a, x)``, the log regularized lower incomplete gamma."""
    with np.errstate(divide="ignore"):
        return log_gammainc_logx(a, np.log(np.asarray(x, dtype=float)))


def _dlogp_du(a, u, logp):
    # d log P / d log x = x * x^(a-1) e^-x / Gamma(a) / P
    return np.exp(a * u - np.exp(u) - special.gammaln(a) - logp)


def log_gammaincinv(a, logp, rtol=1e-13, maxiter=200):
    """Invert ``log_gammainc``: solve ``log P(a, x) = logp`` for ``x``.

    ``logp == 0`` maps to ``inf``; positive ``logp`` raises.
    """
    return np.exp(log_gammaincinv_logx(a, logp, rtol=rtol, maxiter=maxiter))


def log_gammaincinv_logx(a, logp, rtol=1e-13, maxiter=200):
    """Solve ``log P(a, e^u) = logp`` for ``u``.

    Newton steps on ``u = log x``, kept inside a bisection bracket. Since
    ``log P`` is concave in ``u`` the iteration converges monotonically
    after the first step.

    Parameters
    ----------
    a : float
        Shape parameter, ``a > 0``.
    logp : array_like
        Target log probabilities, all ``<= 0``.
    rtol : float
        Relative tolerance on ``x``.

    Returns
    -------
    numpy.ndarray
        ``log x`` with the same shape as ``logp``.
    """
    a = float(a)
    logp = np.asarray(logp, dtype=float)
    if np.any(logp > 0) or np.any(np.isnan(logp)):
        raise ValueError("log probability must be <= 0")
    shape = logp.shape
    target = logp.ravel()
    out = np.full(target.shape, np.inf)
    pending = target < 0
    out[np.isneginf(target)] = -np.inf
    pending &= ~np.isneginf(target)
    if not np.any(pending):
        return out.reshape(shape)

    t = target[pending]
    # small-x asymptote log P ~ a log x - log Gamma(a + 1)
    u_small = (t + special.gammaln(a + 1.0)) / a
    # Wilson-Hilferty for the bulk, in terms of the chi-square with 2a dof
    z = special.ndtri(np.exp(np.minimum(t, -1e-300)))
    k = 2.0 * a
    wh = k * (1.0 - 2.0 / (9.0 * k) + z * np.sqrt(2.0 / (9.0 * k))) ** 3 / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u_wh = np.where(wh > 0, np.log(np.maximum(wh, 1e-300)), u_small)
    u = np.where(t > -5.0, u_wh, np.minimum(u_small, u_wh))

    lo = np.full(t.shape, -np.inf)
    hi = np.full(t.shape, np.inf)
    active = np.ones(t.shape, dtype=bool)
    for _ in range(maxiter):
        ua = u[active]
        lp = log_gammainc_logx(a, ua)
        f = lp - t[active]
        below = f < 0
        lo_a = np.where(below, np.maximum(lo[active], ua), lo[active])
        hi_a = np.where(below, hi[active], np.minimum(hi[active], ua))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            step = -f / _dlogp_du(a, ua, lp)
        tol = rtol * np.maximum(1.0, np.abs(ua))
        done = (f == 0) | (np.abs(step) <= tol)
        new = ua + np.where(np.isfinite(step), step, 0.0)
        outside = ~done & (~np.isfinite(step) | (new <= lo_a) | (new >= hi_a))
        finite = np.isfinite(lo_a) & np.isfinite(hi_a)
        with np.errstate(invalid="ignore"):
            fallback = np.where(finite, 0.5 * (lo_a + hi_a), np.where(below, ua + 2.0, ua - 2.0))
        new = np.where(outside, fallback, new)
        done |= finite & (hi_a - lo_a <= tol)
        lo[active], hi[active] = lo_a, hi_a
        u[active] = new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not np.any(active):
            break
    else:
        raise RuntimeError("inverse incomplete gamma did not converge")
    out[pending] = u
    return out.reshape(shape)
