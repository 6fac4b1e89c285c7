"""Spherically symmetric likelihoods with a co-centred Gaussian prior.

Every problem here depends on the likelihood only through ``L(X)`` and on
the parameters only through the distribution of a component on a
hyperspherical shell, so a run never needs to materialise more than the
tracked components of ``theta``.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy import integrate, optimize, special

from .special import log_gammainc_logx, log_gammaincinv_logx

FAMILIES = ("gaussian", "cauchy", "constant")
ESTIMAND_KINDS = (
    "logz",
    "evidence",
    "param_mean",
    "param_second_moment",
    "param_cred_upper",
    "radial_mean",
)
PARAM_KINDS = ("param_mean", "param_second_moment", "param_cred_upper")


@dataclass(frozen=True)
class Problem:
    """An analytic likelihood family with a spherical Gaussian prior.

    The ``constant`` family has no true ordering of contours, so it is
    given a tiny slope in ``-log X`` (``const_slope``) which orders points
    radially while changing posterior weights by well under one part in
    ``10^4``.
    """

    family: str
    dim: int
    prior_sigma: float = 10.0
    tracked_components: int = 1
    const_logl: float = 0.0
    const_slope: float = 1e-6

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.prior_sigma > 0:
            raise ValueError("prior_sigma must be positive")
        if not 1 <= self.tracked_components <= self.dim:
            raise ValueError("tracked_components must be in [1, dim]")
        if self.family == "constant" and not self.const_slope > 0:
            raise ValueError("const_slope must be positive")

    @property
    def name(self):
        return f"{self.family}-{self.dim}d-sigma{self.prior_sigma:g}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Estimand:
    """A quantity computed from a run: evidence or a posterior summary."""

    kind: str
    component: int = 0
    q: float = None

    def __post_init__(self):
        if self.kind not in ESTIMAND_KINDS:
            raise ValueError(f"unknown estimand kind {self.kind!r}")
        if self.kind == "param_cred_upper":
            if self.q is None or not 0 < self.q < 1:
                raise ValueError("credible level q must lie in (0, 1)")
        if self.component < 0:
            raise ValueError("component must be non-negative")

    @property
    def label(self):
        name = self.kind.replace("_", "-")
        if self.kind == "param_cred_upper":
            name = f"{name}:{self.q:g}"
        if self.kind in PARAM_KINDS and self.component:
            name = f"{name}@{self.component}"
        return name

    @classmethod
    def parse(cls, text):
        """Parse labels such as ``param-mean``, ``param-cred-upper:0.84@1``."""
        text = text.strip()
        component = 0
        if "@" in text:
            text, comp = text.split("@", 1)
            component = int(comp)
        q = None
        if ":" in text:
            text, qs = text.split(":", 1)
            q = float(qs)
        kind = text.replace("-", "_").lower()
        if kind == "z":
            kind = "evidence"
        return cls(kind, component=component, q=q)


def _log_const(problem):
    d = problem.dim
    if problem.family == "gaussian":
        return -0.5 * d * math.log(2 * math.pi)
    if problem.family == "cauchy":
        return special.gammaln(0.5 * (d + 1)) - 0.5 * (d + 1) * math.log(math.pi)
    return problem.const_logl


def logl_at_radius(problem, r):
    """Log-likelihood at ``|theta| = r`` (strictly decreasing in ``r``)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    c = _log_const(problem)
    if problem.family == "gaussian":
        return c - 0.5 * r**2
    if problem.family == "cauchy":
        return c - 0.5 * (problem.dim + 1) * np.log1p(r**2)
    return c - problem.const_slope * logx_at_radius(problem, r)


def _logu_at_radius(problem, r):
    # log of the incomplete-gamma argument r^2 / (2 sigma^2)
    with np.errstate(divide="ignore"):
        return 2.0 * np.log(r) - math.log(2.0 * problem.prior_sigma**2)


def logx_at_radius(problem, r):
    """Log prior mass inside radius ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    return log_gammainc_logx(0.5 * problem.dim, _logu_at_radius(problem, r))


def radius_at_logx(problem, logx):
    """Radius enclosing prior mass ``exp(logx)``; ``logx = 0`` gives ``inf``."""
    logx = np.asarray(logx, dtype=float)
    if np.any(logx > 0):
        raise ValueError("log prior volume must be <= 0")
    u = log_gammaincinv_logx(0.5 * problem.dim, logx)
    return np.sqrt(2.0) * problem.prior_sigma * np.exp(0.5 * u)


def logl_at_logx(problem, logx):
    """Log-likelihood on the contour enclosing prior mass ``exp(logx)``.

    Goes through the incomplete-gamma argument directly so the radius is
    never squared back from a rounded square root.
    """
    logx = np.asarray(logx, dtype=float)
    if np.any(logx > 0):
        raise ValueError("log prior volume must be <= 0")
    c = _log_const(problem)
    if problem.family == "constant":
        return c - problem.const_slope * logx
    u = log_gammaincinv_logx(0.5 * problem.dim, logx)
    rsq = 2.0 * problem.prior_sigma**2 * np.exp(u)
    if problem.family == "gaussian":
        return c - 0.5 * rsq
    return c - 0.5 * (problem.dim + 1) * np.log1p(rsq)


def contour_at_logx(problem, logx):
    """``(logl, radius)`` of the contours at ``logx``, sharing one inversion."""
    logx = np.asarray(logx, dtype=float)
    if problem.family == "constant":
        return logl_at_logx(problem, logx), radius_at_logx(problem, logx)
    u = log_gammaincinv_logx(0.5 * problem.dim, logx)
    rsq = 2.0 * problem.prior_sigma**2 * np.exp(u)
    c = _log_const(problem)
    if problem.family == "gaussian":
        logl = c - 0.5 * rsq
    else:
        logl = c - 0.5 * (problem.dim + 1) * np.log1p(rsq)
    return logl, np.sqrt(rsq)


def radius_at_logl(problem, logl):
    """Invert ``logl_at_radius``."""
    logl = np.asarray(logl, dtype=float)
    c = _log_const(problem)
    with np.errstate(invalid="ignore"):
        if problem.family == "gaussian":
            rsq = -2.0 * (logl - c)
        elif problem.family == "cauchy":
            rsq = np.expm1(2.0 * (c - logl) / (problem.dim + 1))
        else:
            return radius_at_logx(problem, np.minimum((c - logl) / problem.const_slope, 0.0))
    return np.sqrt(np.maximum(rsq, 0.0))


def sample_contour_components(problem, r, count, rng):
    """Draw ``count`` values of theta_1 uniformly over the shell ``|theta| = r``.

    Uses ``theta_1^2 / r^2 ~ Beta(1/2, (d-1)/2)`` with a random sign; in one
    dimension the shell is the pair of points ``+-r``.
    """
    rng = np.random.default_rng(rng)
    r = float(r)
    if r < 0:
        raise ValueError("radius must be non-negative")
    sign = rng.choice([-1.0, 1.0], size=count)
    if problem.dim == 1:
        return sign * r
    frac = rng.beta(0.5, 0.5 * (problem.dim - 1), size=count)
    return sign * r * np.sqrt(frac)


def sample_params(problem, radii, rng):
    """Tracked components for one point on each shell; shape ``(N, k)``.

    One tracked component uses the Beta route. Several are drawn as the
    leading coordinates of a uniform direction: k normals scaled by the
    norm including a chi-square for the ``d - k`` untracked dimensions.
    """
    radii = np.asarray(radii, dtype=float)
    n = radii.shape[0]
    d, k = problem.dim, problem.tracked_components
    if k == 1:
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if d == 1:
            return (sign * radii)[:, None]
        frac = rng.beta(0.5, 0.5 * (d - 1), size=n)
        return (sign * radii * np.sqrt(frac))[:, None]
    z = rng.standard_normal((n, k))
    rest = rng.chisquare(d - k, size=n) if d > k else np.zeros(n)
    norm = np.sqrt(np.sum(z**2, axis=1) + rest)
    return z * (radii / norm)[:, None]


def conditional_pdf(problem, theta1, r):
    """Density of theta_1 on the shell of radius ``r`` (zero outside it)."""
    theta1 = np.asarray(theta1, dtype=float)
    if not r > 0:
        raise ValueError("radius must be positive")
    d = problem.dim
    if d == 1:
        raise ValueError("one-dimensional shells are discrete (theta_1 = +-r)")
    inside = np.abs(theta1) < r
    lognorm = special.gammaln(0.5 * d) - special.gammaln(0.5) - special.gammaln(0.5 * (d - 1)) - math.log(r)
    out = np.zeros_like(theta1)
    s = 1.0 - (theta1[inside] / r) ** 2
    out[inside] = np.exp(lognorm + 0.5 * (d - 3) * np.log(s))
    return out


def conditional_cdf(problem, theta1, r):
    """CDF of theta_1 on the shell of radius ``r``."""
    theta1 = np.asarray(theta1, dtype=float)
    r = np.asarray(r, dtype=float)
    if problem.dim == 1:
        return np.where(theta1 < -r, 0.0, np.where(theta1 < r, 0.5, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.clip((theta1 / r) ** 2, 0.0, 1.0)
    half = 0.5 * special.betainc(0.5, 0.5 * (problem.dim - 1), frac)
    out = np.where(theta1 >= 0, 0.5 + half, 0.5 - half)
    # zero-radius shell is a point mass at the origin
    return np.where(r > 0, out, np.where(theta1 >= 0, 1.0, 0.0))


def conditional_ppf(problem, quantile, r):
    """Quantile of theta_1 on the shell of radius ``r``."""
    quantile = np.asarray(quantile, dtype=float)
    r = np.asarray(r, dtype=float)
    if problem.dim == 1:
        return np.sign(quantile - 0.5) * r
    frac = special.betaincinv(0.5, 0.5 * (problem.dim - 1), np.abs(2.0 * quantile - 1.0))
    return np.sign(quantile - 0.5) * r * np.sqrt(frac)


def ftilde(problem, estimand, logx):
    """Prior mean of ``f(theta)`` over the contour enclosing ``exp(logx)``."""
    logx = np.asarray(logx, dtype=float)
    if estimand.kind == "param_mean":
        return np.zeros_like(logx)
    r = radius_at_logx(problem, logx)
    if estimand.kind == "param_second_moment":
        return r**2 / problem.dim
    if estimand.kind == "radial_mean":
        return r
    raise ValueError(f"no contour mean for estimand {estimand.label}")


def analytic_logz(problem):
    """Closed-form log-evidence (Gaussian and constant families)."""
    if problem.family == "gaussian":
        return -0.5 * problem.dim * math.log(2 * math.pi * (1 + problem.prior_sigma**2))
    if problem.family == "constant":
        # Z = e^c * int_0^1 X^-slope dX
        return problem.const_logl - math.log1p(-problem.const_slope)
    raise ValueError("no closed form log-evidence for the cauchy family")


def _log_radial_prior(problem, r):
    d, s = problem.dim, problem.prior_sigma
    with np.errstate(divide="ignore"):
        return (
            (d - 1) * np.log(r)
            - r**2 / (2 * s**2)
            - (0.5 * d - 1) * math.log(2.0)
            - special.gammaln(0.5 * d)
            - d * math.log(s)
        )


def _log_posterior_radial(problem, r):
    return logl_at_radius(problem, r) + _log_radial_prior(problem, r)


def _radial_grid(problem):
    """Peak location and an upper cut-off for radial integrals."""
    res = optimize.minimize_scalar(
        lambda lr: -_log_posterior_radial(problem, math.exp(lr)),
        bounds=(-10.0, math.log(50 * problem.prior_sigma * math.sqrt(problem.dim))),
        method="bounded",
    )
    peak = math.exp(res.x)
    top = problem.prior_sigma * (math.sqrt(problem.dim) + 12.0) + 2 * peak
    return peak, top


def _radial_integral(problem, func, ref, kinks=()):
    peak, top = _radial_grid(problem)
    pts = {peak * f for f in (0.1, 0.5, 1.0, 2.0, 5.0)} | {abs(k) for k in kinks}
    pts = sorted(p for p in pts if 0 < p < top)

    def integrand(r):
        if r <= 0:
            return 0.0
        return func(r) * math.exp(float(_log_posterior_radial(problem, r)) - ref)

    val, _ = integrate.quad(integrand, 0.0, top, points=pts, limit=500, epsabs=0, epsrel=1e-12)
    return val


def logz_by_quadrature(problem):
    """Log-evidence from adaptive quadrature of ``L(X)`` over ``X``.

    Integrates ``L(X) X`` in ``log X`` so the posterior bulk at tiny ``X``
    is resolved; independent of the closed forms in ``analytic_logz``.
    """
    peak, _ = _radial_grid(problem)
    lx_peak = float(logx_at_radius(problem, peak))
    lo = lx_peak - 60.0 - 3.0 * problem.dim
    ref = float(logl_at_logx(problem, lo))

    def integrand(lx):
        return math.exp(float(logl_at_logx(problem, lx)) + lx - ref)

    pieces = [lo, lx_peak - 10.0, lx_peak, min(lx_peak + 10.0, -1e-9), 0.0]
    pieces = sorted(set(min(p, 0.0) for p in pieces))
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, a, b, limit=500, epsabs=0, epsrel=1e-12)
        total += val
    return ref + math.log(total)


def true_value(problem, estimand):
    """Exact value of ``estimand`` by one-dimensional radial quadrature."""
    if estimand.kind == "logz":
        return logz_by_quadrature(problem)
    if estimand.kind == "evidence":
        return math.exp(logz_by_quadrature(problem))
    peak, _ = _radial_grid(problem)
    ref = float(_log_posterior_radial(problem, peak))
    norm = _radial_integral(problem, lambda r: 1.0, ref)
    if estimand.kind == "param_mean":
        return 0.0
    if estimand.kind == "param_second_moment":
        return _radial_integral(problem, lambda r: r**2 / problem.dim, ref) / norm
    if estimand.kind == "radial_mean":
        return _radial_integral(problem, lambda r: r, ref) / norm
    q = estimand.q

    def excess(t):
        mass = _radial_integral(
            problem, lambda r: float(conditional_cdf(problem, t, r)), ref, kinks=(t,)
        )
        return mass / norm - q

    if q == 0.5:
        return 0.0
    span = 3.0 * problem.prior_sigma
    while excess(span) * excess(-span) > 0:
        span *= 2.0
    return optimize.brentq(excess, -span, span, xtol=1e-12, rtol=1e-12)
