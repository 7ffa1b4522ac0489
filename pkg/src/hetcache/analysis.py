"""Closed-form and quadrature results for networks with Poisson-distributed
nodes: factor-graph degree averages, outage upper bounds for random caching,
and the special functions they need."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericError

_SERIES_MAX_TERMS = 100_000
_SERIES_RTOL = 1e-14


def beta_reflection(alpha: float) -> float:
    """Beta(2/alpha, 1 - 2/alpha) via the reflection identity pi / sin(2*pi/alpha).

    Exact for the complementary-argument pattern used throughout the
    interference integrals; diverges as alpha -> 2, hence the guard.
    """
    if alpha <= 2:
        raise ValueError("alpha must exceed 2 (integral diverges otherwise)")
    return math.pi / math.sin(2.0 * math.pi / alpha)


def hyp2f1(a: float, b: float, c: float, x: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; x) by power series.

    Arguments with x <= -0.25 are routed through the Euler transformation
    2F1(a,b;c;x) = (1-x)^-a 2F1(a, c-b; c; x/(x-1)) so the series argument
    stays in [0, 0.5) and converges geometrically (x = -1 would otherwise
    converge only conditionally).  Terms are accumulated with the ratio
    recurrence and summation stops once the increment drops below
    1e-14 * |sum|.
    """
    if c <= 0 and c == int(c):
        raise ValueError("c must not be a non-positive integer")
    if x <= -0.25:
        return (1.0 - x) ** (-a) * hyp2f1(a, c - b, c, x / (x - 1.0))
    if abs(x) >= 1:
        raise ValueError("series requires |x| < 1 after transformation")
    total = 1.0
    term = 1.0
    for n in range(_SERIES_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * x
        total += term
        if abs(term) < _SERIES_RTOL * abs(total):
            return total
    raise NumericError(
        f"2F1({a}, {b}; {c}; {x}) did not converge in {_SERIES_MAX_TERMS} terms"
    )


def cross_group_coeff(delta: float, alpha: float) -> float:
    """Interference scale of SBSs caching a *different* group than the one requested:
    (2/alpha) * delta^(2/alpha) * Beta(2/alpha, 1 - 2/alpha)."""
    return 2.0 / alpha * delta ** (2.0 / alpha) * beta_reflection(alpha)


def same_group_coeff(delta: float, alpha: float) -> float:
    """Interference scale of farther SBSs caching the *same* group as the server:
    (2*delta/(alpha-2)) * 2F1(1, 1-2/alpha; 2-2/alpha; -delta)."""
    return 2.0 * delta / (alpha - 2.0) * hyp2f1(1.0, 1.0 - 2.0 / alpha, 2.0 - 2.0 / alpha, -delta)


def coverage_radial_integral(
    lambda_b: float, power: float, alpha: float, delta: float, sigma2: float
) -> float:
    """Radial integral of the per-pair coverage probability over the plane:

        integral_0^inf exp(-(2*pi*lambda_b/alpha) * delta^(2/alpha) * B * r^2
                           - (delta*sigma2/power) * r^alpha) * r dr

    Evaluated by adaptive quadrature after substituting u = r^2, truncated
    where the integrand falls below 1e-16 of its peak, to a relative error
    target of 1e-9.
    """
    if lambda_b <= 0:
        raise ValueError("lambda_b must be positive")
    a = 2.0 * math.pi * lambda_b / alpha * delta ** (2.0 / alpha) * beta_reflection(alpha)
    b = delta * sigma2 / power
    # In u = r^2 the integrand exp(-a*u - b*u^(alpha/2))/2 peaks at u = 0;
    # both exponent terms are nonnegative, so the smaller cutoff suffices.
    cutoff = 16.0 * math.log(10.0)
    upper = cutoff / a
    if b > 0:
        upper = min(upper, (cutoff / b) ** (2.0 / alpha))
    half_alpha = alpha / 2.0
    value, err = quad(
        lambda u: 0.5 * math.exp(-a * u - b * u**half_alpha),
        0.0,
        upper,
        epsabs=0.0,
        epsrel=1e-9,
        limit=200,
    )
    if not math.isfinite(value) or (value > 0 and err / value > 1e-8):
        raise NumericError(
            f"coverage integral quadrature failed (value={value}, err={err})"
        )
    return value


def coverage_radial_integral_noiseless(lambda_b: float, alpha: float, delta: float) -> float:
    """Noise-free closed form of the coverage radial integral:
    alpha / (4*pi*lambda_b * Beta(2/alpha, 1-2/alpha) * delta^(2/alpha))."""
    if lambda_b <= 0:
        raise ValueError("lambda_b must be positive")
    return alpha / (4.0 * math.pi * lambda_b * beta_reflection(alpha) * delta ** (2.0 / alpha))


@dataclass(frozen=True)
class DegreeAverages:
    """Average factor-graph degrees under Poisson node placement.

    `factor` / `variable` use the full quadrature (noise included);
    the `_noiseless` pair uses the interference-limited closed forms.
    """

    factor: float
    variable: float
    factor_noiseless: float
    variable_noiseless: float


def average_degrees(params) -> DegreeAverages:
    """Average MU-side (factor) and SBS-side (variable) degrees of the
    SINR-threshold graph for the given intensities."""
    p = np.asarray(params.power, dtype=float)
    power = float(p) if p.ndim == 0 else float(p.mean())
    z = coverage_radial_integral(
        params.lambda_b, power, params.alpha, params.delta, params.sigma2
    )
    factor = 2.0 * math.pi * params.lambda_b * z
    variable = 2.0 * math.pi * params.lambda_u * z
    factor_nf = params.alpha / (
        2.0 * params.delta ** (2.0 / params.alpha) * beta_reflection(params.alpha)
    )
    variable_nf = params.lambda_u / params.lambda_b * factor_nf
    return DegreeAverages(factor, variable, factor_nf, variable_nf)


def outage_bound(omega: float, delta: float, alpha: float) -> float:
    """Upper bound on the probability that no candidate SBS caches a group
    held by a fraction `omega` of all SBSs (noise neglected)."""
    if not (0.0 <= omega <= 1.0):
        raise ValueError("omega must lie in [0, 1]")
    c = cross_group_coeff(delta, alpha)
    a = same_group_coeff(delta, alpha)
    mixed = c * (1.0 - omega) + a * omega
    return mixed / (mixed + omega)


def avg_outage_bound(omega: np.ndarray, group_probs: np.ndarray, delta: float, alpha: float) -> float:
    """Popularity-weighted outage upper bound across all file groups."""
    omega = np.asarray(omega, dtype=float)
    group_probs = np.asarray(group_probs, dtype=float)
    if omega.shape != group_probs.shape:
        raise ValueError("omega and group_probs must have matching shapes")
    return float(
        sum(p * outage_bound(w, delta, alpha) for p, w in zip(group_probs, omega))
    )


def avg_delay_composed(outage: float, mean_sbs_delay: float, params) -> float:
    """Average download delay given the outage probability and the mean
    delay of successful small-cell downloads."""
    mbs_delay = params.file_size / params.mbs_rate
    return (1.0 - outage) * mean_sbs_delay + outage * mbs_delay


@dataclass(frozen=True)
class AnalyticModel:
    """Bundle of closed-form quantities for one parameter point."""

    delta: float
    alpha: float
    lambda_b: float
    lambda_u: float
    power: float
    sigma2: float
    beta_val: float
    cross_coeff: float
    same_coeff: float
    factor_degree: float
    variable_degree: float
    factor_degree_noiseless: float
    variable_degree_noiseless: float
    group_bounds: np.ndarray
    avg_bound: float


def build_analytic_model(params, group_probs: np.ndarray, omega: np.ndarray) -> AnalyticModel:
    """Evaluate every analytic quantity for one geometry and caching profile."""
    degrees = average_degrees(params)
    bounds = np.array([outage_bound(w, params.delta, params.alpha) for w in omega])
    p = np.asarray(params.power, dtype=float)
    return AnalyticModel(
        delta=params.delta,
        alpha=params.alpha,
        lambda_b=params.lambda_b,
        lambda_u=params.lambda_u,
        power=float(p) if p.ndim == 0 else float(p.mean()),
        sigma2=params.sigma2,
        beta_val=beta_reflection(params.alpha),
        cross_coeff=cross_group_coeff(params.delta, params.alpha),
        same_coeff=same_group_coeff(params.delta, params.alpha),
        factor_degree=degrees.factor,
        variable_degree=degrees.variable,
        factor_degree_noiseless=degrees.factor_noiseless,
        variable_degree_noiseless=degrees.variable_noiseless,
        group_bounds=bounds,
        avg_bound=float(np.dot(np.asarray(group_probs, dtype=float), bounds)),
    )
