"""Non-BP placement schemes: popularity-proportional and outage-optimized
random caching, plus exhaustive search over all placements."""

import math

import numpy as np

from .analysis import cross_group_coeff, same_group_coeff
from .content import PlacementMatrix
from .errors import NumericError, ResourceLimitError
from .objective import LocalUtility


def largest_remainder_quotas(omega: np.ndarray, total: int) -> np.ndarray:
    """Integer quotas proportional to omega that sum exactly to `total`."""
    omega = np.asarray(omega, dtype=float)
    raw = omega * total
    base = np.floor(raw).astype(np.int64)
    deficit = total - int(base.sum())
    if deficit:
        remainders = raw - base
        top = np.lexsort((np.arange(omega.size), -remainders))[:deficit]
        base[top] += 1
    return base


def random_caching(omega: np.ndarray, n_sbs: int, rng: np.random.Generator) -> PlacementMatrix:
    """Assign each SBS one group so group n is cached by ~omega[n] * K SBSs.

    Quotas are rounded by largest remainder and filled over a random
    permutation of the SBSs, so every row stays one-hot.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0) or abs(omega.sum() - 1.0) > 1e-9:
        raise ValueError("omega must be a probability vector")
    quotas = largest_remainder_quotas(omega, n_sbs)
    assignment = np.repeat(np.arange(omega.size), quotas)
    assignment = assignment[rng.permutation(n_sbs)]
    return PlacementMatrix(assignment=assignment, n_groups=omega.size)


def popularity_fractions(popularity) -> np.ndarray:
    """Caching fractions equal to the group request probabilities (the
    popularity-proportional scheme)."""
    probs = getattr(popularity, "group_probs", popularity)
    return np.array(probs, dtype=float)


def _bound_complement(omega, p, c, beta):
    # Popularity-weighted non-outage mass; maximizing it minimizes the
    # average outage bound.
    return float(np.sum(p * omega / (omega * beta + c)))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / np.arange(1, v.size + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _numeric_fractions(p, c, beta, max_iters=200_000, tol=1e-13):
    """Projected-gradient maximizer of the non-outage mass on the simplex.

    Independent check of the closed-form allocation; plain ascent with a
    1/L step, stopped on a sup-norm fixed point.
    """
    lipschitz = 2.0 * beta * p.max() / c**2
    step = 1.0 / lipschitz
    omega = np.full(p.size, 1.0 / p.size)
    for _ in range(max_iters):
        grad = p * c / (omega * beta + c) ** 2
        new = project_simplex(omega + step * grad)
        if np.abs(new - omega).max() < tol:
            return new
        omega = new
    raise NumericError("projected-gradient fraction optimizer did not converge")


def optimal_fractions(popularity, delta: float, alpha: float, validate: bool = True, validate_tol: float = 1e-6) -> np.ndarray:
    """Caching fractions minimizing the average outage upper bound.

    Water-filling form: active groups get (sqrt(P_n/xi) - C) / (A - C + 1)
    with the multiplier xi fixed by the sum-to-one constraint; groups too
    unpopular to justify any cache copies get zero.  When `validate` is on,
    the result is cross-checked against a projected-gradient numeric
    maximizer and a disagreement beyond `validate_tol` raises NumericError.
    """
    p = popularity_fractions(popularity)
    if p.size == 1:
        return np.array([1.0])
    c = cross_group_coeff(delta, alpha)
    a = same_group_coeff(delta, alpha)
    beta = a - c + 1.0
    if beta <= 0:
        raise NumericError(f"degenerate bound coefficients (A - C + 1 = {beta:g})")

    order = np.argsort(-p, kind="stable")
    sorted_p = p[order]
    roots = np.sqrt(sorted_p)
    omega_sorted = None
    for active in range(p.size, 0, -1):
        sqrt_xi = roots[:active].sum() / (active * c + beta)
        candidate = (roots[:active] / sqrt_xi - c) / beta
        if candidate[-1] >= 0:
            omega_sorted = np.zeros(p.size)
            omega_sorted[:active] = candidate
            break
    if omega_sorted is None:
        raise NumericError("water-filling found no feasible active set")
    omega = np.empty(p.size)
    omega[order] = omega_sorted

    if validate:
        reference = _numeric_fractions(p, c, beta)
        gap = np.abs(omega - reference).max()
        if gap > validate_tol:
            raise NumericError(
                "closed-form caching fractions disagree with the numeric "
                f"optimizer by {gap:.3e} (tolerance {validate_tol:g}); "
                f"closed-form objective {_bound_complement(omega, p, c, beta):.12f}, "
                f"numeric objective {_bound_complement(reference, p, c, beta):.12f}"
            )
    return omega


def exhaustive_search(
    capacities: np.ndarray,
    candidates,
    group_probs: np.ndarray,
    params,
    cap: float = 1e7,
):
    """Enumerate every placement and return (best PlacementMatrix, its delay).

    Guarded: N^K joint placements must not exceed `cap`.  Ties go to the
    first placement in enumeration order, i.e. the lexicographically
    smallest assignment vector.
    """
    group_probs = np.asarray(group_probs, dtype=float)
    n_mu, n_sbs = capacities.shape
    if n_mu == 0:
        raise ValueError("exhaustive search needs at least one MU")
    n = group_probs.size
    total = n**n_sbs
    if total > cap:
        raise ResourceLimitError(
            f"exhaustive search over {n}^{n_sbs} placements exceeds the cap {cap:g}"
        )

    utils = []
    mbs_delay = params.file_size / params.mbs_rate
    for j in range(n_mu):
        cand = np.asarray(candidates[j])
        if cand.size:
            utils.append(
                (cand, LocalUtility(capacities[j, cand], group_probs, params.file_size, params.mbs_rate))
            )
    radix = np.array([n ** (n_sbs - 1 - i) for i in range(n_sbs)], dtype=np.int64)

    best_delay = math.inf
    best_index = -1
    chunk = max(1, min(total, 1 << 16))
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        idx = np.arange(lo, hi, dtype=np.int64)
        assignments = (idx[:, None] // radix[None, :]) % n
        delay = np.full(idx.size, n_mu * mbs_delay)
        for cand, util in utils:
            delay += util.delays(assignments[:, cand]) - mbs_delay
        pos = int(np.argmin(delay))
        if delay[pos] < best_delay:
            best_delay = float(delay[pos])
            best_index = lo + pos
    best_assignment = (best_index // radix) % n
    placement = PlacementMatrix(assignment=best_assignment, n_groups=n)
    return placement, best_delay / n_mu
