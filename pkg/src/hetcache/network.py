"""Network realizations: node sampling, Rayleigh fading, SINR, capacity,
and SINR-threshold candidate sets."""

import math
from dataclasses import dataclass, field

import numpy as np

MBS = -1  # sentinel serving index: download from the macro-cell at `mbs_rate`


@dataclass(frozen=True)
class GeometryParams:
    """Physical-layer and intensity parameters.

    Units: distances km, intensities nodes/km^2, powers watt, rates bit/s.
    `power` may be a scalar (uniform SBS power) or a length-K vector.
    `mbs_rate` defaults to the largest rate the macro cell may offer under
    the SBS-first constraint, bandwidth * log2(1 + delta).
    """

    lambda_b: float = 50.0
    lambda_u: float = 100.0
    power: float | np.ndarray = 2.0
    alpha: float = 4.0
    sigma2: float = 1e-10
    delta: float = 0.1
    bandwidth: float = 1e7
    file_size: float = 1e9
    mbs_rate: float | None = None

    def __post_init__(self):
        if self.alpha <= 2:
            raise ValueError("path-loss exponent alpha must exceed 2")
        if self.delta <= 0:
            raise ValueError("SINR threshold delta must be positive")
        if self.sigma2 < 0:
            raise ValueError("noise power must be nonnegative")
        if np.any(np.asarray(self.power) <= 0):
            raise ValueError("transmit power must be positive")
        cap = self.bandwidth * math.log2(1.0 + self.delta)
        if self.mbs_rate is None:
            object.__setattr__(self, "mbs_rate", cap)
        elif self.mbs_rate > cap * (1 + 1e-12):
            raise ValueError(
                f"mbs_rate {self.mbs_rate:g} exceeds the SBS-first cap {cap:g}"
            )

    def power_vector(self, n_sbs: int) -> np.ndarray:
        p = np.asarray(self.power, dtype=float)
        if p.ndim == 0:
            return np.full(n_sbs, float(p))
        if p.shape != (n_sbs,):
            raise ValueError(f"power vector has shape {p.shape}, expected ({n_sbs},)")
        return p


@dataclass(frozen=True)
class Region:
    """Square simulation window; `wrap` switches to toroidal distance."""

    side: float
    wrap: bool = False

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("region side must be positive")


def sample_ppp(intensity: float, region: Region, rng: np.random.Generator) -> np.ndarray:
    """Sample a homogeneous Poisson point process on the region.

    Returns an (n, 2) array of positions; n is Poisson(intensity * area).
    """
    if intensity < 0:
        raise ValueError("intensity must be nonnegative")
    n = rng.poisson(intensity * region.side**2)
    return rng.uniform(0.0, region.side, size=(n, 2))


def sample_fading(n_mu: int, n_sbs: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. unit-mean exponential fading powers (Rayleigh amplitudes squared)."""
    if n_mu < 1 or n_sbs < 1:
        raise ValueError("fading matrix needs at least one node on each side")
    return rng.standard_exponential(size=(n_mu, n_sbs))


def pairwise_distances(a_xy: np.ndarray, b_xy: np.ndarray, region: Region) -> np.ndarray:
    """Distance matrix between row points of `a_xy` and `b_xy` under the region metric."""
    diff = np.abs(a_xy[:, None, :] - b_xy[None, :, :])
    if region.wrap:
        diff = np.minimum(diff, region.side - diff)
    return np.sqrt((diff**2).sum(axis=2))


@dataclass(frozen=True)
class Topology:
    """One network realization: positions, fading powers, pairwise distances.

    `fading` and `distances` are (J, K) matrices indexed [mu, sbs].
    Immutable after construction; all operations on it are pure functions.
    """

    sbs_xy: np.ndarray
    mu_xy: np.ndarray
    fading: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        j, k = self.mu_xy.shape[0], self.sbs_xy.shape[0]
        if self.fading.shape != (j, k) or self.distances.shape != (j, k):
            raise ValueError("fading/distance matrices inconsistent with node counts")
        if np.any(self.fading <= 0):
            raise ValueError("fading powers must be positive")
        if np.any(self.distances <= 0):
            raise ValueError("distances must be positive (co-located nodes)")
        for arr in (self.sbs_xy, self.mu_xy, self.fading, self.distances):
            arr.flags.writeable = False

    @property
    def n_sbs(self) -> int:
        return self.sbs_xy.shape[0]

    @property
    def n_mu(self) -> int:
        return self.mu_xy.shape[0]


def build_topology(
    sbs_xy: np.ndarray,
    mu_xy: np.ndarray,
    region: Region,
    rng: np.random.Generator,
) -> Topology:
    """Assemble a Topology, drawing fresh fading for every MU-SBS pair."""
    sbs_xy = np.asarray(sbs_xy, dtype=float)
    mu_xy = np.asarray(mu_xy, dtype=float)
    return Topology(
        sbs_xy=sbs_xy,
        mu_xy=mu_xy,
        fading=sample_fading(mu_xy.shape[0], sbs_xy.shape[0], rng),
        distances=pairwise_distances(mu_xy, sbs_xy, region),
    )


def received_power_matrix(topo: Topology, params: GeometryParams) -> np.ndarray:
    """(J, K) matrix of fading * distance^-alpha * power, the SINR building block."""
    p = params.power_vector(topo.n_sbs)
    return topo.fading * topo.distances ** (-params.alpha) * p[None, :]


def sinr_matrix(topo: Topology, params: GeometryParams) -> np.ndarray:
    """SINR of every MU-SBS pair; all other SBSs interfere with the serving one."""
    if topo.n_mu == 0 or topo.n_sbs == 0:
        raise ValueError("SINR undefined on an empty topology")
    rx = received_power_matrix(topo, params)
    total = rx.sum(axis=1, keepdims=True)
    return rx / (total - rx + params.sigma2)


def sinr(k: int, j: int, topo: Topology, params: GeometryParams) -> float:
    """SINR at MU j when served by SBS k."""
    if not (0 <= k < topo.n_sbs) or not (0 <= j < topo.n_mu):
        raise IndexError(f"pair (k={k}, j={j}) out of range")
    rx = received_power_matrix(topo, params)[j]
    interference = rx.sum() - rx[k]
    return rx[k] / (interference + params.sigma2)


def capacity_from_sinr(value, params: GeometryParams):
    """Shannon rate bandwidth * log2(1 + SINR), in bit/s."""
    return params.bandwidth * np.log2(1.0 + value)


def capacity(k: int, j: int, topo: Topology, params: GeometryParams) -> float:
    """Downlink capacity of the (SBS k, MU j) channel."""
    return float(capacity_from_sinr(sinr(k, j, topo, params), params))


def capacity_matrix(topo: Topology, params: GeometryParams) -> np.ndarray:
    """(J, K) matrix of downlink capacities."""
    return capacity_from_sinr(sinr_matrix(topo, params), params)


def candidate_sets(topo: Topology, params: GeometryParams):
    """SBSs clearing the SINR threshold for each MU, and the transpose sets.

    Returns (mu_candidates, sbs_candidates): index arrays per MU and per SBS.
    Empty sets are legal; such an MU can only download from the macro cell.
    """
    ok = sinr_matrix(topo, params) >= params.delta
    mu_candidates = [np.flatnonzero(row) for row in ok]
    sbs_candidates = [np.flatnonzero(col) for col in ok.T]
    return mu_candidates, sbs_candidates
