"""Download-delay objective: MU-SBS association, per-file and network-average
delay, and the per-MU utilities the message-passing optimizers maximize."""

import numpy as np

from .network import MBS


def associate(j: int, n: int, placement, capacities: np.ndarray, candidates_j: np.ndarray) -> int:
    """Serving SBS for MU j requesting group n: the highest-capacity candidate
    caching the group, or the macro cell when no candidate caches it.

    Ties break toward the lowest SBS index.
    """
    candidates_j = np.asarray(candidates_j)
    if candidates_j.size == 0:
        return MBS
    caching = candidates_j[placement.assignment[candidates_j] == n]
    if caching.size == 0:
        return MBS
    rates = capacities[j, caching]
    return int(caching[np.argmax(rates)])


def delay_file(j: int, n: int, placement, capacities: np.ndarray, candidates_j: np.ndarray, params) -> float:
    """Seconds to download one group-n file at MU j under the given placement."""
    server = associate(j, n, placement, capacities, candidates_j)
    if server == MBS:
        return params.file_size / params.mbs_rate
    rate = capacities[j, server]
    # SBS-first rate cap guarantees any serving SBS beats the macro cell.
    assert rate >= params.mbs_rate * (1 - 1e-12)
    return params.file_size / rate


def per_mu_delays(placement, capacities: np.ndarray, candidates, group_probs: np.ndarray, params) -> np.ndarray:
    """Popularity-weighted expected delay of each MU."""
    n_mu = capacities.shape[0]
    out = np.empty(n_mu)
    for j in range(n_mu):
        out[j] = sum(
            p * delay_file(j, n, placement, capacities, candidates[j], params)
            for n, p in enumerate(group_probs)
        )
    return out


def average_delay(placement, capacities: np.ndarray, candidates, group_probs: np.ndarray, params):
    """Network-average download delay and the per-MU delay vector."""
    if capacities.shape[0] == 0:
        raise ValueError("average delay undefined with no MUs")
    delays = per_mu_delays(placement, capacities, candidates, group_probs, params)
    return float(delays.mean()), delays


def utility(placement, capacities, candidates, group_probs, params) -> float:
    """Global utility: the negated average delay (maximized by the optimizers)."""
    mean_delay, _ = average_delay(placement, capacities, candidates, group_probs, params)
    return -mean_delay


class LocalUtility:
    """Delay-based utility of one MU as a function of its candidates' cached groups.

    Evaluates batches of joint assignments (rows of group indices, one column
    per candidate SBS) in O(rows * d^2) independent of the group count: with
    candidates sorted by capacity, a candidate determines its group's delay
    exactly when no faster candidate chose the same group.
    """

    def __init__(self, candidate_caps: np.ndarray, group_probs: np.ndarray, file_size: float, mbs_rate: float):
        caps = np.asarray(candidate_caps, dtype=float)
        order = np.argsort(-caps, kind="stable")
        self.order = order
        self.sorted_caps = caps[order]
        self.group_probs = np.asarray(group_probs, dtype=float)
        self.n_groups = self.group_probs.size
        self.mbs_delay = file_size / mbs_rate
        # Delay improvement over the macro fallback contributed by each
        # candidate, before popularity weighting.
        self.gain = file_size / self.sorted_caps - self.mbs_delay

    @property
    def degree(self) -> int:
        return self.sorted_caps.size

    def delays(self, assignments: np.ndarray) -> np.ndarray:
        """Expected delay for each row of candidate-group assignments."""
        rows = np.atleast_2d(np.asarray(assignments))
        cols = rows[:, self.order]
        total = np.full(rows.shape[0], self.mbs_delay)
        for i in range(cols.shape[1]):
            fresh = np.ones(rows.shape[0], dtype=bool)
            for prev in range(i):
                fresh &= cols[:, prev] != cols[:, i]
            total += fresh * self.group_probs[cols[:, i]] * self.gain[i]
        return total

    def utilities(self, assignments: np.ndarray) -> np.ndarray:
        """Negated delays; what the factor node of this MU maximizes."""
        return -self.delays(assignments)


def local_utilities(capacities: np.ndarray, candidates, group_probs: np.ndarray, params):
    """LocalUtility per MU (None for MUs with no candidates: their delay is
    placement-independent, so they contribute nothing to optimize)."""
    out = []
    for j, cand in enumerate(candidates):
        if len(cand) == 0:
            out.append(None)
        else:
            out.append(
                LocalUtility(capacities[j, cand], group_probs, params.file_size, params.mbs_rate)
            )
    return out
