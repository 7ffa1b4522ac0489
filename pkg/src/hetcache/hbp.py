"""Reduced-overhead variant of the BP optimizer: MUs send sampled group
indices instead of probability vectors, SBSs broadcast tally vectors, and
every transmission is logged for communication-cost accounting."""

import math
from dataclasses import dataclass

import numpy as np

from .bp import CommLedger, FactorGraph, LOG_FLOOR, argmax_popular, build_kernels, default_temperature, index_bits
from .content import PlacementMatrix
from .rng import substream

_INIT_STREAM = 0


@dataclass
class HbpState:
    """Tally vectors and the previously sampled index per edge.

    counts[k, n] is how many neighboring MUs last told SBS k to cache group n
    (drawn from the popularity prior before any exchange); counts[k] always
    sums to the degree of k.  last_sent is None before the first MU round.
    """

    counts: np.ndarray
    last_sent: np.ndarray | None
    iteration: int
    prior_fallbacks: int = 0


def hbp_init(graph: FactorGraph, group_probs: np.ndarray, rng: np.random.Generator) -> HbpState:
    """Seed each SBS tally with degree-many draws from the popularity prior."""
    group_probs = np.asarray(group_probs, dtype=float)
    n = group_probs.size
    counts = np.zeros((graph.n_variables, n), dtype=np.int64)
    for k in range(graph.n_variables):
        deg = graph.edges_of_var[k].size
        if deg:
            draws = rng.choice(n, size=deg, p=group_probs)
            counts[k] = np.bincount(draws, minlength=n)
    return HbpState(counts=counts, last_sent=None, iteration=1)


def _incoming_probs(counts_k: np.ndarray, degree: int, last_idx, group_probs: np.ndarray, state: HbpState) -> np.ndarray:
    """SBS-to-MU probabilities inferred from a broadcast tally.

    The MU's own previously sent index is removed from the tally so only
    uncorrelated information flows back.  Before the first MU round there is
    nothing to remove; for a degree-1 SBS the removal would empty the tally,
    so the popularity prior is returned instead (and flagged).
    """
    if last_idx is None:
        return counts_k / degree
    if degree < 2:
        state.prior_fallbacks += 1
        return group_probs.copy()
    probs = counts_k.astype(float)
    probs[last_idx] -= 1.0
    return probs / (degree - 1.0)


def hbp_excluded_prob(state: HbpState, graph: FactorGraph, group_probs: np.ndarray, k: int, j: int, n: int) -> float:
    """Probability that SBS k caches group n, as seen by MU j after removing
    j's own last message from the broadcast tally."""
    fac = int(np.flatnonzero(graph.factor_mu_ids == j)[0])
    edges = graph.edges_of_fac[fac]
    edge = int(edges[np.flatnonzero(graph.var_of_edge[edges] == k)[0]])
    last = None if state.last_sent is None else int(state.last_sent[edge])
    vec = _incoming_probs(
        state.counts[k], graph.edges_of_var[k].size, last, np.asarray(group_probs, float), state
    )
    return float(vec[n])


def hbp_factor_step(
    state: HbpState,
    graph: FactorGraph,
    kernels,
    group_probs: np.ndarray,
    seed: int,
    stream_key: tuple = (),
) -> np.ndarray:
    """One MU round: rebuild incoming beliefs from the tallies, marginalize
    exactly as the full BP factor update, then sample one group index per
    outgoing edge.

    Sampling uses a fresh substream per (iteration, MU), so results do not
    depend on evaluation order.
    """
    group_probs = np.asarray(group_probs, dtype=float)
    choices = np.empty(graph.n_edges, dtype=np.int64)
    for fac, edges in enumerate(graph.edges_of_fac):
        log_in = np.empty((edges.size, group_probs.size))
        for i, e in enumerate(edges):
            k = graph.var_of_edge[e]
            last = None if state.last_sent is None else int(state.last_sent[e])
            probs = _incoming_probs(
                state.counts[k], graph.edges_of_var[k].size, last, group_probs, state
            )
            log_in[i] = np.maximum(np.log(np.maximum(probs, 0.0) + 1e-300), LOG_FLOOR)
        out_probs = np.exp(kernels[fac].marginals(log_in))
        out_probs /= out_probs.sum(axis=1, keepdims=True)
        mu_id = int(graph.factor_mu_ids[fac])
        rng = substream(seed, *stream_key, state.iteration, mu_id + 1)
        draws = rng.random(edges.size)
        for i, e in enumerate(edges):
            idx = np.searchsorted(np.cumsum(out_probs[i]), draws[i])
            choices[e] = min(int(idx), group_probs.size - 1)
    return choices


@dataclass
class HbpResult:
    placement: PlacementMatrix
    iterations: int
    stabilized: bool
    ledger: CommLedger
    counts: np.ndarray


def hbp_run(
    graph: FactorGraph,
    utilities,
    group_probs: np.ndarray,
    seed: int,
    max_iters: int = 15,
    temperature: float | None = None,
    stream_key: tuple = (),
    enum_cap: float = 1e7,
) -> HbpResult:
    """Run the index-message optimizer for up to `max_iters` rounds.

    Each round: every SBS broadcasts its N-entry tally, every MU samples and
    returns one index per neighboring SBS.  The run stops early once the
    tallies are unchanged for two consecutive rounds; each SBS then caches
    the group with the highest tally (ties toward the more popular group).
    """
    group_probs = np.asarray(group_probs, dtype=float)
    n = group_probs.size
    if temperature is None:
        temperature = default_temperature(utilities)
    kernels = build_kernels(graph, utilities, temperature, enum_cap)
    state = hbp_init(graph, group_probs, substream(seed, *stream_key, _INIT_STREAM))
    ledger = CommLedger(index_bits=index_bits(n))
    ints_per_round = graph.n_variables * n + graph.n_edges

    stabilized = False
    streak = 0
    iterations = 1
    for t in range(1, max_iters + 1):
        state.iteration = t
        if t > 1:
            new_counts = np.zeros_like(state.counts)
            for k in range(graph.n_variables):
                edges = graph.edges_of_var[k]
                if edges.size:
                    new_counts[k] = np.bincount(state.last_sent[edges], minlength=n)
            streak = streak + 1 if np.array_equal(new_counts, state.counts) else 0
            state.counts = new_counts
            iterations = t
            if streak >= 2:
                stabilized = True
                break
        ledger.add(t, ints_per_round, 0)
        state.last_sent = hbp_factor_step(state, graph, kernels, group_probs, seed, stream_key)
        iterations = t

    assignment = np.array(
        [argmax_popular(state.counts[k].astype(float), group_probs) for k in range(graph.n_variables)],
        dtype=np.int64,
    )
    placement = PlacementMatrix(assignment=assignment, n_groups=n)
    return HbpResult(placement, iterations, stabilized, ledger, state.counts)
