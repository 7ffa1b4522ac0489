import itertools
import math

import numpy as np
import pytest

from hetcache.baselines import exhaustive_search
from hetcache.bp import (
    BeliefState,
    FactorGraph,
    FactorKernel,
    argmax_popular,
    build_kernels,
    decide,
    factor_update,
    index_bits,
    init_messages,
    run_bp,
    variable_update,
)
from hetcache.content import PlacementMatrix
from hetcache.errors import ResourceLimitError
from hetcache.network import GeometryParams
from hetcache.objective import LocalUtility, average_delay, local_utilities
from hetcache.rng import substream
from conftest import build_instance


def _graph_from(mu_candidates, n_sbs):
    return FactorGraph.from_candidates(mu_candidates, n_sbs)


def test_graph_construction_filters_empty_factors():
    graph = _graph_from([np.array([0, 2]), np.array([], dtype=int), np.array([1])], 3)
    assert graph.n_factors == 2
    assert graph.factor_mu_ids.tolist() == [0, 2]
    assert graph.n_edges == 3
    graph.validate()
    np.testing.assert_array_equal(graph.variable_degrees(), [1, 1, 1])


def test_init_messages_uniform_and_zipf():
    graph = _graph_from([np.array([0, 1])], 2)
    state = init_messages(graph, np.full(4, 0.25), temperature=1.0)
    np.testing.assert_allclose(np.exp(state.log_v2f), 0.25, rtol=1e-12)
    assert state.iteration == 1

    from hetcache.content import PopularityModel

    pm = PopularityModel.from_zipf(100, 5, 0.5)
    state = init_messages(graph, pm.group_probs, temperature=1.0)
    probs = np.exp(state.log_v2f)
    assert probs[0, 0] == pytest.approx(0.1738, abs=5e-5)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_variable_update_empty_product_is_uniform():
    # a degree-1 variable gets the empty product back on its only edge
    graph = _graph_from([np.array([0])], 1)
    state = init_messages(graph, np.array([0.9, 0.1]), temperature=1.0)
    out = variable_update(state, graph)
    np.testing.assert_allclose(np.exp(out), 0.5, rtol=1e-12)


def test_variable_update_products():
    # variable 0 hears from two factors; message to each excludes that factor
    graph = _graph_from([np.array([0]), np.array([0])], 1)
    state = init_messages(graph, np.array([0.5, 0.5]), temperature=1.0)
    state.log_f2v = np.log(np.array([[0.8, 0.2], [0.5, 0.5]]))
    out = np.exp(variable_update(state, graph))
    np.testing.assert_allclose(out[0], [0.5, 0.5], rtol=1e-12)  # excludes itself
    np.testing.assert_allclose(out[1], [0.8, 0.2], rtol=1e-12)
    # all-uniform input stays uniform
    state.log_f2v = np.full((2, 2), math.log(0.5))
    np.testing.assert_allclose(np.exp(variable_update(state, graph)), 0.5, rtol=1e-12)


def test_variable_update_three_factor_product():
    graph = _graph_from([np.array([0]), np.array([0]), np.array([0])], 1)
    state = init_messages(graph, np.array([0.5, 0.5]), temperature=1.0)
    incoming = np.array([[0.8, 0.2], [0.6, 0.4], [0.3, 0.7]])
    state.log_f2v = np.log(incoming)
    out = np.exp(variable_update(state, graph))
    expected = incoming[1] * incoming[2]
    np.testing.assert_allclose(out[0], expected / expected.sum(), rtol=1e-10)


def _single_factor_setup(caps, probs, temperature):
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    util = LocalUtility(np.asarray(caps, dtype=float), np.asarray(probs, dtype=float), params.file_size, params.mbs_rate)
    return util


def test_factor_update_single_neighbor_closed_form():
    # with one neighbor there is nothing to marginalize: message ~ exp(t*F)
    probs = np.array([0.7, 0.3])
    util = _single_factor_setup([1e7], probs, None)
    temperature = 5e-3
    graph = _graph_from([np.array([0])], 1)
    state = init_messages(graph, probs, temperature)
    kernels = build_kernels(graph, [util], temperature)
    out = np.exp(factor_update(state, graph, kernels))[0]
    expected = np.exp(temperature * util.utilities(np.array([[0], [1]])).ravel())
    expected /= expected.sum()
    np.testing.assert_allclose(out, expected, rtol=1e-9)
    assert out[0] > out[1]  # caching the popular group wins


def test_factor_update_constant_utility_is_uniform():
    # one candidate, uniform popularity: the delay does not depend on the
    # cached group, so the outgoing message is uniform
    probs = np.array([0.25, 0.25, 0.25, 0.25])
    util = _single_factor_setup([1e7], probs, None)
    graph = _graph_from([np.array([0])], 1)
    state = init_messages(graph, probs, 1e-2)
    kernels = build_kernels(graph, [util], 1e-2)
    out = np.exp(factor_update(state, graph, kernels))[0]
    np.testing.assert_allclose(out, 0.25, rtol=1e-10)


def test_factor_update_matches_hand_marginalization():
    # N=2, two neighbors: enumerate the 2x2 joint by hand
    probs = np.array([0.6, 0.4])
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    caps = np.array([2e6, 8e6])
    util = LocalUtility(caps, probs, params.file_size, params.mbs_rate)
    temperature = 3e-3
    graph = _graph_from([np.array([0, 1])], 2)
    state = init_messages(graph, probs, temperature)
    incoming = np.array([[0.55, 0.45], [0.2, 0.8]])
    state.log_v2f = np.log(incoming)
    kernels = build_kernels(graph, [util], temperature)
    out = np.exp(factor_update(state, graph, kernels))

    mbs_delay = params.file_size / params.mbs_rate

    def delay(a0, a1):
        groups = {}
        for idx, g in ((0, a0), (1, a1)):
            groups.setdefault(g, []).append(caps[idx])
        total = 0.0
        for g, prob in enumerate(probs):
            rate = max(groups.get(g, [0.0]))
            total += prob * (params.file_size / rate if rate else mbs_delay)
        return total

    for i, k in enumerate([0, 1]):
        other = 1 - k
        expected = np.zeros(2)
        for mine in (0, 1):
            for theirs in (0, 1):
                joint = [None, None]
                joint[k], joint[other] = mine, theirs
                expected[mine] += incoming[other, theirs] * math.exp(
                    -temperature * delay(joint[0], joint[1])
                )
        expected /= expected.sum()
        np.testing.assert_allclose(out[i], expected, rtol=1e-9)


def test_factor_kernel_matches_bruteforce_random():
    rng = substream(33, 0)
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    for trial in range(10):
        d, n = 3, 3
        caps = rng.uniform(params.mbs_rate, 5e7, d)
        raw = rng.random(n)
        probs = raw / raw.sum()
        util = LocalUtility(caps, probs, params.file_size, params.mbs_rate)
        temperature = 10 ** rng.uniform(-3.5, -1.5)
        kernel = FactorKernel(util, temperature)
        incoming = rng.dirichlet(np.ones(n), size=d)
        out = np.exp(kernel.marginals(np.log(incoming)))
        # oracle: loop over every joint assignment
        expected = np.zeros((d, n))
        for joint in itertools.product(range(n), repeat=d):
            w = math.exp(temperature * util.utilities(np.array([joint]))[0])
            for i in range(d):
                partial = w
                for q in range(d):
                    if q != i:
                        partial *= incoming[q, joint[q]]
                expected[i, joint[i]] += partial
        expected /= expected.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(out, expected, rtol=1e-8)


def test_factor_kernel_enumeration_guard():
    probs = np.full(10, 0.1)
    util = _single_factor_setup([2e6] * 9, probs, None)
    with pytest.raises(ResourceLimitError):
        FactorKernel(util, 1e-3, enum_cap=1e6)  # 10^8 joint rows per message


def test_argmax_popular_tie_breaks():
    probs = np.array([0.5, 0.3, 0.2])
    assert argmax_popular(np.array([1.0, 2.0, 2.0]), probs) == 1
    assert argmax_popular(np.array([2.0, 2.0, 2.0]), probs) == 0
    assert argmax_popular(np.array([1.0, 1.0, 1.0]), np.array([0.2, 0.4, 0.4])) == 1


def test_run_bp_single_pair_caches_most_popular():
    probs = np.array([0.7, 0.3])
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    caps = np.array([[1e7]])
    candidates = [np.array([0])]
    utilities = local_utilities(caps, candidates, probs, params)
    graph = _graph_from(candidates, 1)
    result = run_bp(graph, utilities, probs)
    assert result.placement.assignment.tolist() == [0]
    assert result.converged


def test_run_bp_disconnected_keeps_prior():
    probs = np.array([0.2, 0.5, 0.3])
    graph = _graph_from([np.array([], dtype=int)], 4)
    result = run_bp(graph, [None], probs)
    assert result.placement.assignment.tolist() == [1, 1, 1, 1]
    assert result.iterations == 1


def test_run_bp_near_optimal_on_tiny_instances():
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    probs = np.array([0.65, 0.35])
    hits = 0
    total = 500
    for seed in range(total):
        rng = substream(1000 + seed, 0)
        caps = rng.uniform(params.mbs_rate, 5e7, (3, 3))
        candidates = [np.flatnonzero(rng.random(3) < 0.85) for _ in range(3)]
        utilities = local_utilities(caps, candidates, probs, params)
        graph = _graph_from(candidates, 3)
        result = run_bp(graph, utilities, probs)
        bp_delay, _ = average_delay(result.placement, caps, candidates, probs, params)
        _, best = exhaustive_search(caps, candidates, probs, params)
        if bp_delay <= best * 1.05 + 1e-9:
            hits += 1
    assert hits >= 0.95 * total


def test_messages_stay_normalized_through_iterations(small_instance):
    inst = small_instance
    graph, utilities, probs = inst["graph"], inst["utilities"], inst["popularity"].group_probs
    from hetcache.bp import default_temperature

    temperature = default_temperature(utilities)
    kernels = build_kernels(graph, utilities, temperature)
    state = init_messages(graph, probs, temperature)
    for t in range(1, 8):
        if t > 1:
            state.log_v2f = variable_update(state, graph)
            np.testing.assert_allclose(np.exp(state.log_v2f).sum(axis=1), 1.0, atol=1e-9)
        state.log_f2v = factor_update(state, graph, kernels)
        np.testing.assert_allclose(np.exp(state.log_f2v).sum(axis=1), 1.0, atol=1e-9)
    assert state.underflow_events == 0


def test_fixed_point_residual_after_convergence(small_instance):
    inst = small_instance
    graph, utilities, probs = inst["graph"], inst["utilities"], inst["popularity"].group_probs
    result = run_bp(graph, utilities, probs, max_iters=15, tol=1e-6)
    assert result.converged
    # one more full round moves no message entry by more than the tolerance
    state = result.state
    before = np.exp(state.log_v2f)
    new_state = BeliefState(
        log_v2f=state.log_v2f.copy(), log_f2v=state.log_f2v.copy(),
        iteration=state.iteration, temperature=state.temperature,
    )
    new_state.log_v2f = variable_update(new_state, graph)
    assert np.abs(np.exp(new_state.log_v2f) - before).max() < 1e-6


def test_permutation_equivariance():
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    probs = np.array([0.6, 0.4])
    rng = substream(55, 0)
    caps = rng.uniform(params.mbs_rate, 5e7, (3, 4))
    candidates = [np.flatnonzero(rng.random(4) < 0.8) for _ in range(3)]
    utilities = local_utilities(caps, candidates, probs, params)
    graph = _graph_from(candidates, 4)
    base = run_bp(graph, utilities, probs).placement.assignment

    perm = np.array([2, 0, 3, 1])  # new index of each old SBS
    caps_p = np.empty_like(caps)
    caps_p[:, perm] = caps
    candidates_p = [np.sort(perm[c]) for c in candidates]
    utilities_p = local_utilities(caps_p, candidates_p, probs, params)
    graph_p = _graph_from(candidates_p, 4)
    permuted = run_bp(graph_p, utilities_p, probs).placement.assignment
    np.testing.assert_array_equal(permuted[perm], base)


def test_sharper_temperature_approaches_utility_argmax():
    # single factor, single variable: the decision must converge to the
    # group maximizing the local utility as the temperature grows
    params = GeometryParams(delta=0.1, mbs_rate=1.3e6)
    probs = np.array([0.4, 0.35, 0.25])
    caps = np.array([[3e6]])
    candidates = [np.array([0])]
    utilities = local_utilities(caps, candidates, probs, params)
    graph = _graph_from(candidates, 1)
    util = utilities[0]
    best = int(np.argmax([util.utilities(np.array([[g]]))[0] for g in range(3)]))
    decisions = []
    for temperature in (1e-5, 1e-3, 1e-1):
        result = run_bp(graph, utilities, probs, temperature=temperature)
        decisions.append(result.placement.assignment[0])
    assert decisions[-1] == best


def test_run_bp_ledger_counts(small_instance):
    inst = small_instance
    graph, utilities, probs = inst["graph"], inst["utilities"], inst["popularity"].group_probs
    result = run_bp(graph, utilities, probs)
    n = probs.size
    per_round = 2 * n * graph.n_edges
    assert all(row.reals == per_round and row.integers == 0 for row in result.ledger.rows)
    assert len(result.ledger.rows) == result.iterations
    assert result.ledger.total_bits == per_round * result.iterations * 64
    assert index_bits(4) == 2 and index_bits(5) == 3 and index_bits(1) == 1


def test_decide_prior_for_isolated_variables():
    graph = _graph_from([np.array([1])], 3)
    probs = np.array([0.5, 0.3, 0.2])
    state = init_messages(graph, probs, 1.0)
    placement = decide(state, graph, probs)
    assert placement.assignment[0] == 0 and placement.assignment[2] == 0
