import numpy as np
import pytest

from hetcache.content import PlacementMatrix
from hetcache.network import MBS, GeometryParams
from hetcache.objective import LocalUtility, associate, average_delay, delay_file, local_utilities, per_mu_delays
from hetcache.rng import substream


def _params(delta=0.1, mbs_rate=None):
    return GeometryParams(delta=delta, bandwidth=1e7, file_size=1e9, mbs_rate=mbs_rate)


def test_associate_empty_candidates_falls_back():
    placement = PlacementMatrix(assignment=np.array([0, 1]), n_groups=2)
    caps = np.array([[5e6, 7e6]])
    assert associate(0, 0, placement, caps, np.array([], dtype=int)) == MBS


def test_associate_prefers_higher_capacity():
    placement = PlacementMatrix(assignment=np.array([1, 1]), n_groups=2)
    caps = np.array([[5e6, 7e6]])
    assert associate(0, 1, placement, caps, np.array([0, 1])) == 1


def test_associate_no_cacher_falls_back():
    placement = PlacementMatrix(assignment=np.array([0, 0]), n_groups=2)
    caps = np.array([[5e6, 7e6]])
    assert associate(0, 1, placement, caps, np.array([0, 1])) == MBS


def test_associate_tie_breaks_low_index():
    placement = PlacementMatrix(assignment=np.array([1, 1, 1]), n_groups=2)
    caps = np.array([[7e6, 7e6, 5e6]])
    assert associate(0, 1, placement, caps, np.array([0, 1, 2])) == 0


def test_associate_matches_exhaustive_scan():
    rng = substream(11, 0)
    for _ in range(50):
        n_sbs, n_groups = 6, 3
        placement = PlacementMatrix(assignment=rng.integers(0, n_groups, n_sbs), n_groups=n_groups)
        caps = rng.uniform(2e6, 5e7, (1, n_sbs))
        cand = np.flatnonzero(rng.random(n_sbs) < 0.7)
        n = int(rng.integers(0, n_groups))
        got = associate(0, n, placement, caps, cand)
        # oracle: literal scan over the candidate list
        best, best_rate = MBS, 0.0
        for h in cand:
            rate = caps[0, h] if placement.assignment[h] == n else 0.0
            if rate > best_rate:
                best, best_rate = int(h), rate
        assert got == best


def test_delay_file_values():
    params = _params(mbs_rate=1.3e6)
    placement = PlacementMatrix(assignment=np.array([0]), n_groups=2)
    caps = np.array([[1e7]])
    # no candidate caches group 1 -> macro rate
    assert delay_file(0, 1, placement, caps, np.array([0]), params) == pytest.approx(769.23, abs=0.005)
    # sole cacher at 1e7 bit/s
    assert delay_file(0, 0, placement, caps, np.array([0]), params) == pytest.approx(100.0, rel=1e-12)


def test_average_delay_all_mbs():
    params = _params(mbs_rate=1.3e6)
    placement = PlacementMatrix(assignment=np.array([0, 0]), n_groups=3)
    caps = np.array([[2e6, 3e6], [4e6, 5e6]])
    candidates = [np.array([], dtype=int), np.array([], dtype=int)]
    mean, per_mu = average_delay(placement, caps, candidates, np.array([0.2, 0.5, 0.3]), params)
    assert mean == pytest.approx(1e9 / 1.3e6, rel=1e-12)
    np.testing.assert_allclose(per_mu, mean)


def test_average_delay_weighted_sum():
    params = _params(mbs_rate=1.3e6)
    placement = PlacementMatrix(assignment=np.array([0]), n_groups=2)
    caps = np.array([[1e7]])
    candidates = [np.array([0])]
    mean, _ = average_delay(placement, caps, candidates, np.array([0.7, 0.3]), params)
    assert mean == pytest.approx(0.7 * 100.0 + 0.3 * 1e9 / 1.3e6, rel=1e-9)
    assert mean == pytest.approx(300.77, abs=0.005)


def test_average_delay_permutation_invariant():
    rng = substream(11, 1)
    params = _params()
    caps = rng.uniform(2e6, 5e7, (5, 4))
    candidates = [np.flatnonzero(rng.random(4) < 0.8) for _ in range(5)]
    placement = PlacementMatrix(assignment=rng.integers(0, 3, 4), n_groups=3)
    probs = np.array([0.5, 0.3, 0.2])
    mean, _ = average_delay(placement, caps, candidates, probs, params)
    perm = rng.permutation(5)
    mean_p, _ = average_delay(placement, caps[perm], [candidates[j] for j in perm], probs, params)
    assert mean_p == pytest.approx(mean, rel=1e-14)


def test_average_delay_rejects_no_mus():
    params = _params()
    placement = PlacementMatrix(assignment=np.array([0]), n_groups=1)
    with pytest.raises(ValueError):
        average_delay(placement, np.zeros((0, 1)), [], np.array([1.0]), params)


def test_delay_bounds_and_monotonicity():
    rng = substream(11, 2)
    params = _params()
    mbs_delay = params.file_size / params.mbs_rate
    for trial in range(20):
        caps = rng.uniform(params.mbs_rate, 5e7, (3, 5))
        candidates = [np.flatnonzero(rng.random(5) < 0.7) for _ in range(3)]
        probs = np.array([0.4, 0.35, 0.25])
        assignment = rng.integers(0, 3, 5)
        placement = PlacementMatrix(assignment=assignment, n_groups=3)
        mean, _ = average_delay(placement, caps, candidates, probs, params)
        best = caps.max()
        assert params.file_size / best <= mean <= mbs_delay + 1e-9
        # giving any SBS a (weakly) better group for one MU never helps FPRC...
        # re-assigning one SBS to the group an MU wants can only reduce that
        # MU's delay within the max in the per-group rate; checked globally:
        # duplicating the placement on an extra SBS never increases the mean.
        for k in range(5):
            for g in range(3):
                trial_assignment = assignment.copy()
                trial_assignment[k] = g
                other = PlacementMatrix(assignment=trial_assignment, n_groups=3)
                # adding a cached copy = comparing against a placement where
                # SBS k previously cached nothing useful; emulate by dropping
                # k from every candidate list
                dropped = [c[c != k] for c in candidates]
                base, _ = average_delay(other, caps, dropped, probs, params)
                withk, _ = average_delay(other, caps, candidates, probs, params)
                assert withk <= base + 1e-12


def test_utility_is_negated_delay():
    from hetcache.objective import utility

    rng = substream(11, 3)
    params = _params()
    caps = rng.uniform(2e6, 5e7, (2, 3))
    candidates = [np.array([0, 1, 2]), np.array([1])]
    probs = np.array([0.6, 0.4])
    placement = PlacementMatrix(assignment=np.array([0, 1, 0]), n_groups=2)
    mean, _ = average_delay(placement, caps, candidates, probs, params)
    assert utility(placement, caps, candidates, probs, params) == -mean


def test_local_utility_matches_per_mu_delay():
    rng = substream(11, 4)
    params = _params()
    probs = np.array([0.5, 0.3, 0.2])
    caps = rng.uniform(params.mbs_rate, 5e7, (4, 6))
    candidates = [np.flatnonzero(rng.random(6) < 0.6) for _ in range(4)]
    utils = local_utilities(caps, candidates, probs, params)
    for trial in range(30):
        assignment = rng.integers(0, 3, 6)
        placement = PlacementMatrix(assignment=assignment, n_groups=3)
        expected = per_mu_delays(placement, caps, candidates, probs, params)
        for j, util in enumerate(utils):
            if util is None:
                assert candidates[j].size == 0
                assert expected[j] == pytest.approx(params.file_size / params.mbs_rate)
            else:
                got = util.delays(assignment[candidates[j]][None, :])[0]
                assert got == pytest.approx(expected[j], rel=1e-12)
                assert util.utilities(assignment[candidates[j]][None, :])[0] == pytest.approx(-expected[j], rel=1e-12)


def test_local_utility_batch_rows():
    params = _params()
    probs = np.array([0.7, 0.3])
    util = LocalUtility(np.array([2e6, 3e6]), probs, params.file_size, params.mbs_rate)
    rows = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    delays = util.delays(rows)
    mbs = params.file_size / params.mbs_rate
    # group cached by both SBSs: the faster one (3e6) serves it
    assert delays[0] == pytest.approx(0.7 * 1e9 / 3e6 + 0.3 * mbs, rel=1e-12)
    assert delays[3] == pytest.approx(0.3 * 1e9 / 3e6 + 0.7 * mbs, rel=1e-12)
    assert delays[1] == pytest.approx(0.7 * 1e9 / 2e6 + 0.3 * 1e9 / 3e6, rel=1e-12)
    assert delays[2] == pytest.approx(0.7 * 1e9 / 3e6 + 0.3 * 1e9 / 2e6, rel=1e-12)
