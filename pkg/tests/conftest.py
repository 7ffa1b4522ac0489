import numpy as np
import pytest

from hetcache import bp, content, network, objective
from hetcache.rng import substream


@pytest.fixture
def small_instance():
    """Deterministic 8-SBS / 4-MU instance with its graph and utilities."""
    return build_instance(seed=42)


def build_instance(seed, n_sbs=8, n_mu=4, side=0.6, delta=0.1, num_files=100, files_per_cache=25):
    rng = substream(seed, 0)
    region = network.Region(side=side, wrap=False)
    params = network.GeometryParams(delta=delta, power=2.0)
    pm = content.PopularityModel.from_zipf(num_files, files_per_cache, 0.5)
    topo = network.build_topology(
        rng.uniform(0, side, (n_sbs, 2)), rng.uniform(0, side, (n_mu, 2)), region, rng
    )
    caps = network.capacity_matrix(topo, params)
    candidates, sbs_candidates = network.candidate_sets(topo, params)
    graph = bp.FactorGraph.from_candidates(candidates, n_sbs)
    utilities = objective.local_utilities(caps, candidates, pm.group_probs, params)
    return dict(
        rng=rng, region=region, params=params, popularity=pm, topo=topo,
        caps=caps, candidates=candidates, sbs_candidates=sbs_candidates,
        graph=graph, utilities=utilities,
    )
