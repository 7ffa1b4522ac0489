"""Monte-Carlo experiment orchestration.

Two trial families:

* PPP trials (toroidal window): empirical factor-graph degrees, per-group
  and average outage of the random-caching schemes, optionally delays.
* Fixed-topology trials (plain Euclidean window): the message-passing
  optimizers against exhaustive search and the random-caching baselines,
  with iteration counts and communication ledgers.

Trials are independent, keyed by (master seed, trial id), and may run on a
worker pool; aggregation folds in trial-id order, so results never depend
on worker count or scheduling.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analysis, baselines, bp, hbp, network, objective
from .content import PlacementMatrix, PopularityModel
from .errors import ConfigError, TrialError
from .rng import substream

KNOWN_SCHEMES = ("bp", "hbp", "orc", "fprc", "exhaustive")
PPP_SCENARIOS = ("ppp-sweep",)
FIXED_SCENARIOS = ("fixed-topology", "scenario1", "scenario2-case1", "scenario2-case2", "large-scale")

_HBP_STREAM = 1
_PLACEMENT_STREAM = 2

SCENARIO_PRESETS = {
    "ppp-sweep": dict(
        side=10.0, wrap=True, delta=0.05, num_files=100, files_per_cache=5,
        schemes=("fprc", "orc"), mu_probe=1000,
    ),
    "scenario1": dict(
        side=0.6, wrap=False, sbs_count=8, mu_count=4, delta=0.1,
        num_files=100, files_per_cache=25,
        schemes=("exhaustive", "bp", "hbp", "orc", "fprc"),
    ),
    "scenario2-case1": dict(
        side=1.5, wrap=False, sbs_count=50, mu_count=25, delta=0.1,
        num_files=100, files_per_cache=20, schemes=("bp", "hbp", "orc", "fprc"),
    ),
    "scenario2-case2": dict(
        side=1.5, wrap=False, sbs_count=50, mu_count=25, delta=0.1,
        num_files=100, files_per_cache=10, schemes=("bp", "hbp", "orc", "fprc"),
    ),
    "large-scale": dict(
        side=5.0, wrap=False, sbs_count=50, mu_count=100, delta=0.2,
        num_files=1000, files_per_cache=20, schemes=("bp", "hbp", "orc", "fprc"),
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; every field doubles as a config-file key."""

    scenario: str = "scenario1"
    # geometry
    alpha: float = 4.0
    power: float = 2.0
    sigma2: float = 1e-10
    delta: float = 0.1
    bandwidth: float = 1e7
    file_size: float = 1e9
    mbs_rate: float | None = None
    lambda_b: float = 50.0
    lambda_u: float = 100.0
    side: float = 10.0
    wrap: bool = True
    sbs_count: int = 8
    mu_count: int = 4
    # content
    num_files: int = 100
    files_per_cache: int = 25
    zipf_s: float = 0.5
    # run control
    schemes: tuple = ("exhaustive", "bp", "hbp", "orc", "fprc")
    trials: int = 100
    seed: int | None = None
    max_iters: int = 15
    tol: float = 1e-6
    temperature: float | None = None
    mu_probe: int = 1000
    measure_delay: bool = True
    delta_grid: tuple | None = None
    power_grid: tuple | None = None
    enum_cap: float = 1e7
    exhaustive_cap: float = 1e7
    workers: int = 1
    output: str | None = None

    def validate(self):
        if self.scenario not in PPP_SCENARIOS + FIXED_SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed is None:
            raise ConfigError("a master seed is required")
        unknown = set(self.schemes) - set(KNOWN_SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes: {sorted(unknown)}")
        if self.num_files % self.files_per_cache != 0:
            raise ConfigError("num_files must be divisible by files_per_cache")
        if self.scenario in PPP_SCENARIOS and not set(self.schemes) <= {"fprc", "orc"}:
            raise ConfigError("PPP experiments support only the random-caching schemes")
        n_groups = self.num_files // self.files_per_cache
        if "exhaustive" in self.schemes:
            if self.scenario in PPP_SCENARIOS:
                raise ConfigError("exhaustive search needs a fixed topology")
            if n_groups**self.sbs_count > self.exhaustive_cap:
                raise ConfigError(
                    f"exhaustive search infeasible: {n_groups}^{self.sbs_count} "
                    f"placements exceeds cap {self.exhaustive_cap:g}"
                )
        for d in self.deltas():
            if d <= 0:
                raise ConfigError("SINR thresholds must be positive")
        try:
            self.geometry()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def deltas(self) -> tuple:
        return tuple(self.delta_grid) if self.delta_grid else (self.delta,)

    def powers(self) -> tuple:
        return tuple(self.power_grid) if self.power_grid else (self.power,)

    def geometry(self, delta: float | None = None, power: float | None = None) -> network.GeometryParams:
        return network.GeometryParams(
            lambda_b=self.lambda_b,
            lambda_u=self.lambda_u,
            power=self.power if power is None else power,
            alpha=self.alpha,
            sigma2=self.sigma2,
            delta=self.delta if delta is None else delta,
            bandwidth=self.bandwidth,
            file_size=self.file_size,
            mbs_rate=self.mbs_rate,
        )

    def popularity(self) -> PopularityModel:
        return PopularityModel.from_zipf(self.num_files, self.files_per_cache, self.zipf_s)

    def region(self) -> network.Region:
        return network.Region(side=self.side, wrap=self.wrap)


def make_config(scenario: str = "scenario1", **overrides) -> ExperimentConfig:
    """Build a config from a scenario preset plus explicit overrides."""
    if scenario not in SCENARIO_PRESETS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    merged = dict(SCENARIO_PRESETS[scenario])
    merged.update(overrides)
    return ExperimentConfig(scenario=scenario, **merged)


@dataclass(frozen=True, order=True)
class MetricKey:
    """Identifies one aggregated statistic."""

    scheme: str
    metric: str
    delta: float
    power: float
    s: float


@dataclass
class ExperimentResult:
    """Per-trial metric samples in trial order plus aggregate helpers."""

    config: ExperimentConfig
    n_trials: int
    samples: dict

    def keys(self):
        return sorted(self.samples)

    def values(self, key: MetricKey) -> np.ndarray:
        return self.samples[key]

    def mean(self, key: MetricKey) -> float:
        return float(self.samples[key].mean())

    def stderr(self, key: MetricKey) -> float:
        v = self.samples[key]
        if v.size < 2:
            return 0.0
        return float(v.std(ddof=1) / math.sqrt(v.size))

    def rows(self):
        """(key, mean, stderr, n) per metric, in deterministic order."""
        return [(k, self.mean(k), self.stderr(k), self.n_trials) for k in self.keys()]


def _scheme_fractions(config: ExperimentConfig, popularity: PopularityModel) -> dict:
    """Caching fraction vectors per (scheme, delta); the optimized scheme is
    validated against its numeric oracle once per configuration."""
    out = {}
    for d in config.deltas():
        for scheme in config.schemes:
            if scheme == "fprc":
                out[(scheme, d)] = baselines.popularity_fractions(popularity)
            elif scheme == "orc":
                out[(scheme, d)] = baselines.optimal_fractions(popularity, d, config.alpha)
    return out


def _unit_power_pair_matrix(
    sbs_xy: np.ndarray,
    mu_xy: np.ndarray,
    region: network.Region,
    alpha: float,
    rng: np.random.Generator,
):
    """Received power fading * d^-alpha for every MU-SBS pair, unit transmit
    power, in float32.

    Single-precision fast path for the large PPP sweeps; the float64
    reference is network.received_power_matrix, against which this kernel is
    tested.  Returns (rx, row_totals), the totals accumulated in float64.
    """
    xb = sbs_xy.astype(np.float32)
    xu = mu_xy.astype(np.float32)
    side = np.float32(region.side)
    dx = np.abs(xu[:, 0][:, None] - xb[:, 0][None, :])
    dy = np.abs(xu[:, 1][:, None] - xb[:, 1][None, :])
    if region.wrap:
        np.minimum(dx, side - dx, out=dx)
        np.minimum(dy, side - dy, out=dy)
    dx *= dx
    dy *= dy
    d2 = dx
    d2 += dy
    rx = rng.standard_exponential(size=d2.shape, dtype=np.float32)
    if alpha == 4.0:
        d2 *= d2
        rx /= d2
    else:
        d2 **= np.float32(-alpha / 2.0)
        rx *= d2
    return rx, rx.sum(axis=1, dtype=np.float64)


def _ppp_trial(config: ExperimentConfig, popularity: PopularityModel, fractions: dict, trial_id: int) -> dict:
    """One PPP realization: degrees per (delta, power) and outage/delay per
    random-caching scheme.

    The SBS process and the interference field are simulated in full; degree
    and outage statistics are read off `mu_probe` probe MUs (all MUs when 0),
    with SBS-side degrees scaled by the realized MU count.  Realizations are
    shared across the delta/power grid.
    """
    rng = substream(config.seed, trial_id)
    region = config.region()
    area = region.side**2
    sbs_xy = network.sample_ppp(config.lambda_b, region, rng)
    n_sbs = sbs_xy.shape[0]
    n_mu_total = rng.poisson(config.lambda_u * area)
    probe = n_mu_total if config.mu_probe == 0 else min(n_mu_total, config.mu_probe)
    group_p = popularity.group_probs
    n_groups = group_p.size
    s = popularity.exponent

    metrics = {}
    degenerate = n_sbs == 0 or probe == 0
    if not degenerate:
        mu_xy = rng.uniform(0.0, region.side, size=(probe, 2))
        base = config.geometry(delta=config.deltas()[0], power=config.powers()[0])
        rx, totals = _unit_power_pair_matrix(sbs_xy, mu_xy, region, config.alpha, rng)

    base_delta, base_power = config.deltas()[0], config.powers()[0]
    for d in config.deltas():
        placements = {}
        for scheme in config.schemes:
            if not degenerate:
                # Independent per-SBS marks: conditioned on the SBS process,
                # the group-n cachers then form a thinned Poisson process of
                # intensity omega_n * lambda_b, the regime the outage bound
                # is derived for.  (Fixed-topology runs use exact quotas.)
                assignment = rng.choice(n_groups, size=n_sbs, p=fractions[(scheme, d)])
                placements[scheme] = PlacementMatrix(assignment=assignment, n_groups=n_groups)
        for p in config.powers():
            if degenerate:
                want_delay = config.measure_delay and d == base_delta and p == base_power
                metrics[MetricKey("graph", "factor_degree", d, p, s)] = 0.0
                metrics[MetricKey("graph", "variable_degree", d, p, s)] = 0.0
                for scheme in config.schemes:
                    metrics[MetricKey(scheme, "outage_avg", d, p, s)] = 1.0
                    for n in range(n_groups):
                        metrics[MetricKey(scheme, f"outage_group_{n + 1}", d, p, s)] = 1.0
                    if want_delay:
                        metrics[MetricKey(scheme, "delay", d, p, s)] = (
                            config.file_size / config.geometry().mbs_rate
                        )
                        metrics[MetricKey(scheme, "sbs_delay", d, p, s)] = math.nan
                continue
            # rx is for unit transmit power; a uniform power p rescales
            # signal and interference alike, leaving only noise/p behind.
            sigma_eff = config.sigma2 / p
            threshold = (d / (1.0 + d)) * (totals + sigma_eff)
            cand = rx >= threshold[:, None].astype(np.float32)
            mu_deg = cand.sum(axis=1)
            metrics[MetricKey("graph", "factor_degree", d, p, s)] = float(mu_deg.mean())
            metrics[MetricKey("graph", "variable_degree", d, p, s)] = float(
                mu_deg.sum() / n_sbs * (n_mu_total / probe)
            )
            want_delay = config.measure_delay and d == base_delta and p == base_power
            caps = None
            if want_delay:
                sinr = rx / (totals[:, None] - rx + sigma_eff)
                caps = network.capacity_from_sinr(sinr, base)
            for scheme in config.schemes:
                placement = placements[scheme]
                onehot = placement.as_matrix().astype(float)
                covered = (cand.astype(float) @ onehot) > 0
                group_outage = 1.0 - covered.mean(axis=0)
                metrics[MetricKey(scheme, "outage_avg", d, p, s)] = float(
                    group_p @ group_outage
                )
                for n in range(n_groups):
                    metrics[MetricKey(scheme, f"outage_group_{n + 1}", d, p, s)] = float(
                        group_outage[n]
                    )
                if want_delay:
                    best = np.zeros((probe, n_groups))
                    cand_caps = np.where(cand, caps, 0.0)
                    for n in range(n_groups):
                        cols = np.flatnonzero(placement.assignment == n)
                        if cols.size:
                            best[:, n] = cand_caps[:, cols].max(axis=1)
                    mbs_delay = config.file_size / base.mbs_rate
                    served = best > 0
                    pair_delay = np.full_like(best, mbs_delay)
                    np.divide(config.file_size, best, out=pair_delay, where=served)
                    delay = float((pair_delay @ group_p).mean())
                    served_mass = float((served @ group_p).mean())
                    if served_mass > 0:
                        sbs_delay = float(
                            ((np.where(served, pair_delay, 0.0)) @ group_p).mean() / served_mass
                        )
                    else:
                        sbs_delay = math.nan
                    metrics[MetricKey(scheme, "delay", d, p, s)] = delay
                    metrics[MetricKey(scheme, "sbs_delay", d, p, s)] = sbs_delay
    return metrics


def _fixed_trial(config: ExperimentConfig, popularity: PopularityModel, fractions: dict, trial_id: int) -> dict:
    """One fixed-count topology: run every requested scheme and score it."""
    rng = substream(config.seed, trial_id)
    region = config.region()
    params = config.geometry()
    group_p = popularity.group_probs
    n_groups = group_p.size
    d, p, s = params.delta, config.power, popularity.exponent
    k_sbs, j_mu = config.sbs_count, config.mu_count

    sbs_xy = rng.uniform(0.0, region.side, size=(k_sbs, 2))
    mu_xy = rng.uniform(0.0, region.side, size=(j_mu, 2))
    topo = network.build_topology(sbs_xy, mu_xy, region, rng)
    caps = network.capacity_matrix(topo, params)
    candidates, _ = network.candidate_sets(topo, params)
    graph = bp.FactorGraph.from_candidates(candidates, k_sbs)
    utilities = objective.local_utilities(caps, candidates, group_p, params)

    edges = graph.n_edges
    metrics = {
        MetricKey("graph", "factor_degree", d, p, s): sum(len(c) for c in candidates) / j_mu,
        MetricKey("graph", "variable_degree", d, p, s): edges / k_sbs,
        MetricKey("graph", "edges", d, p, s): float(edges),
    }

    def put(scheme, metric, value):
        metrics[MetricKey(scheme, metric, d, p, s)] = float(value)

    def score(scheme, placement):
        delay, _ = objective.average_delay(placement, caps, candidates, group_p, params)
        put(scheme, "delay", delay)

    for scheme in config.schemes:
        if scheme == "exhaustive":
            placement, delay = baselines.exhaustive_search(
                caps, candidates, group_p, params, cap=config.exhaustive_cap
            )
            put(scheme, "delay", delay)
        elif scheme == "bp":
            result = bp.run_bp(
                graph, utilities, group_p,
                max_iters=config.max_iters, tol=config.tol,
                temperature=config.temperature, enum_cap=config.enum_cap,
            )
            score(scheme, result.placement)
            put(scheme, "iterations", result.iterations)
            put(scheme, "converged", float(result.converged))
            put(scheme, "comm_reals_per_iter", 2 * n_groups * edges)
            put(scheme, "comm_rounds", len(result.ledger.rows))
            put(scheme, "comm_reals", result.ledger.total_reals)
            put(scheme, "comm_bits", result.ledger.total_bits)
        elif scheme == "hbp":
            result = hbp.hbp_run(
                graph, utilities, group_p, seed=config.seed,
                max_iters=config.max_iters, temperature=config.temperature,
                stream_key=(trial_id, _HBP_STREAM), enum_cap=config.enum_cap,
            )
            score(scheme, result.placement)
            put(scheme, "iterations", result.iterations)
            put(scheme, "stabilized", float(result.stabilized))
            put(scheme, "comm_ints_per_iter", k_sbs * n_groups + edges)
            put(scheme, "comm_rounds", len(result.ledger.rows))
            put(scheme, "comm_ints", result.ledger.total_integers)
            put(scheme, "comm_bits", result.ledger.total_bits)
        else:  # orc / fprc
            placement = baselines.random_caching(
                fractions[(scheme, d)], k_sbs,
                substream(config.seed, trial_id, _PLACEMENT_STREAM, config.schemes.index(scheme)),
            )
            score(scheme, placement)
    return metrics


def _run_trial(args):
    config, popularity, fractions, trial_id = args
    trial_fn = _ppp_trial if config.scenario in PPP_SCENARIOS else _fixed_trial
    try:
        return trial_id, trial_fn(config, popularity, fractions, trial_id)
    except Exception as exc:
        raise TrialError(trial_id, exc) from exc


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run all trials and aggregate: deterministic for a given master seed,
    regardless of worker count.

    On a trial failure, the aggregate of the completed trials is flushed to
    `config.output` (when set) and a TrialError naming the trial is raised.
    """
    config.validate()
    popularity = config.popularity()
    fractions = _scheme_fractions(config, popularity)
    jobs = [(config, popularity, fractions, t) for t in range(config.trials)]

    collected = {}
    failure = None
    try:
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                for trial_id, metrics in pool.map(_run_trial, jobs, chunksize=8):
                    collected[trial_id] = metrics
        else:
            for job in jobs:
                trial_id, metrics = _run_trial(job)
                collected[trial_id] = metrics
    except TrialError as exc:
        failure = exc

    done = sorted(collected)
    samples = {}
    if done:
        for key in collected[done[0]]:
            samples[key] = np.array([collected[t][key] for t in done])
    result = ExperimentResult(config=config, n_trials=len(done), samples=samples)

    if failure is not None:
        if config.output:
            from .cli import write_simulate_csv  # late import to avoid a cycle

            write_simulate_csv(config.output, result)
        raise failure
    return result


_BOUND_METRICS = ("outage_avg", "outage_group_")
_EQUALITY_METRICS = ("factor_degree", "variable_degree")


@dataclass
class ComparisonRow:
    scheme: str
    metric: str
    delta: float
    power: float
    empirical: float
    stderr: float
    analytic: float
    rel_err: float
    z: float
    kind: str
    flagged: bool


def compare_analytic(rows, config: ExperimentConfig) -> list:
    """Match empirical statistics against their closed-form counterparts.

    `rows` are (key, mean, stderr, n) tuples as produced by
    ExperimentResult.rows() or parsed back from a simulate CSV.  Degrees are
    equality checks flagged at |z| > 3; outage metrics are upper bounds
    flagged when the empirical mean exceeds the bound by more than 3 standard
    errors.  A popularity-exponent mismatch between the rows and the config
    is a configuration error.
    """
    popularity = config.popularity()
    comparisons = []
    frac_cache = {}
    for key, mean, stderr, _ in rows:
        if abs(key.s - popularity.exponent) > 1e-12:
            raise ConfigError(
                f"rows were produced with zipf_s={key.s}, config says {popularity.exponent}"
            )
        analytic = None
        kind = None
        if key.metric in _EQUALITY_METRICS:
            degrees = analysis.average_degrees(config.geometry(delta=key.delta, power=key.power))
            analytic = degrees.factor if key.metric == "factor_degree" else degrees.variable
            kind = "equality"
        elif key.metric.startswith(_BOUND_METRICS) and key.scheme in ("orc", "fprc"):
            cache_key = (key.scheme, key.delta)
            if cache_key not in frac_cache:
                if key.scheme == "fprc":
                    frac_cache[cache_key] = baselines.popularity_fractions(popularity)
                else:
                    frac_cache[cache_key] = baselines.optimal_fractions(
                        popularity, key.delta, config.alpha
                    )
            omega = frac_cache[cache_key]
            if key.metric == "outage_avg":
                analytic = analysis.avg_outage_bound(
                    omega, popularity.group_probs, key.delta, config.alpha
                )
            else:
                n = int(key.metric.rsplit("_", 1)[1]) - 1
                analytic = analysis.outage_bound(omega[n], key.delta, config.alpha)
            kind = "upper-bound"
        if analytic is None:
            continue
        rel_err = (mean - analytic) / analytic if analytic else math.inf
        if stderr > 0:
            z = (mean - analytic) / stderr
        else:
            z = 0.0 if mean == analytic else math.copysign(math.inf, mean - analytic)
        flagged = abs(z) > 3 if kind == "equality" else z > 3
        comparisons.append(
            ComparisonRow(
                scheme=key.scheme, metric=key.metric, delta=key.delta, power=key.power,
                empirical=mean, stderr=stderr, analytic=float(analytic),
                rel_err=float(rel_err), z=float(z), kind=kind, flagged=flagged,
            )
        )
    return comparisons


def analytic_table(config: ExperimentConfig) -> list:
    """Closed-form quantities for one configuration as (quantity, value) rows."""
    popularity = config.popularity()
    params = config.geometry()
    degrees = analysis.average_degrees(params)
    rows = [
        ("beta_reflection", analysis.beta_reflection(config.alpha)),
        ("cross_group_coeff", analysis.cross_group_coeff(config.delta, config.alpha)),
        ("same_group_coeff", analysis.same_group_coeff(config.delta, config.alpha)),
        ("factor_degree", degrees.factor),
        ("variable_degree", degrees.variable),
        ("factor_degree_noiseless", degrees.factor_noiseless),
        ("variable_degree_noiseless", degrees.variable_noiseless),
        ("mbs_rate", params.mbs_rate),
        ("mbs_delay", params.file_size / params.mbs_rate),
    ]
    for scheme in ("fprc", "orc"):
        if scheme not in config.schemes:
            continue
        if scheme == "fprc":
            omega = baselines.popularity_fractions(popularity)
        else:
            omega = baselines.optimal_fractions(popularity, config.delta, config.alpha)
        model = analysis.build_analytic_model(params, popularity.group_probs, omega)
        rows.append((f"{scheme}_avg_bound", model.avg_bound))
        for n in range(popularity.num_groups):
            rows.append((f"{scheme}_omega_{n + 1}", float(omega[n])))
            rows.append((f"{scheme}_bound_group_{n + 1}", float(model.group_bounds[n])))
            rows.append(
                (
                    f"{scheme}_weighted_bound_{n + 1}",
                    float(model.group_bounds[n] * popularity.group_probs[n]),
                )
            )
    return rows
