"""Experiment harness: scenario filter runs, Monte-Carlo sweeps, the
filter-vs-oracle self check, and update-cost benchmarking.

Everything is seeded and the CSV outputs are byte-stable: the same config and
seeds always produce identical files.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import cphd, phd
from .core import (
    CardinalityDistribution,
    Measurement,
    Region,
    RegionalStats,
    WeightedParticleSet,
    count_in_region,
    disc_region,
    empty_region,
    fov_region,
    full_space,
    states_array,
)
from .oracle import DiscretePrior, moments_exact, posterior_exact, tabular_model
from .prediction import (
    BirthModel,
    MotionModel,
    constant_survival,
    cv_transition,
    measurement_sites_sampler,
    predict_cardinality,
    predict_particles,
    uniform_disc_sampler,
)
from .simulation import (
    INFERIOR_SENSOR,
    SUPERIOR_SENSOR,
    Scenario,
    generate_measurements,
    generate_truth_tracks,
    range_bearing_model,
    scenario_table1,
    track_alive,
)


class ConfigError(ValueError):
    """An experiment configuration field is missing or invalid."""


_SENSORS = {"superior": SUPERIOR_SENSOR, "inferior": INFERIOR_SENSOR}

CSV_HEADER = "run,seed,t,filter,region,pd,mean,var,true_count"
AGG_HEADER = "t,filter,region,pd,mean,var,true_count,n_runs"


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of a scenario filter experiment (defaults documented in README).

    The survival probability, birth rate, process noise and particle budget
    are artifact defaults: the scenario definition does not pin them down.
    """

    filter: str = "cphd"
    pd: tuple[float, ...] = (0.95,)
    seeds: tuple[int, ...] = (0,)
    n_max: int = 30
    particles_per_target: int = 600
    min_particles: int = 500
    birth_rate: float = 0.2
    birth_particles: int = 400
    birth_mode: str = "measurement"
    birth_velocity_std: float = 10.0
    survival_prob: float = 0.99
    process_noise_filter: float = 1.0
    process_noise_truth: float = 0.02
    sensor: str = "superior"
    clutter_mode: str = "area"
    clutter_rate: float = 20.0
    regions: tuple[dict, ...] = (dict(type="full-fov"),)
    out: str | None = None
    json_mirror: bool = False

    def __post_init__(self):
        if self.filter not in ("phd", "cphd"):
            raise ConfigError(f"filter: must be 'phd' or 'cphd', got {self.filter!r}")
        if not self.pd:
            raise ConfigError("pd: at least one detection probability is required")
        for p in self.pd:
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"pd: values must lie in (0, 1], got {p}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if self.n_max < 0:
            raise ConfigError("n_max: must be non-negative")
        if self.particles_per_target <= 0:
            raise ConfigError("particles_per_target: must be positive")
        if self.sensor not in _SENSORS:
            raise ConfigError(f"sensor: must be one of {sorted(_SENSORS)}")
        if self.clutter_mode not in ("area", "polar"):
            raise ConfigError("clutter_mode: must be 'area' or 'polar'")
        if self.birth_mode not in ("measurement", "uniform"):
            raise ConfigError("birth_mode: must be 'measurement' or 'uniform'")
        if not self.regions:
            raise ConfigError("regions: at least one region is required")
        for spec in self.regions:
            _validate_region_spec(spec)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("pd", "seeds", "regions"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def scenario(self, p_d: float) -> Scenario:
        return scenario_table1(detection_prob=p_d, sensor=_SENSORS[self.sensor],
                               clutter_rate=self.clutter_rate,
                               clutter_mode=self.clutter_mode)


def _validate_region_spec(spec: dict) -> None:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"regions: each entry needs a 'type', got {spec!r}")
    kind = spec["type"]
    if kind == "full-fov":
        return
    if kind == "disc":
        if "center" not in spec or "radius" not in spec:
            raise ConfigError("regions: disc needs 'center' and 'radius'")
        if float(spec["radius"]) <= 0:
            raise ConfigError("regions: disc radius must be positive")
        return
    if kind == "disc-around-track":
        if "track" not in spec or "radii" not in spec:
            raise ConfigError("regions: disc-around-track needs 'track' and 'radii'")
        return
    raise ConfigError(f"regions: unknown type {kind!r}")


def _region_builder(spec: dict, scenario: Scenario,
                    tracks: dict[int, dict[int, "State"]]):
    """Per-step named regions for one region spec."""
    kind = spec["type"]
    if kind == "full-fov":
        static = [("fov", fov_region(scenario.sensor.fov_radius))]

        def build(step):
            return static

        return build
    if kind == "disc":
        cx, cy = (float(v) for v in spec["center"])
        radius = float(spec["radius"])
        label = spec.get("label", f"disc_{cx:g}_{cy:g}_r{radius:g}")
        static = [(label, disc_region(cx, cy, radius, label=label))]

        def build(step):
            return static

        return build
    if kind == "disc-around-track":
        track = int(spec["track"])
        radii = [float(r) for r in spec["radii"]]
        times = spec.get("times")
        steps = None if times is None else {int(t) for t in times}

        def build(step):
            if steps is not None and step not in steps:
                return []
            state = tracks.get(track, {}).get(step)
            if state is None:
                return []
            return [(f"track{track}_r{r:g}",
                     disc_region(state.x, state.y, r)) for r in radii]

        return build
    raise ConfigError(f"regions: unknown type {kind!r}")


@dataclass
class StepRecord:
    t: int
    region: str
    mean: float
    var: float
    true_count: int


@dataclass
class RunResult:
    """Everything one seeded filter pass produced."""

    records: list[StepRecord]
    consistency: list[tuple[int, float, float]]  # (t, mean gap, var gap), CPHD only
    update_seconds: float


def run_scenario_filter(scenario: Scenario, kind: str, seed: int,
                        config: ExperimentConfig,
                        region_specs: Sequence[dict] | None = None) -> RunResult:
    """Run one filter over the scenario, collecting per-region statistics.

    The filter starts from an empty prior; births seed it on the first scan.
    Regions may be static or tied to a truth track (resolution mode).
    """
    if kind not in ("phd", "cphd"):
        raise ConfigError(f"filter: must be 'phd' or 'cphd', got {kind!r}")
    specs = config.regions if region_specs is None else tuple(region_specs)
    ss = np.random.SeedSequence(seed)
    truth_rng, meas_rng, filt_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    tracks = generate_truth_tracks(scenario, truth_rng, config.process_noise_truth)
    fov2 = scenario.sensor.fov_radius ** 2
    builders = [_region_builder(spec, scenario, tracks) for spec in specs]
    model = range_bearing_model(scenario)
    survival = constant_survival(config.survival_prob, scenario.sensor.fov_radius)
    transition = cv_transition(config.process_noise_filter)
    birth_card = CardinalityDistribution.poisson(config.birth_rate, config.n_max)
    uniform_sampler = uniform_disc_sampler(scenario.sensor.fov_radius,
                                           config.birth_velocity_std)

    particles = WeightedParticleSet.empty()
    rho = CardinalityDistribution.point_mass(0, config.n_max)
    prev_measurements: list[Measurement] = []
    records: list[StepRecord] = []
    consistency: list[tuple[int, float, float]] = []
    update_seconds = 0.0

    for step in range(1, scenario.n_steps + 1):
        truth_states = [s for i in sorted(tracks) if (s := tracks[i].get(step)) is not None
                        and s.x ** 2 + s.y ** 2 <= fov2]
        measurements = generate_measurements(tuple(truth_states), scenario, meas_rng)

        if config.birth_mode == "measurement" and prev_measurements:
            sampler = measurement_sites_sampler(
                prev_measurements, scenario.sensor.sigma_range,
                scenario.sensor.sigma_bearing, config.birth_velocity_std,
                scenario.sensor.fov_radius)
        else:
            sampler = uniform_sampler
        birth = BirthModel(config.birth_rate, birth_card, sampler)
        motion = MotionModel(transition, survival, birth)

        predicted = predict_particles(particles, motion, filt_rng, scenario.dt,
                                      config.birth_particles)
        if kind == "cphd":
            if len(particles):
                p_s_eff = float(np.average(motion.survival_vector(particles.states),
                                           weights=particles.weights))
            else:
                p_s_eff = config.survival_prob
            rho = predict_cardinality(rho, p_s_eff, birth_card)

        t0 = time.perf_counter()
        step_regions = [item for build in builders for item in build(step)]
        if kind == "cphd":
            result = cphd.cphd_update(predicted, rho, measurements, model, config.n_max)
            updated, rho = result.particles, result.cardinality
            for label, region in step_regions:
                st = result.regional_stats(region)
                records.append(StepRecord(step, label, st.mean, st.var,
                                          count_in_region(truth_states, region)))
            full = result.regional_stats(full_space())
            consistency.append((step, abs(rho.mean() - full.mean),
                                abs(rho.variance() - full.var)))
        else:
            cw = phd.phd_conditional_weights(predicted, measurements, model)
            updated = phd.phd_update_intensity(cw)
            for label, region in step_regions:
                st = phd.phd_regional_stats(cw, updated, region)
                records.append(StepRecord(step, label, st.mean, st.var,
                                          count_in_region(truth_states, region)))
        update_seconds += time.perf_counter() - t0

        particles = _resample(updated, config, filt_rng)
        prev_measurements = measurements

    return RunResult(records, consistency, update_seconds)


def _resample(particles: WeightedParticleSet, config: ExperimentConfig,
              rng) -> WeightedParticleSet:
    """Multinomial resampling to the mass-proportional particle budget."""
    mass = particles.total_mass
    if mass <= 0.0 or len(particles) == 0:
        return particles
    j_new = int(np.clip(round(config.particles_per_target * mass),
                        config.min_particles, 400_000))
    idx = rng.choice(len(particles), size=j_new, p=particles.weights / mass)
    states = particles.states[idx]
    weights = np.full(j_new, mass / j_new)
    return WeightedParticleSet(weights, states)


def run_filter_experiment(config: ExperimentConfig):
    """Per-seed rows plus Monte-Carlo aggregates for every (pd, seed) pair.

    Returns (rows, agg_rows); each row matches the CSV schema. Files are
    written when ``config.out`` is set.
    """
    rows = []
    for p_d in config.pd:
        scenario = config.scenario(p_d)
        for run, seed in enumerate(config.seeds):
            result = run_scenario_filter(scenario, config.filter, seed, config)
            for rec in result.records:
                rows.append(dict(run=run, seed=seed, t=rec.t, filter=config.filter,
                                 region=rec.region, pd=p_d, mean=rec.mean,
                                 var=rec.var, true_count=rec.true_count))
    agg_rows = aggregate_rows(rows)
    if config.out:
        write_rows_csv(config.out, rows)
        write_agg_csv(_sibling_path(config.out, "agg"), agg_rows)
        if config.json_mirror:
            _write_json(_sibling_path(config.out, "json"), rows, agg_rows)
    return rows, agg_rows


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    """Average mean/var/true_count across runs per (t, filter, region, pd)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["t"], row["filter"], row["region"], row["pd"]), []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        grp = groups[key]
        t, kind, region, p_d = key
        out.append(dict(
            t=t, filter=kind, region=region, pd=p_d,
            mean=sum(r["mean"] for r in grp) / len(grp),
            var=sum(r["var"] for r in grp) / len(grp),
            true_count=sum(r["true_count"] for r in grp) / len(grp),
            n_runs=len(grp),
        ))
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_rows_csv(path, rows: Sequence[dict]) -> None:
    cols = CSV_HEADER.split(",")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def write_agg_csv(path, rows: Sequence[dict]) -> None:
    cols = AGG_HEADER.split(",")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(AGG_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _sibling_path(path: str, tag: str) -> str:
    if path.endswith(".csv"):
        return path[: -4] + f".{tag}." + ("csv" if tag != "json" else "json")
    return path + f".{tag}"


def _write_json(path, rows, agg_rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"rows": rows, "aggregates": agg_rows}, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Resolution experiment: variance over concentric discs around one track.

def run_resolution(config: ExperimentConfig, seed: int,
                   times: Sequence[int] = (51, 55, 59),
                   radii: Sequence[float] = tuple(range(1, 201)),
                   track: int = 0, p_d: float | None = None):
    """Mean/variance over growing discs centred on one track's true position.

    Returns {time: (radii, means, variances)} for the configured filter on a
    single seeded run.
    """
    p_d = config.pd[0] if p_d is None else p_d
    scenario = config.scenario(p_d)
    spec = dict(type="disc-around-track", track=track,
                radii=list(radii), times=list(times))
    result = run_scenario_filter(scenario, config.filter, seed, config,
                                 region_specs=[spec])
    curves = {}
    radii_arr = np.asarray(list(radii), dtype=float)
    for t in times:
        recs = [r for r in result.records if r.t == t]
        if len(recs) != len(radii_arr):
            raise RuntimeError(f"expected {len(radii_arr)} regions at t={t}, got {len(recs)}")
        means = np.array([r.mean for r in recs])
        variances = np.array([r.var for r in recs])
        curves[int(t)] = (radii_arr, means, variances)
    return curves, result


def detect_resolution_dip(radii, means, variances, mean_band=(0.8, 1.2),
                          smooth: int = 5, margin_frac: float = 0.10) -> bool:
    """Does the variance-vs-radius curve isolate a single target?

    True when some radius has mean target count inside ``mean_band`` and the
    (lightly smoothed) variance there sits below local maxima on both sides
    by at least ``margin_frac`` of the curve's dynamic range.
    """
    means = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        pad = smooth // 2
        v = np.convolve(np.pad(v, pad, mode="edge"), kernel, mode="valid")
        v = v[: means.size]
    dyn = float(v.max() - v.min())
    if dyn <= 0.0:
        return False
    margin = margin_frac * dyn
    band = np.flatnonzero((means >= mean_band[0]) & (means <= mean_band[1]))
    for i in band:
        if i == 0 or i >= v.size - 1:
            continue
        left = float(v[:i].max())
        right = float(v[i + 1:].max())
        if left >= v[i] + margin and right >= v[i] + margin:
            return True
    return False


def resolution_pattern(config: ExperimentConfig, seed: int,
                       times: Sequence[int] = (51, 55, 59),
                       radii: Sequence[float] = tuple(range(1, 201)),
                       track: int = 0) -> dict[int, bool]:
    """Dip verdict per requested time for one seeded run."""
    curves, _ = run_resolution(config, seed, times=times, radii=radii, track=track)
    return {t: detect_resolution_dip(*curves[t]) for t in times}


# ---------------------------------------------------------------------------
# Oracle self-check on randomized discrete instances.

def random_discrete_instance(rng, max_points: int = 4, max_n: int = 4,
                             max_measurements: int = 3, poisson: bool = False,
                             n_max_poisson: int = 80):
    """One randomized small instance: (prior, measurements, model)."""
    S = int(rng.integers(2, max_points + 1))
    m = int(rng.integers(0, max_measurements + 1))
    points = rng.uniform(-10.0, 10.0, (S, 4))
    if poisson:
        lam = float(rng.uniform(0.5, 4.0))
        rho = CardinalityDistribution.poisson(lam, n_max_poisson)
    else:
        n_max = int(rng.integers(1, max_n + 1))
        rho = CardinalityDistribution(rng.uniform(0.02, 1.0, n_max + 1))
    spatial = rng.uniform(0.05, 1.0, S)
    spatial = spatial / spatial.sum()
    prior = DiscretePrior(points, rho, spatial)
    measurements = [Measurement(float(rng.uniform(0.0, 100.0)),
                                float(rng.uniform(-3.0, 3.0))) for _ in range(m)]
    pd_values = rng.uniform(0.05, 0.95, S)
    like = rng.uniform(0.05, 3.0, (m, S))
    c_values = rng.uniform(0.1, 2.0, m)
    if poisson:
        lam_c = float(rng.uniform(0.2, 2.0))
        rho_c = CardinalityDistribution.poisson(lam_c, n_max_poisson)
        model = tabular_model(points, measurements, pd_values, like, c_values,
                              rho_c, clutter_rate=lam_c)
    else:
        rho_c = CardinalityDistribution(rng.uniform(0.05, 1.0, m + 3))
        model = tabular_model(points, measurements, pd_values, like, c_values, rho_c)
    return prior, measurements, model


def support_regions(points: np.ndarray, rng) -> list[Region]:
    """Full space, the empty region, and a random support split plus its complement."""
    pts = points.copy()
    split = rng.random(pts.shape[0]) < 0.5

    def subset_region(mask, name):
        rows = {tuple(r) for r in pts[mask]}
        return Region(name, lambda s: np.fromiter(
            (tuple(x) in rows for x in s), dtype=bool, count=s.shape[0]))

    return [full_space(), empty_region(), subset_region(split, "subsetA"),
            subset_region(~split, "subsetB")]


@dataclass
class OracleCheckReport:
    instances: int
    max_dev_cphd: float
    max_dev_phd: float
    max_dev_reduction: float
    tol_cphd: float
    tol_phd: float
    elapsed: float

    @property
    def passed(self) -> bool:
        return (self.max_dev_cphd <= self.tol_cphd
                and self.max_dev_phd <= self.tol_phd
                and self.max_dev_reduction <= self.tol_phd)


def _rel_dev(got: float, want: float) -> float:
    return abs(got - want) / max(1.0, abs(want))


def run_oracle_check(instances: int = 50, seed: int = 20140101,
                     tol_cphd: float = 1e-9, tol_phd: float = 1e-6) -> OracleCheckReport:
    """Compare the CPHD/PHD regional statistics to exact enumeration.

    Per instance, the CPHD update on an arbitrary i.i.d. prior is checked at
    tolerance ``tol_cphd``; a Poisson twin instance checks the PHD update and
    the CPHD-with-Poisson-prior agreement with it at ``tol_phd``.
    """
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    dev_c = dev_p = dev_r = 0.0
    for _ in range(instances):
        prior, measurements, model = random_discrete_instance(rng)
        post = posterior_exact(prior, measurements, model)
        result = cphd.cphd_update(prior.intensity_particles(), prior.rho,
                                  measurements, model, prior.rho.n_max)
        for region in support_regions(prior.points, rng):
            mu, _, var = moments_exact(post, region, region)
            st = result.regional_stats(region)
            dev_c = max(dev_c, _rel_dev(st.mean, mu), _rel_dev(st.var, var))

        prior, measurements, model = random_discrete_instance(rng, poisson=True)
        post = posterior_exact(prior, measurements, model)
        cw = phd.phd_conditional_weights(prior.intensity_particles(), measurements, model)
        updated = phd.phd_update_intensity(cw)
        result = cphd.cphd_update(prior.intensity_particles(), prior.rho,
                                  measurements, model, prior.rho.n_max)
        for region in support_regions(prior.points, rng):
            mu, _, var = moments_exact(post, region, region)
            st = phd.phd_regional_stats(cw, updated, region)
            dev_p = max(dev_p, _rel_dev(st.mean, mu), _rel_dev(st.var, var))
            stc = result.regional_stats(region)
            dev_r = max(dev_r, _rel_dev(stc.mean, st.mean), _rel_dev(stc.var, st.var))
    elapsed = time.perf_counter() - start
    return OracleCheckReport(instances, dev_c, dev_p, dev_r, tol_cphd, tol_phd, elapsed)


# ---------------------------------------------------------------------------
# Update-cost benchmark.

@dataclass
class BenchmarkReport:
    m_values: list[int]
    phd_seconds: list[float]
    cphd_seconds: list[float]
    phd_exponent: float
    cphd_exponent: float


def _fit_exponent(m_values, seconds) -> float:
    x = np.log(np.asarray(m_values, dtype=float))
    y = np.log(np.asarray(seconds, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def run_benchmark(m_values: Sequence[int] = (8, 16, 32, 64), repeats: int = 7,
                  seed: int = 7, phd_particles: int = 20000,
                  cphd_particles: int = 1000, n_max: int = 400) -> BenchmarkReport:
    """Median data-update wall time per measurement count, plus fitted slopes.

    The PHD run uses a large particle cloud so its per-measurement work
    dominates; the CPHD run uses a smaller cloud so the measurement-pair
    corrector terms dominate.
    """
    rng = np.random.default_rng(seed)
    scenario = scenario_table1()
    model = range_bearing_model(replace_clutter(scenario, max(m_values)))
    rho = CardinalityDistribution.poisson(5.0, n_max)

    def cloud(j):
        pos = rng.uniform(-2000.0, 2000.0, (j, 2))
        vel = rng.normal(0.0, 10.0, (j, 2))
        return WeightedParticleSet(np.full(j, 5.0 / j), np.column_stack([pos, vel]))

    phd_cloud = cloud(phd_particles)
    cphd_cloud = cloud(cphd_particles)
    fov = full_space()

    phd_times, cphd_times = [], []
    for m in m_values:
        measurements = [Measurement(float(rng.uniform(100.0, 3000.0)),
                                    float(rng.uniform(-np.pi, np.pi)))
                        for _ in range(m)]
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            cw = phd.phd_conditional_weights(phd_cloud, measurements, model)
            upd = phd.phd_update_intensity(cw)
            phd.phd_regional_stats(cw, upd, fov)
            samples.append(time.perf_counter() - t0)
        phd_times.append(float(np.median(samples)))
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = cphd.cphd_update(cphd_cloud, rho, measurements, model, n_max)
            res.regional_stats(fov)
            samples.append(time.perf_counter() - t0)
        cphd_times.append(float(np.median(samples)))

    return BenchmarkReport(list(m_values), phd_times, cphd_times,
                           _fit_exponent(m_values, phd_times),
                           _fit_exponent(m_values, cphd_times))


def replace_clutter(scenario: Scenario, m_top: int) -> Scenario:
    """Scenario copy whose clutter law comfortably covers m_top measurements."""
    return replace(scenario, clutter_rate=float(max(scenario.clutter_rate, m_top)))
