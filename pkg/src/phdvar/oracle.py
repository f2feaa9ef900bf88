"""Exact multi-target Bayes update over small discrete state spaces.

The posterior over configurations is computed by brute enumeration of the
measurement-to-target assignments, with no filtering identities involved, so
its moments serve as an independent oracle for the PHD/CPHD update formulas.

Configurations are ordered tuples drawn from the prior's support points. For
larger cardinality supports the enumeration groups tuples sharing the same
point multiplicities (a pure regrouping of the ordered sum: the likelihood is
symmetric in the targets), which keeps the Poisson-prior harness tractable.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .core import (
    CardinalityDistribution,
    Measurement,
    ObservationModel,
    Region,
    WeightedParticleSet,
    states_array,
)

ENUMERATION_BUDGET = 10 ** 7


class BudgetExceededError(ValueError):
    """The requested instance is too large for exact enumeration."""


@dataclass(frozen=True)
class DiscretePrior:
    """Finite-support i.i.d. prior: cardinality law plus a common spatial law.

    ``spatial`` must sum to one; ``points`` are the support states. A prior
    realisation of size n is n i.i.d. draws from ``spatial`` over ``points``.
    """

    points: np.ndarray
    rho: CardinalityDistribution
    spatial: np.ndarray

    def __post_init__(self):
        pts = states_array(self.points)
        sp = np.asarray(self.spatial, dtype=float)
        if sp.shape != (pts.shape[0],):
            raise ValueError("spatial law must have one entry per support point")
        if abs(float(sp.sum()) - 1.0) > 1e-12 or np.any(sp < 0.0):
            raise ValueError("spatial law must be non-negative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spatial", sp)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def intensity_particles(self) -> WeightedParticleSet:
        """The prior's first moment measure as an exact particle set."""
        return WeightedParticleSet(self.rho.mean() * self.spatial, self.points)


def partition_assignments(m: int, n: int):
    """All measurement-to-target assignments: a[i] is a target index or -1
    (clutter), with no target used twice."""
    for a in itertools.product(range(-1, n), repeat=m):
        used = [j for j in a if j >= 0]
        if len(used) == len(set(used)):
            yield a


def likelihood_exact(measurements: Sequence[Measurement], states,
                     model: ObservationModel) -> float:
    """Multi-measurement/multi-target likelihood by exhaustive assignment.

    Sums, over every way of explaining each measurement by clutter or by a
    distinct target, the product of clutter-count probability (times the
    number of clutter orderings), clutter densities, detection kernels and
    missed-detection factors.
    """
    arr = states_array(states)
    m, n = len(measurements), arr.shape[0]
    if (n + 1) ** m > ENUMERATION_BUDGET:
        raise BudgetExceededError(f"assignment enumeration ({(n + 1) ** m}) over budget")
    pd = model.detection_vector(arr) if n else np.zeros(0)
    p_miss = 1.0 - pd
    kernel = np.empty((m, n))
    if n:
        for i, z in enumerate(measurements):
            kernel[i] = pd * model.likelihood(z, arr)
    cz = model.clutter_vector(measurements)
    rho_c = model.clutter_card

    terms = []
    for a in partition_assignments(m, n):
        clutter_idx = [i for i, j in enumerate(a) if j < 0]
        k = len(clutter_idx)
        val = math.factorial(k) * rho_c(k)
        if val == 0.0:
            continue
        for i in clutter_idx:
            val *= cz[i]
        detected = set()
        for i, j in enumerate(a):
            if j >= 0:
                val *= kernel[i, j]
                detected.add(j)
        for j in range(n):
            if j not in detected:
                val *= p_miss[j]
        terms.append(val)
    return math.fsum(terms)


@dataclass(frozen=True)
class DiscretePosterior:
    """Exact posterior over configurations, grouped by point multiplicities.

    Row i of ``counts`` gives how many targets sit on each support point;
    ``probs[i]`` is the total posterior mass of all ordered configurations
    with those multiplicities. ``evidence`` is the unnormalised integral of
    the likelihood against the prior.
    """

    points: np.ndarray
    counts: np.ndarray
    probs: np.ndarray
    evidence: float


def _compositions(n: int, parts: int) -> np.ndarray:
    """All length-``parts`` non-negative integer vectors summing to n."""
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for first in range(n + 1):
        rest = _compositions(n - first, parts - 1)
        block = np.empty((rest.shape[0], parts), dtype=np.int64)
        block[:, 0] = first
        block[:, 1:] = rest
        rows.append(block)
    return np.concatenate(rows, axis=0)


def _multiset_likelihoods(counts: np.ndarray, kernel: np.ndarray,
                          p_miss: np.ndarray, cz: np.ndarray,
                          rho_c: CardinalityDistribution) -> np.ndarray:
    """Exact likelihood of each multiplicity row, all assignments enumerated.

    An assignment sends each measurement to clutter or to a support point;
    a point receiving k of them contributes a falling factorial (the choice
    of k distinct target copies) and missed-detection powers for the rest.
    """
    m = kernel.shape[0]
    S = kernel.shape[1]
    n_top = int(counts.max()) if counts.size else 0
    t = np.arange(n_top + 1)
    # ff[t, k] = t (t-1) ... (t-k+1); zero when k > t
    ff = np.ones((n_top + 1, m + 1))
    for k in range(1, m + 1):
        ff[:, k] = ff[:, k - 1] * np.maximum(t - (k - 1), 0)
    pow_miss = p_miss[None, :] ** t[:, None]  # (n_top+1, S)

    out = np.zeros(counts.shape[0])
    for assign in itertools.product(range(-1, S), repeat=m):
        k_clutter = sum(1 for j in assign if j < 0)
        scalar = math.factorial(k_clutter) * rho_c(k_clutter)
        if scalar == 0.0:
            continue
        k_point = [0] * S
        for i, j in enumerate(assign):
            if j < 0:
                scalar *= cz[i]
            else:
                scalar *= kernel[i, j]
                k_point[j] += 1
        if scalar == 0.0:
            continue
        factors = np.full(counts.shape[0], scalar)
        for j in range(S):
            kj = k_point[j]
            if kj:
                factors *= ff[counts[:, j], kj]
            factors *= pow_miss[np.maximum(counts[:, j] - kj, 0), j]
            # rows with counts < kj already got a zero falling factorial
        out += factors
    return out


def posterior_exact(prior: DiscretePrior, measurements: Sequence[Measurement],
                    model: ObservationModel, tail_eps: float = 1e-16) -> DiscretePosterior:
    """Exact posterior of the full multi-target Bayes update.

    Cardinalities whose remaining prior tail is below ``tail_eps`` are
    skipped; with the default this is far below every tolerance used against
    the oracle. Raises when the enumeration budget would be exceeded or when
    the evidence vanishes.
    """
    S = prior.size
    m = len(measurements)
    rho = prior.rho
    tail = 1.0 - np.cumsum(rho.probs)
    n_top = rho.n_max
    while n_top > 0 and tail[n_top - 1] <= tail_eps and rho.probs[n_top] <= tail_eps:
        n_top -= 1
    total_rows = sum(math.comb(n + S - 1, S - 1) for n in range(n_top + 1))
    if total_rows * (S + 1) ** m > ENUMERATION_BUDGET * 10:
        raise BudgetExceededError(
            f"{total_rows} configurations x {(S + 1) ** m} assignments over budget"
        )

    pd = model.detection_vector(prior.points)
    kernel = np.empty((m, S))
    for i, z in enumerate(measurements):
        kernel[i] = pd * model.likelihood(z, prior.points)
    cz = model.clutter_vector(measurements)

    all_counts = []
    all_weights = []
    spatial_safe = np.where(prior.spatial > 0.0, prior.spatial, 1.0)
    for n in range(n_top + 1):
        if rho.probs[n] == 0.0:
            continue
        counts = _compositions(n, S)
        # multinomial weight of each multiplicity row within the ordered sum
        log_coeff = (gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=1)
                     + counts @ np.log(spatial_safe))
        coeff = np.exp(log_coeff)
        coeff[np.any((counts > 0) & (prior.spatial[None, :] == 0.0), axis=1)] = 0.0
        like = _multiset_likelihoods(counts, kernel, 1.0 - pd, cz, model.clutter_card)
        all_counts.append(counts)
        all_weights.append(rho.probs[n] * coeff * like)

    counts = np.concatenate(all_counts, axis=0)
    weights = np.concatenate(all_weights)
    evidence = math.fsum(weights.tolist())
    if evidence <= 0.0:
        raise ValueError("zero evidence: the model cannot produce these measurements")
    return DiscretePosterior(prior.points, counts, weights / evidence, evidence)


def moments_exact(posterior: DiscretePosterior, region_a: Region,
                  region_b: Region) -> tuple[float, float, float]:
    """(mean in A, joint second moment over A and B, variance in A)."""
    in_a = posterior.counts @ region_a.mask(posterior.points).astype(float)
    in_b = posterior.counts @ region_b.mask(posterior.points).astype(float)
    p = posterior.probs
    mu_a = math.fsum((p * in_a).tolist())
    mu2_ab = math.fsum((p * in_a * in_b).tolist())
    mu2_aa = math.fsum((p * in_a * in_a).tolist())
    return mu_a, mu2_ab, mu2_aa - mu_a * mu_a


def tabular_model(points, measurements: Sequence[Measurement], pd_values,
                  like_table, c_values, rho_c: CardinalityDistribution,
                  clutter_rate: float | None = None) -> ObservationModel:
    """Observation model backed by lookup tables over a finite point support.

    ``like_table[i, j]`` is the single-target likelihood of measurement i at
    support point j; states passed to the model must be rows of ``points``.
    """
    pts = states_array(points)
    pd_values = np.asarray(pd_values, dtype=float)
    like_table = np.asarray(like_table, dtype=float)
    c_values = np.asarray(c_values, dtype=float)
    meas_index = {tuple(z): i for i, z in enumerate(measurements)}
    if clutter_rate is None:
        clutter_rate = rho_c.mean()

    def point_index(states):
        idx = np.empty(states.shape[0], dtype=int)
        for r, row in enumerate(states):
            hits = np.flatnonzero(np.all(pts == row, axis=1))
            if hits.size == 0:
                raise ValueError("state outside the tabulated support")
            idx[r] = hits[0]
        return idx

    return ObservationModel(
        detection_prob=lambda s: pd_values[point_index(s)],
        likelihood=lambda z, s: like_table[meas_index[tuple(z)], point_index(s)],
        clutter_density=lambda z: float(c_values[meas_index[tuple(z)]]),
        clutter_card=rho_c,
        clutter_rate=float(clutter_rate),
    )
