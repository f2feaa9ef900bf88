"""CPHD data update: cardinality posterior, intensity reweighting, and the
regional mean/variance built from the first- and second-order corrector terms.

The corrector terms for every measurement-set deletion (full set, one removed,
a pair removed) reuse one shared (n, d) log-grid per subset size, so the whole
block is a handful of vectorised log-sum-exp reductions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import combinatorics as comb
from .core import (
    CardinalityDistribution,
    DegenerateModelError,
    Measurement,
    ObservationModel,
    Region,
    RegionalStats,
    WeightedParticleSet,
    ZeroMassError,
)


@dataclass(frozen=True)
class CphdConditionalWeights:
    """Per-particle update terms (unnormalised), plus their global masses.

    ``missed[i]`` is (1 - p_d(x_i)) w_i; column k of ``per_measurement`` holds
    p_d(x_i) L(z_k|x_i) w_i. ``masses[k]`` sums column k over all particles
    and ``missed_mass`` sums the missed-detection terms.
    """

    missed: np.ndarray
    per_measurement: np.ndarray
    clutter: np.ndarray
    masses: np.ndarray
    missed_mass: float
    total_mass: float
    states: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        """Detected mass over clutter density, one entry per measurement."""
        return self.masses / self.clutter


@dataclass(frozen=True)
class CorrectorTerms:
    """First/second-order corrector ratios for one measurement set.

    ``l2_pair`` is symmetric with a structurally zero diagonal; it is only
    ever consumed through quadratic forms with that convention.
    ``log_upsilon0`` spans n = 0..n_max and feeds the cardinality update;
    ``log_evidence`` is the shared denominator of every ratio.
    """

    l1_phi: float
    l2_phi: float
    l1: np.ndarray
    l2: np.ndarray
    l2_pair: np.ndarray
    log_upsilon0: np.ndarray
    log_evidence: float


def cphd_conditional_weights(particles: WeightedParticleSet,
                             measurements: Sequence[Measurement],
                             model: ObservationModel) -> CphdConditionalWeights:
    """Unnormalised missed-detection and measurement terms for each particle."""
    if particles.total_mass <= 0.0:
        raise ZeroMassError("CPHD update requires positive predicted mass")
    w = particles.weights
    states = particles.states
    pd = model.detection_vector(states)
    missed = (1.0 - pd) * w
    m = len(measurements)
    if m == 0:
        per = np.zeros((len(particles), 0))
        clutter = np.zeros(0)
    else:
        per = model.likelihood_matrix(measurements, states)
        per *= (pd * w)[:, None]
        clutter = model.clutter_vector(measurements)
        if np.any(clutter <= 0.0):
            k = int(np.argmax(clutter <= 0.0))
            raise DegenerateModelError(
                f"measurement {k} lies outside the clutter support (c(z) = 0)"
            )
    return CphdConditionalWeights(
        missed=missed,
        per_measurement=per,
        clutter=clutter,
        masses=per.sum(axis=0),
        missed_mass=float(missed.sum()),
        total_mass=particles.total_mass,
        states=states,
    )


def _correctors(cw: CphdConditionalWeights, rho: CardinalityDistribution,
                rho_c: CardinalityDistribution, n_max: int) -> CorrectorTerms:
    ratios = cw.ratios
    m = ratios.size
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho.truncated(n_max).probs)

    e_full = comb._esf_vector(ratios)
    log_e_full = comb._log_e(e_full)

    grid0 = comb.log_upsilon_grid(0, m, cw.missed_mass, cw.total_mass, rho_c, n_max)
    log_upsilon0 = comb.log_upsilon_rows(grid0, log_e_full)
    log_den = comb.log_inner_products(grid0, log_e_full[None, :], log_rho)[0]
    if log_den == -np.inf:
        raise DegenerateModelError(
            "the model assigns zero probability to this measurement set"
        )

    grid1 = comb.log_upsilon_grid(1, m, cw.missed_mass, cw.total_mass, rho_c, n_max)
    grid2 = comb.log_upsilon_grid(2, m, cw.missed_mass, cw.total_mass, rho_c, n_max)
    l1_phi = float(np.exp(
        comb.log_inner_products(grid1, log_e_full[None, :], log_rho)[0] - log_den))
    l2_phi = float(np.exp(
        comb.log_inner_products(grid2, log_e_full[None, :], log_rho)[0] - log_den))

    if m > 0:
        singles = comb.esf_delete_singles(e_full, ratios)
        log_singles = comb._log_e(singles)
        g1 = comb.log_upsilon_grid(1, m - 1, cw.missed_mass, cw.total_mass, rho_c, n_max)
        g2 = comb.log_upsilon_grid(2, m - 1, cw.missed_mass, cw.total_mass, rho_c, n_max)
        l1 = np.exp(comb.log_inner_products(g1, log_singles, log_rho) - log_den)
        l2 = np.exp(comb.log_inner_products(g2, log_singles, log_rho) - log_den)
    else:
        singles = np.zeros((0, 0))
        l1 = np.zeros(0)
        l2 = np.zeros(0)

    l2_pair = np.zeros((m, m))
    if m > 1:
        pk, pl = np.triu_indices(m, k=1)
        pair_tables = comb.esf_delete_pairs(singles, ratios, pk, pl)
        gp = comb.log_upsilon_grid(2, m - 2, cw.missed_mass, cw.total_mass, rho_c, n_max)
        vals = np.exp(comb.log_inner_products(gp, comb._log_e(pair_tables), log_rho)
                      - log_den)
        l2_pair[pk, pl] = vals
        l2_pair[pl, pk] = vals

    return CorrectorTerms(l1_phi, l2_phi, l1, l2, l2_pair, log_upsilon0, float(log_den))


def cphd_correctors(particles: WeightedParticleSet, rho: CardinalityDistribution,
                    measurements: Sequence[Measurement], model: ObservationModel,
                    n_max: int) -> CorrectorTerms:
    """Corrector ratios for the update defined by the given measurement set."""
    cw = cphd_conditional_weights(particles, measurements, model)
    return _correctors(cw, rho, model.clutter_card, n_max)


def cphd_update_cardinality(rho: CardinalityDistribution,
                            upsilon0: comb.UpsilonVector) -> CardinalityDistribution:
    """Posterior cardinality: rho+(n) proportional to Upsilon0(n) rho(n)."""
    if upsilon0.order != 0:
        raise ValueError("cardinality update requires the order-0 vector")
    if len(upsilon0) != len(rho):
        raise ValueError("support mismatch between Upsilon vector and rho")
    weighted = upsilon0.values * rho.probs
    total = weighted.sum()
    if total <= 0.0:
        raise DegenerateModelError(
            "the model assigns zero probability to this measurement set"
        )
    return CardinalityDistribution(weighted / total)


def _update_cardinality_log(rho: CardinalityDistribution,
                            log_upsilon0: np.ndarray) -> CardinalityDistribution:
    with np.errstate(divide="ignore"):
        logw = log_upsilon0 + np.log(rho.truncated(log_upsilon0.size - 1).probs)
    top = logw.max()
    if top == -np.inf:
        raise DegenerateModelError(
            "the model assigns zero probability to this measurement set"
        )
    return CardinalityDistribution(np.exp(logw - top))


def cphd_update_intensity(cw: CphdConditionalWeights,
                          correctors: CorrectorTerms) -> WeightedParticleSet:
    """Updated particles: w_i <- missed_i l1(phi) + sum_k per_meas[i,k]/c_k l1(z_k)."""
    w = cw.missed * correctors.l1_phi
    if cw.per_measurement.shape[1]:
        w = w + cw.per_measurement @ (correctors.l1 / cw.clutter)
    return WeightedParticleSet(w, cw.states)


def cphd_regional_stats(cw: CphdConditionalWeights, correctors: CorrectorTerms,
                        updated: WeightedParticleSet, region: Region) -> RegionalStats:
    """Mean and variance of the target count inside ``region``."""
    if updated.states.shape != cw.states.shape:
        raise ValueError("conditional weights and updated set are misaligned")
    mask = region.mask(cw.states)
    mu_missed = float(cw.missed[mask].sum())
    if cw.per_measurement.shape[1]:
        r = cw.per_measurement[mask].sum(axis=0) / cw.clutter
    else:
        r = np.zeros(0)
    l1, l2 = correctors.l1, correctors.l2
    mean = mu_missed * correctors.l1_phi + float(r @ l1)
    var = (
        mean
        + mu_missed ** 2 * (correctors.l2_phi - correctors.l1_phi ** 2)
        + 2.0 * mu_missed * float(r @ (l2 - l1 * correctors.l1_phi))
        + float(r @ correctors.l2_pair @ r)
        - float(r @ l1) ** 2
    )
    return RegionalStats(mean, max(var, 0.0))


@dataclass(frozen=True)
class CphdUpdateResult:
    particles: WeightedParticleSet
    cardinality: CardinalityDistribution
    conditional: CphdConditionalWeights
    correctors: CorrectorTerms

    def regional_stats(self, region: Region) -> RegionalStats:
        return cphd_regional_stats(self.conditional, self.correctors,
                                   self.particles, region)


def cphd_update(particles: WeightedParticleSet, rho: CardinalityDistribution,
                measurements: Sequence[Measurement], model: ObservationModel,
                n_max: int) -> CphdUpdateResult:
    """One full CPHD data update (weights, cardinality, corrector terms)."""
    cw = cphd_conditional_weights(particles, measurements, model)
    correctors = _correctors(cw, rho, model.clutter_card, n_max)
    updated = cphd_update_intensity(cw, correctors)
    rho_plus = _update_cardinality_log(rho, correctors.log_upsilon0)
    return CphdUpdateResult(updated, rho_plus, cw, correctors)
