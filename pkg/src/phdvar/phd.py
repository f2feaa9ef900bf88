"""PHD data update with regional mean and variance of the target count.

The update reweights each particle by a missed-detection term plus one
normalised term per measurement; region statistics are sums of those same
per-particle terms restricted to the region, so they come at no extra model
evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DegenerateModelError,
    Measurement,
    ObservationModel,
    Region,
    RegionalStats,
    WeightedParticleSet,
    ZeroMassError,
)


@dataclass(frozen=True)
class PhdConditionalWeights:
    """Per-particle update terms, aligned with the input particle order.

    ``missed[i]`` is (1 - p_d(x_i)) w_i. Column k of ``per_measurement`` holds
    p_d(x_i) L(z_k|x_i) w_i divided by ``normalizers[k]``, the measurement-k
    denominator (detected mass plus clutter intensity at z_k).
    """

    missed: np.ndarray
    per_measurement: np.ndarray
    normalizers: np.ndarray
    states: np.ndarray


def phd_conditional_weights(particles: WeightedParticleSet,
                            measurements: Sequence[Measurement],
                            model: ObservationModel) -> PhdConditionalWeights:
    """Missed-detection and normalised measurement terms for every particle."""
    if particles.total_mass <= 0.0:
        raise ZeroMassError("PHD update requires positive predicted mass")
    w = particles.weights
    states = particles.states
    pd = model.detection_vector(states)
    missed = (1.0 - pd) * w
    m = len(measurements)
    if m == 0:
        return PhdConditionalWeights(missed, np.zeros((len(particles), 0)),
                                     np.zeros(0), states)
    raw = model.likelihood_matrix(measurements, states)
    raw *= (pd * w)[:, None]
    clutter = model.clutter_rate * model.clutter_vector(measurements)
    normalizers = raw.sum(axis=0) + clutter
    if np.any(normalizers <= 0.0):
        k = int(np.argmax(normalizers <= 0.0))
        raise DegenerateModelError(
            f"measurement {k} has zero detection mass and zero clutter intensity"
        )
    return PhdConditionalWeights(missed, raw / normalizers, normalizers, states)


def phd_update_intensity(cw: PhdConditionalWeights) -> WeightedParticleSet:
    """Updated particle set: w_i <- missed_i + sum_k per_measurement[i, k]."""
    return WeightedParticleSet(cw.missed + cw.per_measurement.sum(axis=1), cw.states)


def phd_regional_stats(cw: PhdConditionalWeights, updated: WeightedParticleSet,
                       region: Region) -> RegionalStats:
    """Mean and variance of the target count inside ``region``.

    Each measurement contributes a regional fraction p_k in [0, 1]; its
    count is Bernoulli-like, adding p_k to the mean and p_k (1 - p_k) to the
    variance, while the missed-detection mass contributes equally to both.
    """
    if updated.states.shape != cw.states.shape:
        raise ValueError("conditional weights and updated set are misaligned")
    mask = region.mask(cw.states)
    mu_missed = float(cw.missed[mask].sum())
    p = cw.per_measurement[mask].sum(axis=0)
    mean = mu_missed + float(p.sum())
    var = mu_missed + float((p * (1.0 - p)).sum())
    return RegionalStats(mean, max(var, 0.0))
