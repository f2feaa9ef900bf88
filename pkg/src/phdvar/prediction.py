"""SMC prediction step: survival thinning, motion propagation and births.

The data updates are the substance of this package; prediction is standard
SMC plumbing kept deliberately simple: constant-velocity motion with white
acceleration noise, state-independent survival inside the field of view, and
a configurable birth intensity (uniform over the FoV, around the previous
scan's measurements, or from fixed sites).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binom

from .core import (
    CardinalityDistribution,
    Measurement,
    WeightedParticleSet,
)


@dataclass(frozen=True)
class BirthModel:
    """Birth intensity: total mass, count law, and a state sampler."""

    mass: float
    cardinality: CardinalityDistribution
    sampler: Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class MotionModel:
    """Survival, transition and birth pieces of the prediction step."""

    transition: Callable[[np.ndarray, float, np.random.Generator], np.ndarray]
    survival_prob: Callable[[np.ndarray], np.ndarray]
    birth: BirthModel

    def survival_vector(self, states: np.ndarray) -> np.ndarray:
        p = np.asarray(self.survival_prob(states), dtype=float)
        if p.shape != (states.shape[0],):
            p = np.broadcast_to(p, (states.shape[0],)).astype(float)
        return p


def cv_transition(process_noise_std: float):
    """Constant-velocity transition with discrete white acceleration noise."""

    def transition(states, dt, rng):
        out = states.copy()
        if process_noise_std > 0.0:
            acc = rng.normal(0.0, process_noise_std, size=(states.shape[0], 2))
        else:
            acc = np.zeros((states.shape[0], 2))
        out[:, 0:2] += states[:, 2:4] * dt + 0.5 * acc * dt * dt
        out[:, 2:4] += acc * dt
        return out

    return transition


def constant_survival(p_s: float, fov_radius: float | None = None):
    """Constant survival probability, zero outside the FoV when one is given."""

    def survival(states):
        p = np.full(states.shape[0], p_s)
        if fov_radius is not None:
            inside = states[:, 0] ** 2 + states[:, 1] ** 2 <= fov_radius ** 2
            p = np.where(inside, p, 0.0)
        return p

    return survival


def uniform_disc_sampler(fov_radius: float, velocity_std: float):
    """Birth states uniform over the FoV disc with zero-mean velocities."""

    def sampler(rng, count):
        r = fov_radius * np.sqrt(rng.random(count))
        theta = rng.uniform(-np.pi, np.pi, count)
        vel = rng.normal(0.0, velocity_std, size=(count, 2))
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), vel])

    return sampler


def measurement_sites_sampler(measurements: Sequence[Measurement],
                              sigma_range: float, sigma_bearing: float,
                              velocity_std: float, fov_radius: float):
    """Birth states around the previous scan's measurements.

    Positions are drawn in sensor coordinates around each site with the
    sensor's own noise scales (inflated threefold so a target that moved
    since the last scan is still covered); velocities are zero-mean. Falls
    back to the uniform sampler when there are no sites.
    """
    sites = list(measurements)
    uniform = uniform_disc_sampler(fov_radius, velocity_std)

    def sampler(rng, count):
        if not sites:
            return uniform(rng, count)
        which = rng.integers(0, len(sites), count)
        ranges = np.array([z.range for z in sites])[which]
        bearings = np.array([z.bearing for z in sites])[which]
        r = np.maximum(ranges + rng.normal(0.0, 3.0 * sigma_range, count), 0.0)
        b = bearings + rng.normal(0.0, 3.0 * sigma_bearing, count)
        vel = rng.normal(0.0, velocity_std, size=(count, 2))
        return np.column_stack([r * np.cos(b), r * np.sin(b), vel])

    return sampler


def predict_particles(particles: WeightedParticleSet, model: MotionModel,
                      rng, dt: float = 1.0,
                      birth_particles: int = 200) -> WeightedParticleSet:
    """Survival-weighted propagation of the particles plus appended births.

    The survivor weights are scaled by the survival probability, states move
    through the transition with noise from ``rng`` (a seed or Generator), and
    ``birth_particles`` equally-weighted particles carrying the birth mass
    are appended. Fixed seeds give bit-identical output.
    """
    rng = np.random.default_rng(rng)
    weights = particles.weights * model.survival_vector(particles.states)
    states = model.transition(particles.states, dt, rng)
    birth = model.birth
    if birth.mass > 0.0 and birth_particles > 0:
        b_states = birth.sampler(rng, birth_particles)
        b_weights = np.full(birth_particles, birth.mass / birth_particles)
        weights = np.concatenate([weights, b_weights])
        states = np.concatenate([states, b_states], axis=0)
    return WeightedParticleSet(weights, states)


def predict_cardinality(rho: CardinalityDistribution, p_s_effective: float,
                        birth_card: CardinalityDistribution) -> CardinalityDistribution:
    """Survival-thinned cardinality convolved with the birth count law.

    Each of n prior targets survives independently with ``p_s_effective``;
    the result is convolved with the birth cardinality, truncated back to the
    prior's support and renormalised.
    """
    if not 0.0 <= p_s_effective <= 1.0:
        raise ValueError("survival probability must lie in [0, 1]")
    n = np.arange(rho.n_max + 1)
    # thinned[j] = sum_n rho(n) C(n, j) p^j (1-p)^(n-j)
    thin_matrix = binom.pmf(n[:, None], n[None, :], p_s_effective)
    thinned = thin_matrix @ rho.probs
    combined = np.convolve(thinned, birth_card.probs)
    return CardinalityDistribution(combined).truncated(rho.n_max)
