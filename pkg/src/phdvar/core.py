"""Domain types shared by the filters, the simulator and the oracle.

States live in a 4-d position/velocity space, measurements are range-bearing
pairs, and the multi-target quantities (weighted particle sets, cardinality
distributions, regions, sensor models) are array-backed so that the SMC
filters and the exact enumeration oracle can operate on the same objects.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

STATE_DIM = 4


class ZeroMassError(ValueError):
    """The predicted intensity carries no mass, so no update is defined."""


class DegenerateModelError(ValueError):
    """The model assigns zero probability to the observed measurement set."""


class TailMassWarning(UserWarning):
    """Probability mass beyond the cardinality truncation was renormalised away."""


class State(NamedTuple):
    """Single-target state: planar position (m) and velocity (m/s)."""

    x: float
    y: float
    vx: float
    vy: float


class Measurement(NamedTuple):
    """Range-bearing measurement: range in meters, bearing in (-pi, pi]."""

    range: float
    bearing: float


class RegionalStats(NamedTuple):
    """Mean and variance of the target count inside one region."""

    mean: float
    var: float


def wrap_angle(theta):
    """Wrap angles into the principal interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    # mod sends the upper boundary to -pi; fold it back so pi stays pi
    if np.ndim(wrapped) == 0:
        return float(np.pi) if wrapped == -np.pi else float(wrapped)
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped


def states_array(states) -> np.ndarray:
    """Stack states (State tuples or 4-vectors) into an (n, 4) float array."""
    if isinstance(states, np.ndarray):
        arr = np.asarray(states, dtype=float)
        if arr.ndim == 1 and arr.size == STATE_DIM:
            arr = arr.reshape(1, STATE_DIM)
        return arr
    rows = [tuple(s) for s in states]
    if not rows:
        return np.zeros((0, STATE_DIM))
    return np.asarray(rows, dtype=float)


# A multi-target configuration is a finite sequence of states; repeats are
# allowed (the counting measure sums multiplicities).
MultiTargetConfig = Sequence[State]


@dataclass(frozen=True)
class Region:
    """Membership predicate over the state space, tagged with a label.

    ``membership`` maps an (n, 4) state array to an (n,) boolean array; it
    must be pure so that repeated evaluations agree.
    """

    label: str
    membership: Callable[[np.ndarray], np.ndarray]

    def mask(self, states) -> np.ndarray:
        arr = states_array(states)
        out = np.asarray(self.membership(arr), dtype=bool)
        if out.shape != (arr.shape[0],):
            raise ValueError(f"membership returned shape {out.shape} for {arr.shape[0]} states")
        return out

    def contains(self, state) -> bool:
        return bool(self.mask([state])[0])


def full_space(label: str = "all") -> Region:
    return Region(label, lambda s: np.ones(s.shape[0], dtype=bool))


def empty_region(label: str = "empty") -> Region:
    return Region(label, lambda s: np.zeros(s.shape[0], dtype=bool))


def disc_region(cx: float, cy: float, radius: float, label: str | None = None) -> Region:
    """Disc in the position plane, velocity unconstrained."""
    if label is None:
        label = f"disc({cx:g},{cy:g},r={radius:g})"
    r2 = float(radius) ** 2

    def member(s):
        return (s[:, 0] - cx) ** 2 + (s[:, 1] - cy) ** 2 <= r2

    return Region(label, member)


def annulus_region(cx: float, cy: float, r_in: float, r_out: float,
                   label: str | None = None) -> Region:
    if label is None:
        label = f"annulus({cx:g},{cy:g},{r_in:g}..{r_out:g})"
    lo2, hi2 = float(r_in) ** 2, float(r_out) ** 2

    def member(s):
        d2 = (s[:, 0] - cx) ** 2 + (s[:, 1] - cy) ** 2
        return (d2 >= lo2) & (d2 <= hi2)

    return Region(label, member)


def fov_region(radius: float, label: str = "fov") -> Region:
    return disc_region(0.0, 0.0, radius, label=label)


def region_intersection(a: Region, b: Region) -> Region:
    """Region whose members belong to both inputs."""
    return Region(f"{a.label}&{b.label}", lambda s: a.membership(s) & b.membership(s))


def count_in_region(config: MultiTargetConfig, region: Region) -> int:
    """Number of configuration points inside the region (with multiplicity)."""
    arr = states_array(config)
    if arr.shape[0] == 0:
        return 0
    return int(np.count_nonzero(region.mask(arr)))


@dataclass(frozen=True)
class WeightedParticleSet:
    """Weighted particles representing an intensity measure.

    ``weights[i]`` is the mass carried at ``states[i]``; the total mass is the
    expected target number over the whole state space. Ordering is stable and
    meaningful: the update routines return per-particle quantities aligned
    with it.
    """

    weights: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        s = states_array(self.states)
        if w.ndim != 1 or w.shape[0] != s.shape[0]:
            raise ValueError("weights and states must have matching leading length")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("particle weights must be finite and non-negative")
        # already-frozen arrays are safe to share; copy anything writeable
        if w.flags.writeable:
            w = w.copy()
            w.setflags(write=False)
        if s.flags.writeable:
            s = s.copy()
            s.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    def __iter__(self):
        for w, row in zip(self.weights, self.states):
            yield float(w), State(*row)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, State]]) -> "WeightedParticleSet":
        pairs = list(pairs)
        weights = np.array([w for w, _ in pairs], dtype=float)
        states = states_array([s for _, s in pairs])
        return cls(weights, states)

    @classmethod
    def empty(cls) -> "WeightedParticleSet":
        return cls(np.zeros(0), np.zeros((0, STATE_DIM)))


class CardinalityDistribution:
    """Truncated distribution rho(0..n_max) over the target count."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise ValueError("probabilities must be finite and non-negative")
        total = float(p.sum())
        if total <= 0.0:
            raise ValueError("probabilities must carry positive mass")
        p = p / total
        p.setflags(write=False)
        self.probs = p

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __len__(self) -> int:
        return self.probs.size

    def __call__(self, n: int) -> float:
        """rho(n); zero outside the stored support."""
        if 0 <= n < self.probs.size:
            return float(self.probs[n])
        return 0.0

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def variance(self) -> float:
        n = np.arange(self.probs.size)
        m = self.mean()
        return float(np.dot(n * n, self.probs) - m * m)

    def truncated(self, n_max: int) -> "CardinalityDistribution":
        """Drop mass beyond n_max and renormalise, warning on real losses."""
        if n_max >= self.n_max:
            padded = np.zeros(n_max + 1)
            padded[: self.probs.size] = self.probs
            return CardinalityDistribution(padded)
        dropped = float(self.probs[n_max + 1:].sum())
        if dropped > 1e-6:
            warnings.warn(
                f"cardinality truncation at n_max={n_max} drops {dropped:.3g} mass",
                TailMassWarning,
                stacklevel=2,
            )
        return CardinalityDistribution(self.probs[: n_max + 1])

    @classmethod
    def point_mass(cls, n: int, n_max: int | None = None) -> "CardinalityDistribution":
        if n_max is None:
            n_max = n
        if not 0 <= n <= n_max:
            raise ValueError("point mass outside the requested support")
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def poisson(cls, rate: float, n_max: int) -> "CardinalityDistribution":
        """Poisson(rate) truncated at n_max (renormalised, tail warning)."""
        if rate < 0.0:
            raise ValueError("Poisson rate must be non-negative")
        n = np.arange(n_max + 1)
        if rate == 0.0:
            return cls.point_mass(0, n_max)
        logp = n * np.log(rate) - rate - _log_factorials(n_max)
        p = np.exp(logp)
        dropped = 1.0 - float(p.sum())
        if dropped > 1e-6:
            warnings.warn(
                f"Poisson({rate:g}) truncation at n_max={n_max} drops {dropped:.3g} mass",
                TailMassWarning,
                stacklevel=2,
            )
        return cls(p)

    def __repr__(self):
        return f"CardinalityDistribution(n_max={self.n_max}, mean={self.mean():.4g})"


def _log_factorials(n_max: int) -> np.ndarray:
    from scipy.special import gammaln

    return gammaln(np.arange(n_max + 1) + 1.0)


@dataclass(frozen=True)
class ObservationModel:
    """Sensor model: detection, single-target likelihood and clutter.

    ``likelihood(z, states)`` is the density of measurement ``z`` under each
    state row, per (meter x radian) of sensor space. ``clutter_density`` is
    the clutter spatial density at a measurement, ``clutter_card`` the clutter
    cardinality law, and ``clutter_rate`` its mean (the Poisson rate in the
    PHD case).
    """

    detection_prob: Callable[[np.ndarray], np.ndarray]
    likelihood: Callable[[Measurement, np.ndarray], np.ndarray]
    clutter_density: Callable[[Measurement], float]
    clutter_card: CardinalityDistribution
    clutter_rate: float
    likelihood_batch: Callable[[Sequence[Measurement], np.ndarray], np.ndarray] | None = None

    def detection_vector(self, states: np.ndarray) -> np.ndarray:
        p = np.asarray(self.detection_prob(states), dtype=float)
        if p.shape != (states.shape[0],):
            p = np.broadcast_to(p, (states.shape[0],)).astype(float)
        return p

    def likelihood_matrix(self, measurements: Sequence[Measurement],
                          states: np.ndarray) -> np.ndarray:
        """(J, m) matrix of single-target likelihood values."""
        if self.likelihood_batch is not None:
            return np.asarray(self.likelihood_batch(measurements, states), dtype=float)
        J = states.shape[0]
        m = len(measurements)
        out = np.empty((J, m))
        for k, z in enumerate(measurements):
            out[:, k] = self.likelihood(z, states)
        return out

    def clutter_vector(self, measurements: Sequence[Measurement]) -> np.ndarray:
        return np.array([self.clutter_density(z) for z in measurements], dtype=float)
