"""Elementary symmetric functions and the detection-count mixture sums that
drive the CPHD corrector terms.

All quantities here are sums of non-negative terms, but their magnitudes mix
factorials of large counts with high powers of measurement ratios, spanning
hundreds of orders of magnitude. The inner products are therefore accumulated
in log space; only O(1) ratios ever leave this module on the filter path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import CardinalityDistribution, ZeroMassError

_RESIDUAL_TOL = 1e-9
_CHUNK = 512


def _logsumexp(a: np.ndarray, axis) -> np.ndarray:
    """log(sum(exp(a))) along ``axis``; -inf entries (excluded terms) are exact."""
    top = np.max(a, axis=axis, keepdims=True)
    top_safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        total = np.sum(np.exp(a - top_safe), axis=axis)
        out = np.squeeze(top_safe, axis=axis) + np.log(total)
    return np.where(np.squeeze(np.isfinite(top), axis=axis), out, -np.inf)


@dataclass(frozen=True)
class EsfTable:
    """Values e_0 .. e_m of the elementary symmetric functions of a set."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0 or v[0] != 1.0 or not np.all(np.isfinite(v)):
            raise ValueError("esf table must be 1-d, finite, with e_0 = 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class UpsilonVector:
    """Values of one detection-count mixture sum over n = 0 .. n_max."""

    values: np.ndarray
    order: int

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise ValueError("values must be 1-d, finite and non-negative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _esf_vector(xi: np.ndarray) -> np.ndarray:
    """e_0..e_m by the multiply-add recursion, one pass per appended element."""
    m = xi.size
    e = np.zeros(m + 1)
    e[0] = 1.0
    for j in range(m):
        e[1 : j + 2] = e[1 : j + 2] + xi[j] * e[0 : j + 1]
    return e


def esf_all(xi) -> EsfTable:
    """Elementary symmetric functions of every order of a non-negative set."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1:
        raise ValueError("input must be a 1-d sequence")
    if xi.size and (np.any(xi < 0.0) or not np.all(np.isfinite(xi))):
        raise ValueError("inputs must be finite and non-negative")
    return EsfTable(_esf_vector(xi))


def esf_delete_singles(e_full: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Tables e_d(xi minus xi[k]) for every k, by dividing the factor out.

    Row k holds e_0..e_{m-1} of the set without element k. Division runs
    forward (stable for small factors) or backward (stable for large ones);
    rows failing the closure residual are recomputed from scratch.
    """
    m = xi.size
    out = np.empty((m, m))
    if m == 0:
        return out
    out[:, 0] = 1.0
    if m == 1:
        return out

    fwd = np.abs(xi) < 1.0
    bwd = ~fwd
    if np.any(fwd):
        v = xi[fwd].reshape(-1, 1)
        rows = out[fwd]
        for d in range(1, m):
            rows[:, d] = e_full[d] - v[:, 0] * rows[:, d - 1]
        out[fwd] = rows
        # closure: e_m must be reproduced by the removed factor
        resid = np.abs(e_full[m] - xi[fwd] * rows[:, m - 1])
        scale = np.maximum(np.abs(e_full[m]), np.abs(xi[fwd] * rows[:, m - 1])) + 1e-300
        bad_fwd = np.flatnonzero(fwd)[resid > _RESIDUAL_TOL * scale]
    else:
        bad_fwd = np.zeros(0, dtype=int)
    if np.any(bwd):
        v = xi[bwd]
        rows = np.empty((v.size, m))
        rows[:, 0] = 1.0
        rows[:, m - 1] = e_full[m] / v
        for d in range(m - 1, 1, -1):
            rows[:, d - 1] = (e_full[d] - rows[:, d]) / v
        # closure: the recursion must land back on e_0 = 1
        resid0 = np.abs((e_full[1] - rows[:, 1]) / v - 1.0) if m > 1 else np.zeros(v.size)
        out[bwd] = rows
        bad_bwd = np.flatnonzero(bwd)[resid0 > _RESIDUAL_TOL]
    else:
        bad_bwd = np.zeros(0, dtype=int)

    for k in np.concatenate([bad_fwd, bad_bwd]):
        out[k] = _esf_vector(np.delete(xi, k))
    return out


def esf_delete_pairs(singles: np.ndarray, xi: np.ndarray,
                     pair_k: np.ndarray, pair_l: np.ndarray) -> np.ndarray:
    """Tables e_d(xi minus {xi[k], xi[l]}) for the given index pairs.

    Each row divides xi[l] out of the single-deletion table of k, using the
    same direction switch and residual fallback as ``esf_delete_singles``.
    """
    m = xi.size
    P = pair_k.size
    out = np.empty((P, m - 1))
    if P == 0:
        return out
    out[:, 0] = 1.0
    if m == 2:
        return out

    base = singles[pair_k]  # (P, m): e_d of the set without k
    v_all = xi[pair_l]
    fwd = np.abs(v_all) < 1.0
    bwd = ~fwd
    bad = []
    if np.any(fwd):
        idx = np.flatnonzero(fwd)
        v = v_all[idx]
        rows = np.empty((idx.size, m - 1))
        rows[:, 0] = 1.0
        for d in range(1, m - 1):
            rows[:, d] = base[idx, d] - v * rows[:, d - 1]
        resid = np.abs(base[idx, m - 1] - v * rows[:, m - 2])
        scale = np.maximum(np.abs(base[idx, m - 1]), np.abs(v * rows[:, m - 2])) + 1e-300
        out[idx] = rows
        bad.append(idx[resid > _RESIDUAL_TOL * scale])
    if np.any(bwd):
        idx = np.flatnonzero(bwd)
        v = v_all[idx]
        rows = np.empty((idx.size, m - 1))
        rows[:, 0] = 1.0
        rows[:, m - 2] = base[idx, m - 1] / v
        for d in range(m - 2, 1, -1):
            rows[:, d - 1] = (base[idx, d] - rows[:, d]) / v
        resid0 = np.abs((base[idx, 1] - rows[:, 1]) / v - 1.0)
        out[idx] = rows
        bad.append(idx[resid0 > _RESIDUAL_TOL])

    for p in np.concatenate(bad) if bad else ():
        out[p] = _esf_vector(np.delete(xi, [pair_k[p], pair_l[p]]))
    return out


_LF_CACHE = gammaln(np.arange(2) + 1.0)


def _log_factorials(top: int) -> np.ndarray:
    """Cached log k! for k = 0..top (at least)."""
    global _LF_CACHE
    if _LF_CACHE.size <= top:
        _LF_CACHE = gammaln(np.arange(max(top + 1, 2 * _LF_CACHE.size)) + 1.0)
    return _LF_CACHE


def _log_clutter_card(rho_c: CardinalityDistribution, size: int) -> np.ndarray:
    """log rho_c(0..size), padding with -inf beyond the stored support."""
    out = np.full(size + 1, -np.inf)
    upto = min(size, rho_c.n_max)
    with np.errstate(divide="ignore"):
        out[: upto + 1] = np.log(rho_c.probs[: upto + 1])
    return out


def log_upsilon_grid(u: int, set_size: int, mass_missed: float, mass_total: float,
                     rho_c: CardinalityDistribution, n_max: int) -> np.ndarray:
    """Log of the (n, d) summands of the order-u mixture sum, e_d excluded.

    Entry [n, d] is the log of
        n! (M-d)! / (n-(d+u))! * rho_c(M-d) * mass_missed^(n-(d+u)) / mass_total^n
    with M = set_size; excluded terms (n - (d+u) < 0) are -inf.
    """
    if mass_total <= 0.0:
        raise ZeroMassError("total predicted mass must be positive")
    n = np.arange(n_max + 1)[:, None]
    d = np.arange(set_size + 1)[None, :]
    k = n - d - u
    valid = k >= 0
    lf = _log_factorials(max(n_max, set_size) + 1)
    log_rc = _log_clutter_card(rho_c, set_size)
    if mass_missed > 0.0:
        pow_term = k * np.log(mass_missed)
    else:
        # 0^0 = 1 convention: a zero exponent contributes nothing
        pow_term = np.where(k == 0, 0.0, -np.inf)
    grid = (
        lf[n]
        - lf[np.where(valid, k, 0)]
        + lf[set_size - d]
        + log_rc[set_size - d]
        + pow_term
        - n * np.log(mass_total)
    )
    return np.where(valid, grid, -np.inf)


def _log_e(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(values, 0.0))


def log_upsilon_rows(grid: np.ndarray, log_e: np.ndarray) -> np.ndarray:
    """log Upsilon(n) over n, for one e_d table (summing the grid over d)."""
    return _logsumexp(grid + log_e[None, :], axis=1)


def log_inner_products(grid: np.ndarray, log_e_batch: np.ndarray,
                       log_rho: np.ndarray) -> np.ndarray:
    """log <Upsilon, rho> for a batch of e_d tables sharing one grid.

    ``grid`` is (N, M+1), ``log_e_batch`` (B, M+1), ``log_rho`` (N,); returns (B,).
    """
    B = log_e_batch.shape[0]
    out = np.empty(B)
    weighted = grid + log_rho[:, None]  # (N, M+1)
    for start in range(0, B, _CHUNK):
        block = log_e_batch[start : start + _CHUNK]  # (b, M+1)
        terms = weighted[None, :, :] + block[:, None, :]
        out[start : start + block.shape[0]] = _logsumexp(terms, axis=(1, 2))
    return out


def upsilon_vector(u: int, mass_missed: float, mass_total: float,
                   per_meas_ratios, rho_c: CardinalityDistribution,
                   n_max: int) -> UpsilonVector:
    """Order-u mixture sum over n = 0..n_max for one measurement set."""
    if u not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    ratios = np.asarray(per_meas_ratios, dtype=float)
    if mass_total <= 0.0:
        raise ZeroMassError("total predicted mass must be positive")
    grid = log_upsilon_grid(u, ratios.size, mass_missed, mass_total, rho_c, n_max)
    log_rows = log_upsilon_rows(grid, _log_e(_esf_vector(ratios)))
    return UpsilonVector(np.exp(log_rows), u)


def upsilon(u: int, mass_missed: float, mass_total: float, per_meas_ratios,
            rho_c: CardinalityDistribution, n: int) -> float:
    """Single value of the order-u mixture sum at cardinality n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return float(upsilon_vector(u, mass_missed, mass_total,
                                per_meas_ratios, rho_c, n).values[n])


def upsilon_inner(uv: UpsilonVector, rho: CardinalityDistribution) -> float:
    """Inner product sum_n Upsilon(n) rho(n) over a shared 0..n_max support."""
    if len(uv) != len(rho):
        raise ValueError(
            f"support mismatch: vector spans 0..{len(uv) - 1}, rho spans 0..{rho.n_max}"
        )
    return float(np.dot(uv.values, rho.probs))
