"""Discrete-level battery chain of the accumulate-then-forward relay.

The battery holds one of ``Q + 1`` levels ``i * C / Q``. Harvested energy
rounds down to a level, the energy needed for an outage-free forward rounds
up. Each block the relay either harvests (not enough energy), harvests
interference only (enough energy but the decode failed) or forwards and
discharges. The transition matrix below encodes those three behaviours; its
stationary law gives the long-run outage and throughput.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import (
    SystemConfig,
    cci_energy_gamma_params,
    cdf_required_power,
    eh_energy_gamma_params,
)
from .distributions import first_hop_outage_prob

ROW_SUM_TOL = 1e-6
COND_LIMIT = 1e12

INFEASIBLE = math.inf


class TransitionMatrixError(ArithmeticError):
    """A row of the assembled transition matrix does not sum to one."""

    def __init__(self, row: int, total: float):
        super().__init__(f"row {row} of the transition matrix sums to {total!r}")
        self.row = row
        self.total = total


class ReducibleChain(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BatteryModel:
    capacity: float
    levels: int

    def __post_init__(self):
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValueError(f"level count must be a positive integer, got {self.levels}")
        object.__setattr__(self, "levels", int(self.levels))

    @property
    def n_states(self) -> int:
        return self.levels + 1

    @property
    def step(self) -> float:
        return self.capacity / self.levels

    def level_energy(self, i):
        return i * self.capacity / self.levels

    def energies(self) -> np.ndarray:
        return np.arange(self.levels + 1) * self.capacity / self.levels


def discretize_harvest(x: float, b: BatteryModel) -> int:
    """Highest level strictly below ``x`` (0 when ``x`` is at most one step, ``Q`` above ``C``)."""
    if x < 0:
        raise ValueError(f"harvested energy must be nonnegative, got {x}")
    return max(bisect.bisect_left(b.energies(), x) - 1, 0)


def discretize_harvest_array(x, b: BatteryModel) -> np.ndarray:
    return np.maximum(np.searchsorted(b.energies(), x, side="left") - 1, 0)


def required_energy_level(p_r: float, b: BatteryModel):
    """Lowest level holding at least ``p_r / 2``, or :data:`INFEASIBLE` above capacity.

    The factor one half is the forwarding slot length.
    """
    if not p_r > 0:
        raise ValueError(f"relay power must be positive, got {p_r}")
    need = 0.5 * p_r
    if need > b.capacity:
        return INFEASIBLE
    return bisect.bisect_left(b.energies(), need)


def required_energy_level_array(p_r, b: BatteryModel) -> np.ndarray:
    """Vector form of :func:`required_energy_level`; infeasible blocks map to ``Q + 1``."""
    need = 0.5 * np.asarray(p_r, dtype=float)
    lvl = np.searchsorted(b.energies(), need, side="left")
    return np.where(need > b.capacity, b.levels + 1, lvl)


@dataclass(frozen=True)
class ModelInputs:
    """Distributions feeding the transition matrix.

    ``eh_dist`` / ``cci_dist`` expose ``cdf``; ``power_cdf`` is the CDF of the
    outage-free relay power and ``first_hop_outage`` the probability that the
    relay fails to decode.
    """

    eh_dist: object
    cci_dist: object
    power_cdf: Callable
    first_hop_outage: float

    def __post_init__(self):
        if not 0.0 <= self.first_hop_outage <= 1.0:
            raise ValueError(f"first-hop outage {self.first_hop_outage} outside [0, 1]")


def model_inputs(cfg: SystemConfig, outage_method: str = "auto") -> ModelInputs:
    return ModelInputs(
        eh_dist=eh_energy_gamma_params(cfg),
        cci_dist=cci_energy_gamma_params(cfg),
        power_cdf=lambda x: cdf_required_power(x, cfg),
        first_hop_outage=float(first_hop_outage_prob(cfg, outage_method)),
    )


# --- the transition cases --------------------------------------------------
# fe1[k], fe2[k]: harvested-energy CDFs at k*C/Q; fx[k]: relay power CDF at
# 2*k*C/Q; po: first-hop outage. Indices run over 0..Q.

def _empty_to(j, q, fe1, fe2, fx, po):
    if j == q:
        return 1.0 - fe1[q]
    return fe1[j + 1] - fe1[j]


def _unchanged(i, fe1, fe2, fx, po):
    return (1.0 - fx[i]) * fe1[1] + fx[i] * fe2[1] * po


def _charge(i, j, fe1, fe2, fx, po):
    d = j - i
    return ((1.0 - fx[i]) * (fe1[d + 1] - fe1[d])
            + po * fx[i] * (fe2[d + 1] - fe2[d]))


def _charge_to_full(i, q, fe1, fe2, fx, po):
    d = q - i
    return (1.0 - fx[i]) * (1.0 - fe1[d]) + po * fx[i] * (1.0 - fe2[d])


def _full_stays(q, fe1, fe2, fx, po):
    return (1.0 - fx[q]) + po * fx[q]


def _discharge(i, j, fe1, fe2, fx, po):
    d = i - j
    return (1.0 - po) * (fx[d] - fx[d - 1])


def build_transition_matrix(inputs: ModelInputs, b: BatteryModel) -> np.ndarray:
    """Row-stochastic ``(Q+1, Q+1)`` battery transition matrix.

    Rows are checked, never renormalised: a row off by more than
    ``ROW_SUM_TOL`` raises :class:`TransitionMatrixError`.
    """
    q = b.levels
    grid = b.energies()
    fe1 = np.asarray(inputs.eh_dist.cdf(grid), dtype=float)
    fe2 = np.asarray(inputs.cci_dist.cdf(grid), dtype=float)
    fx = np.asarray(inputs.power_cdf(2.0 * grid), dtype=float)
    fx[0] = 0.0
    po = float(inputs.first_hop_outage)
    args = (fe1, fe2, fx, po)

    z = np.zeros((q + 1, q + 1))
    for j in range(q + 1):
        z[0, j] = _empty_to(j, q, *args)
    for i in range(1, q):
        for j in range(i):
            z[i, j] = _discharge(i, j, *args)
        z[i, i] = _unchanged(i, *args)
        for j in range(i + 1, q):
            z[i, j] = _charge(i, j, *args)
        z[i, q] = _charge_to_full(i, q, *args)
    for j in range(q):
        z[q, j] = _discharge(q, j, *args)
    z[q, q] = _full_stays(q, *args)

    # rounding can leave -1e-17 on differences of nearly equal CDF values
    z[(z < 0) & (z > -1e-14)] = 0.0
    if np.any(z < 0) or np.any(z > 1 + 1e-12):
        row = int(np.argwhere((z < 0) | (z > 1 + 1e-12))[0, 0])
        raise TransitionMatrixError(row, float(z[row].sum()))
    sums = z.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise TransitionMatrixError(int(bad[0]), float(sums[bad[0]]))
    z.setflags(write=False)
    return z


def stationary_distribution(z: np.ndarray) -> np.ndarray:
    """Solve ``pi = Z^T pi`` with ``sum(pi) = 1`` as ``(Z^T - I + B) pi = 1``.

    ``B`` is the all-ones matrix. Adding it swamps transition probabilities
    far below machine epsilon, so states with vanishing mass can come back
    as round-off of either sign; in that case the law is recomputed by GTH
    elimination, which keeps every component nonnegative.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    a = z.T - np.eye(n) + np.ones((n, n))
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ReducibleChain(f"stationary system is singular or ill-conditioned (cond={cond:.3g})")
    pi = np.linalg.solve(a, np.ones(n))
    if pi.min() < 0:
        try:
            pi = stationary_gth(z)
        except ReducibleChain:
            pi = np.clip(pi, 0.0, None)
            pi /= pi.sum()
    return pi


def stationary_gth(z: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman state reduction (subtraction-free)."""
    a = np.array(z, dtype=float)
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        if s <= 0:
            raise ReducibleChain(f"state {k} has no transitions to lower states")
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
        if pi[k] > 1e100:
            # the recursion is linear, rescaling keeps it finite
            pi[:k + 1] /= pi[k]
    return pi / pi.sum()


def outage_probability(pi: np.ndarray, z: np.ndarray) -> float:
    """Stationary probability of not discharging (no delivery) in a block."""
    pi = np.asarray(pi)
    z = np.asarray(z)
    if pi.shape[0] != z.shape[0]:
        raise ValueError("dimension mismatch between pi and Z")
    stay_or_charge = np.triu(z).sum(axis=1)
    return float(min(max(pi @ stay_or_charge, 0.0), 1.0))


def throughput(p_out: float, rate: float) -> float:
    if not 0.0 <= p_out <= 1.0:
        raise ValueError(f"outage probability {p_out} outside [0, 1]")
    return rate * (1.0 - p_out)


@dataclass(frozen=True)
class AnalyticReport:
    pi: np.ndarray
    outage: float
    throughput: float
    transition: np.ndarray
    inputs: ModelInputs


def analytic_pipeline(cfg: SystemConfig, b: BatteryModel, outage_method: str = "auto") -> AnalyticReport:
    inputs = model_inputs(cfg, outage_method)
    z = build_transition_matrix(inputs, b)
    pi = stationary_distribution(z)
    p_out = outage_probability(pi, z)
    return AnalyticReport(pi=pi, outage=p_out, throughput=throughput(p_out, cfg.rate),
                          transition=z, inputs=inputs)
