"""Global relaxation: effective discounts and the exact solution of the global LP.

In the substituted variables ``u_t = D~_t * zeta_t`` the LP is

    maximize  sum_t I_t u_t   s.t.  -b_t <= u_t <= b_t,  sum_t u_t = 0

with ``b_t = min(dp_t, z_max * D~_t)``. It is solved exactly by a threshold
fill: start every ``u_t`` at ``-b_t`` and raise timesteps in order of
decreasing intensity until the equality is met.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ZeroMutableConsumption
from .model import Instance, as_values, emissions


@dataclass(frozen=True, eq=False)
class EffectiveDiscountProfile:
    zeta: np.ndarray
    achieved_emissions: float
    threshold: float  # intensity level separating raised from lowered timesteps
    interior: int | None = None  # timestep strictly inside its box, if any

    @property
    def n_timesteps(self) -> int:
        return self.zeta.shape[0]


def _mutable(instance: Instance) -> np.ndarray:
    dm = instance.aggregates.mutable
    if (dm <= 0).any():
        raise ZeroMutableConsumption(f"zero mutable consumption at timesteps {np.flatnonzero(dm <= 0).tolist()}")
    return dm


def effective_discount(instance: Instance, z) -> np.ndarray:
    dm = _mutable(instance)
    z = as_values(z)
    return instance.elasticity @ (z * instance.consumption) / dm


def box_bounds(instance: Instance) -> np.ndarray:
    return np.minimum(instance.power_bound, instance.scheme.z_max * _mutable(instance))


def profile_emissions(instance: Instance, zeta) -> float:
    agg = instance.aggregates
    return float(instance.intensity @ (agg.per_timestep - agg.mutable * np.asarray(zeta)))


def solve_global(instance: Instance) -> EffectiveDiscountProfile:
    dm = _mutable(instance)
    I = instance.intensity
    n_t = I.shape[0]
    if np.all(I == I[0]):
        zeta = np.zeros(n_t)
        return EffectiveDiscountProfile(zeta, profile_emissions(instance, zeta), float(I[0]), None)

    b = box_bounds(instance)
    u = -b.copy()
    budget = float(b.sum())  # total raise needed so that sum(u) == 0
    # decreasing intensity; within ties, higher index first so the lowest index absorbs the remainder
    order = np.lexsort((-np.arange(n_t), -I))
    interior = None
    pivot = order[-1]
    for t in order:
        raise_by = 2.0 * b[t]
        if budget >= raise_by:
            u[t] = b[t]
            budget -= raise_by
            continue
        pivot = t
        if budget > 0:
            u[t] = -b[t] + budget
            interior = int(t)
        budget = 0.0
        break
    # u sums to zero up to rounding; push the rounding error into the pivot
    drift = u.sum()
    if interior is not None:
        u[interior] -= drift
    zeta = u / dm
    zeta.setflags(write=False)
    return EffectiveDiscountProfile(zeta, profile_emissions(instance, zeta), float(I[pivot]), interior)


def kkt_violations(instance: Instance, profile: EffectiveDiscountProfile, rtol: float = 1e-9) -> list:
    """Timesteps that break the threshold structure of an optimal LP solution."""
    b = box_bounds(instance)
    u = profile.zeta * instance.aggregates.mutable
    mu = profile.threshold
    tol = rtol * max(float(b.max()), 1e-300)
    bad = []
    for t, (ut, bt, it) in enumerate(zip(u, b, instance.intensity)):
        if it > mu and abs(ut - bt) > tol:
            bad.append(t)
        elif it < mu and abs(ut + bt) > tol:
            bad.append(t)
    if abs(u.sum()) > rtol * float(b.sum()):
        bad.append(-1)
    return bad


def verify_lower_bound(instance: Instance, zeta_star, z) -> bool:
    if isinstance(zeta_star, EffectiveDiscountProfile):
        zeta_star = zeta_star.zeta
    e_star = profile_emissions(instance, zeta_star)
    e0 = emissions(instance, np.zeros(instance.consumption.shape))
    return e_star <= emissions(instance, z) + 1e-9 * e0


def write_zeta_csv(profile: EffectiveDiscountProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestep", "zeta"])
        for t, v in enumerate(profile.zeta):
            w.writerow([t, repr(float(v))])


def read_zeta_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.zeros(len(rows))
    for r in rows:
        out[int(r["timestep"])] = float(r["zeta"])
    return out
