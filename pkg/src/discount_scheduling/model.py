"""Problem instance, discount grid, objective terms and constraint checks.

Sign convention: a positive discount ``z`` is a price penalty and lowers
consumption, ``d_tilde = (1 - chi * z) * d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateNormalization,
    InvalidInstance,
    InvalidScheme,
    LengthMismatch,
    NotInZ,
    ZeroAlteredConsumption,
)


@dataclass(frozen=True)
class DiscountScheme:
    """Symmetric grid of ``n_categories`` discounts spanning ``[-z_max, z_max]``."""

    z_max: float = 0.5
    n_categories: int = 5

    def __post_init__(self):
        if not (0.0 < self.z_max <= 1.0):
            raise InvalidScheme(f"z_max must lie in (0, 1], got {self.z_max}")
        if int(self.n_categories) != self.n_categories or self.n_categories < 2:
            raise InvalidScheme(f"n_categories must be an integer >= 2, got {self.n_categories}")

    @property
    def step(self) -> float:
        return 2.0 * self.z_max / (self.n_categories - 1)

    @cached_property
    def values(self) -> np.ndarray:
        # z_max * (2i - (N-1)) / (N-1) keeps the grid exactly symmetric
        n = self.n_categories - 1
        i = np.arange(self.n_categories)
        vals = self.z_max * (2 * i - n) / n
        vals.setflags(write=False)
        return vals

    def index_of(self, value: float) -> int:
        """Grid index of ``value``; raises NotInZ unless it is an exact member."""
        v = float(value)
        i = int(round((v + self.z_max) / self.step))
        if 0 <= i < self.n_categories and self.values[i] == v:
            return i
        raise NotInZ(f"{value!r} is not a member of Z={list(self.values)}")

    def indices_of(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        idx = np.rint((values + self.z_max) / self.step).astype(np.int64)
        ok = (idx >= 0) & (idx < self.n_categories)
        ok[ok] &= self.values[idx[ok]] == values[ok]
        if not ok.all():
            bad = values[~ok].ravel()[0]
            raise NotInZ(f"{bad!r} is not a member of Z={list(self.values)}")
        return idx


@dataclass(frozen=True)
class PenaltyWeights:
    lambda1: float = 0.1  # consumption deviation
    lambda2: float = 1e-5  # discount change
    lambda3: float = 1e-4  # discount regularization

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if not getattr(self, name) >= 0:
                raise InvalidInstance(f"{name} must be nonnegative")


class Aggregates(NamedTuple):
    per_customer: np.ndarray  # D_c
    per_timestep: np.ndarray  # D_t
    mutable: np.ndarray  # D~_t = sum_c chi_c d_ct


class NormalizationConstants(NamedTuple):
    n0: float
    n1: float
    n2: float
    n3: float


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Full problem input. Arrays are copied and frozen on construction.

    ``strict=False`` skips the check that the emission normalization is
    positive; only meant for probing degenerate inputs.
    """

    consumption: np.ndarray
    intensity: np.ndarray
    elasticity: np.ndarray
    power_bound: np.ndarray
    scheme: DiscountScheme = field(default_factory=DiscountScheme)
    penalties: PenaltyWeights = field(default_factory=PenaltyWeights)
    flat_tariff: float = 1.0
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        d = _readonly(self.consumption)
        if d.ndim != 2:
            raise InvalidInstance("consumption must be a 2-d (customers x timesteps) array")
        n_c, n_t = d.shape
        set_(self, "consumption", d)
        for name in ("intensity", "power_bound"):
            a = _readonly(getattr(self, name))
            if a.shape != (n_t,):
                raise InvalidInstance(f"{name} must have shape ({n_t},), got {a.shape}")
            set_(self, name, a)
        chi = _readonly(self.elasticity)
        if chi.shape != (n_c,):
            raise InvalidInstance(f"elasticity must have shape ({n_c},), got {chi.shape}")
        set_(self, "elasticity", chi)

        if n_c < 1 or n_t < 2:
            raise InvalidInstance("need at least one customer and two timesteps")
        if not np.all(np.isfinite(d)) or (d < 0).any():
            raise InvalidInstance("consumption must be finite and nonnegative")
        if (d.sum(axis=1) <= 0).any():
            raise InvalidInstance("every customer needs positive total consumption")
        if not np.all(np.isfinite(self.intensity)) or (self.intensity < 0).any():
            raise InvalidInstance("intensity must be finite and nonnegative")
        if ((chi < 0) | (chi > 1)).any() or not np.all(np.isfinite(chi)):
            raise InvalidInstance("elasticity must lie in [0, 1]")
        if not np.all(self.power_bound > 0):
            raise InvalidInstance("power_bound must be positive")
        if not self.flat_tariff > 0:
            raise InvalidInstance("flat_tariff must be positive")
        if self.strict:
            normalizations(self)

    @property
    def n_customers(self) -> int:
        return self.consumption.shape[0]

    @property
    def n_timesteps(self) -> int:
        return self.consumption.shape[1]

    @cached_property
    def aggregates(self) -> Aggregates:
        d = self.consumption
        return Aggregates(
            _readonly(d.sum(axis=1)),
            _readonly(d.sum(axis=0)),
            _readonly(self.elasticity @ d),
        )

    def replace(self, **changes) -> "Instance":
        kw = dict(
            consumption=self.consumption,
            intensity=self.intensity,
            elasticity=self.elasticity,
            power_bound=self.power_bound,
            scheme=self.scheme,
            penalties=self.penalties,
            flat_tariff=self.flat_tariff,
            strict=self.strict,
        )
        kw.update(changes)
        return Instance(**kw)


@dataclass(frozen=True, eq=False)
class DiscountMatrix:
    """Discounts stored as grid indices; ``values`` gives the floats."""

    index: np.ndarray
    scheme: DiscountScheme

    def __post_init__(self):
        idx = _readonly(self.index, dtype=np.int64)
        if idx.ndim != 2:
            raise LengthMismatch("discount matrix must be 2-d")
        if ((idx < 0) | (idx >= self.scheme.n_categories)).any():
            raise NotInZ("grid index out of range")
        object.__setattr__(self, "index", idx)

    @classmethod
    def from_values(cls, values, scheme: DiscountScheme) -> "DiscountMatrix":
        return cls(scheme.indices_of(values), scheme)

    @classmethod
    def constant(cls, shape, value: float, scheme: DiscountScheme) -> "DiscountMatrix":
        return cls(np.full(shape, scheme.index_of(value)), scheme)

    @property
    def values(self) -> np.ndarray:
        return self.scheme.values[self.index]

    @property
    def shape(self):
        return self.index.shape

    def __array__(self, dtype=None, copy=None):
        v = self.values
        return v if dtype is None else v.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, DiscountMatrix):
            return NotImplemented
        return self.scheme == other.scheme and np.array_equal(self.index, other.index)


def as_values(z) -> np.ndarray:
    if isinstance(z, DiscountMatrix):
        return z.values
    return np.asarray(z, dtype=float)


def _check_shape(instance: Instance, z: np.ndarray):
    if z.shape != instance.consumption.shape:
        raise LengthMismatch(
            f"discount matrix shape {z.shape} != consumption shape {instance.consumption.shape}"
        )


def derived_aggregates(instance: Instance) -> Aggregates:
    return instance.aggregates


def altered_consumption(instance: Instance, z) -> np.ndarray:
    z = as_values(z)
    _check_shape(instance, z)
    return (1.0 - instance.elasticity[:, None] * z) * instance.consumption


def emissions(instance: Instance, z) -> float:
    return float(altered_consumption(instance, z).sum(axis=0) @ instance.intensity)


def emissions_lower_bound(instance: Instance) -> float:
    """Naive reference E_min: full penalty above mean intensity, full discount below."""
    I = instance.intensity
    sign = np.sign(I - I.mean())
    z = np.broadcast_to(sign * instance.scheme.z_max, instance.consumption.shape)
    return emissions(instance, z)


def normalizations(instance: Instance) -> NormalizationConstants:
    n_c, n_t = instance.consumption.shape
    zm2 = instance.scheme.z_max**2
    n0 = emissions(instance, np.zeros((n_c, n_t))) - emissions_lower_bound(instance)
    if not n0 > 0:
        raise DegenerateNormalization(
            f"E(0) - E_min = {n0!r} <= 0; no load-shifting signal (constant intensity or zero elasticity?)"
        )
    return NormalizationConstants(n0, n_c * zm2, 4 * n_c * (n_t - 1) * zm2, n_c * n_t * zm2)


class CostTerms(NamedTuple):
    emission: float
    consumption_deviation: float
    discount_change: float
    regularization: float

    @property
    def total(self) -> float:
        return self.emission + self.consumption_deviation + self.discount_change + self.regularization


def cost_terms(instance: Instance, z, norms: NormalizationConstants | None = None) -> CostTerms:
    z = as_values(z)
    _check_shape(instance, z)
    norms = norms or normalizations(instance)
    lam = instance.penalties
    d = instance.consumption
    dev = (d * z).sum(axis=1) / instance.aggregates.per_customer
    return CostTerms(
        emissions(instance, z) / norms.n0,
        lam.lambda1 / norms.n1 * float(dev @ dev),
        lam.lambda2 / norms.n2 * float((np.diff(z, axis=1) ** 2).sum()),
        lam.lambda3 / norms.n3 * float((z**2).sum()),
    )


def cost(instance: Instance, z, norms: NormalizationConstants | None = None) -> float:
    return cost_terms(instance, z, norms).total


@dataclass(frozen=True)
class FeasibilityReport:
    global_deviation: float  # sum_{c,t} z d, unweighted
    weighted_global_deviation: float  # sum_{c,t} chi z d
    power_violations: list  # (t, excess) pairs
    feasible: bool
    tol_global: float
    tol_power: float


def default_tolerances(instance: Instance) -> tuple[float, float]:
    return 1e-6 * float(instance.consumption.sum()), 1e-9 * float(instance.power_bound.max())


def power_deviation(instance: Instance, z) -> np.ndarray:
    """Per-timestep elasticity-weighted deviation ``sum_c chi_c z_ct d_ct``."""
    z = as_values(z)
    _check_shape(instance, z)
    return instance.elasticity @ (z * instance.consumption)


def check_constraints(
    instance: Instance, z, tol_global: float | None = None, tol_power: float | None = None
) -> FeasibilityReport:
    z = as_values(z)
    _check_shape(instance, z)
    dg, dp = default_tolerances(instance)
    tol_global = dg if tol_global is None else tol_global
    tol_power = dp if tol_power is None else tol_power
    g = float((z * instance.consumption).sum())
    p = power_deviation(instance, z)
    excess = np.abs(p) - instance.power_bound
    viol = [(int(t), float(excess[t])) for t in np.flatnonzero(excess > tol_power)]
    return FeasibilityReport(
        global_deviation=g,
        weighted_global_deviation=float(p.sum()),
        power_violations=viol,
        feasible=abs(g) <= tol_global and not viol,
        tol_global=tol_global,
        tol_power=tol_power,
    )


class Savings(NamedTuple):
    delta_v: np.ndarray  # currency, <= 0
    relative: np.ndarray  # s_c >= 0


def customer_savings(instance: Instance, z) -> Savings:
    z = as_values(z)
    _check_shape(instance, z)
    v0 = instance.flat_tariff
    chi = instance.elasticity
    delta_v = -v0 * chi * (z**2 * instance.consumption).sum(axis=1)
    paid = v0 * altered_consumption(instance, z).sum(axis=1)
    if (paid <= 0).any():
        c = int(np.flatnonzero(paid <= 0)[0])
        raise ZeroAlteredConsumption(f"customer {c} has zero total altered consumption")
    return Savings(delta_v, -delta_v / paid)
