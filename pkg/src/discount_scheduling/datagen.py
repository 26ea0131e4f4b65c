"""Seeded synthetic instances: noisy, shifted, scaled load profiles with PV and a diurnal CO2 curve.

The horizon is a fixed 19-hour window starting at 05:00, sampled into
``n_timesteps`` equal steps (76 steps = 15 minutes).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidConfig
from .model import DiscountScheme, Instance, PenaltyWeights

HORIZON_START_H = 5.0
HORIZON_HOURS = 19.0

RESIDENTIAL_KWH = 8.0  # horizon energy of an unscaled residential profile
INDUSTRIAL_KWH = 60.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_customers: int = 100
    n_timesteps: int = 76
    residential_fraction: float = 0.8
    noise_level: float = 0.2
    shift_max: int = 4
    scale_range: tuple = (0.5, 4.0)
    pv_fraction: float = 0.3
    pv_peak_kw_range: tuple = (0.5, 3.0)
    intensity_range: tuple = (180.0, 420.0)
    dp_fraction: float = 0.1
    elasticity: float = 1.0
    scheme: DiscountScheme = field(default_factory=DiscountScheme)
    penalties: PenaltyWeights = field(default_factory=PenaltyWeights)
    seed: int = 0

    def __post_init__(self):
        if self.n_customers < 1:
            raise InvalidConfig("n_customers must be >= 1")
        if self.n_timesteps < 2:
            raise InvalidConfig("n_timesteps must be >= 2")
        for name in ("residential_fraction", "pv_fraction", "elasticity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {v}")
        if self.noise_level < 0 or self.shift_max < 0:
            raise InvalidConfig("noise_level and shift_max must be nonnegative")
        for name in ("scale_range", "pv_peak_kw_range", "intensity_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise InvalidConfig(f"{name} must be an ordered nonnegative pair, got {(lo, hi)}")
        if self.scale_range[1] <= 0:
            raise InvalidConfig("scale_range must allow positive scaling")
        if not self.intensity_range[0] < self.intensity_range[1]:
            raise InvalidConfig("intensity_range must have min < max")
        if not self.dp_fraction > 0:
            raise InvalidConfig("dp_fraction must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown generator options: {sorted(unknown)}")
        if isinstance(data.get("scheme"), dict):
            data["scheme"] = DiscountScheme(**data["scheme"])
        if isinstance(data.get("penalties"), dict):
            data["penalties"] = PenaltyWeights(**data["penalties"])
        for name in ("scale_range", "pv_peak_kw_range", "intensity_range"):
            if name in data:
                data[name] = tuple(data[name])
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def hours(n_timesteps: int) -> np.ndarray:
    dt = HORIZON_HOURS / n_timesteps
    return HORIZON_START_H + (np.arange(n_timesteps) + 0.5) * dt


def _gauss(h, mu, sigma):
    return np.exp(-0.5 * ((h - mu) / sigma) ** 2)


def base_profiles(n_timesteps: int) -> dict:
    """Normalized residential (morning + evening peaks) and industrial (working-hours plateau) shapes."""
    if n_timesteps < 2:
        raise InvalidConfig("n_timesteps must be >= 2")
    h = hours(n_timesteps)
    residential = 0.25 + 0.9 * _gauss(h, 7.5, 1.2) + 1.6 * _gauss(h, 19.5, 1.8)
    industrial = 0.15 + 1.0 / ((1 + np.exp(-(h - 7.0) / 0.5)) * (1 + np.exp(-(17.0 - h) / 0.5)))
    return {
        "residential": residential / residential.sum(),
        "industrial": industrial / industrial.sum(),
    }


MAX_DRAWS = 64


def intensity_curve(n_timesteps: int, intensity_range, rng: np.random.Generator, demand=None) -> np.ndarray:
    """Diurnal CO2 intensity, optionally blended with aggregate demand.

    High residual demand is served by fossil peakers, so half of the shape
    follows ``demand / max(demand)`` when a demand curve is given.
    """
    h = hours(n_timesteps)
    # diurnal swing peaking in the evening, with a broad solar dip around noon
    shape = 1.0 + 0.1 * np.cos(2 * np.pi * (h - 19.5) / 24.0) - 0.55 * _gauss(h, 12.75, 2.6)
    if demand is not None:
        demand = np.asarray(demand, dtype=float)
        shape = 0.5 * shape + 0.5 * demand / demand.max()
    shape = shape * rng.lognormal(0.0, 0.05, n_timesteps)
    lo, hi = intensity_range
    span = shape.max() - shape.min()
    if span <= 0:
        return np.linspace(lo, hi, n_timesteps)
    return lo + (hi - lo) * (shape - shape.min()) / span


def _emission_spread(consumption, intensity, elasticity) -> float:
    # E(0) - E_min divided by z_max
    sgn = np.sign(intensity - intensity.mean())
    return float(intensity @ (sgn * (elasticity @ consumption)))


def _draw(config: GeneratorConfig, rng: np.random.Generator):
    n_c, n_t = config.n_customers, config.n_timesteps
    profiles = base_profiles(n_t)
    h = hours(n_t)
    dt = HORIZON_HOURS / n_t

    residential = rng.random(n_c) < config.residential_fraction
    base = np.where(
        residential[:, None],
        RESIDENTIAL_KWH * profiles["residential"][None, :],
        INDUSTRIAL_KWH * profiles["industrial"][None, :],
    )
    noise = rng.lognormal(0.0, 1.0, (n_c, n_t))
    load = base * noise**config.noise_level
    shifts = rng.integers(-config.shift_max, config.shift_max + 1, n_c)
    load = np.stack([np.roll(row, s) for row, s in zip(load, shifts)])

    has_pv = rng.random(n_c) < config.pv_fraction
    peak_kw = rng.uniform(*config.pv_peak_kw_range, n_c)
    pv = (has_pv * peak_kw)[:, None] * _gauss(h, 12.5, 2.5)[None, :] * dt
    net = np.clip(load - pv, 0.0, None)
    totals = net.sum(axis=1)
    totals = np.where(totals > 0, totals, load.sum(axis=1))
    # 1.001e-3 of the pre-floor total keeps d >= 1e-3 * D_c / N_T for the post-floor total too
    net = np.maximum(net, 1.001e-3 * totals[:, None] / n_t)

    # scaling is applied last so that scale_range=(k, k) scales every entry by exactly k
    scale = config.scale_range[0] + rng.random(n_c) * (config.scale_range[1] - config.scale_range[0])
    consumption = net * scale[:, None]

    intensity = intensity_curve(n_t, config.intensity_range, rng, consumption.sum(axis=0))
    return consumption, intensity


def generate_instance(config: GeneratorConfig) -> Instance:
    """Draw an instance; draws whose emission spread is not positive are rejected and redrawn.

    The redraws come from the same seeded stream, so the result is a pure
    function of ``config``.
    """
    rng = np.random.default_rng(config.seed)
    elasticity = np.full(config.n_customers, config.elasticity)
    if config.elasticity == 0:
        raise InvalidConfig("elasticity 0 leaves nothing to schedule")
    for _ in range(MAX_DRAWS):
        consumption, intensity = _draw(config, rng)
        if _emission_spread(consumption, intensity, elasticity) > 0:
            break
    else:
        raise InvalidConfig(f"no draw with a positive emission spread in {MAX_DRAWS} attempts")
    dp = np.full(config.n_timesteps, config.dp_fraction * consumption.sum(axis=0).mean())
    return Instance(
        consumption=consumption,
        intensity=intensity,
        elasticity=elasticity,
        power_bound=dp,
        scheme=config.scheme,
        penalties=config.penalties,
    )


def summary(instance: Instance) -> dict:
    agg = instance.aggregates
    return {
        "n_customers": instance.n_customers,
        "n_timesteps": instance.n_timesteps,
        "total_kwh": float(instance.consumption.sum()),
        "peak_to_mean_load": float(agg.per_timestep.max() / agg.per_timestep.mean()),
        "largest_customer_share": float(agg.per_customer.max() / agg.per_customer.sum()),
        "intensity_min": float(instance.intensity.min()),
        "intensity_max": float(instance.intensity.max()),
        "power_bound": float(instance.power_bound[0]),
    }
