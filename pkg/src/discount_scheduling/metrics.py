"""Evaluation metrics for a discount matrix relative to the global relaxation."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateReference
from .model import (
    DiscountMatrix,
    FeasibilityReport,
    Instance,
    as_values,
    check_constraints,
    cost,
    customer_savings,
    emissions,
    normalizations,
)
from .relaxation import profile_emissions

DEFAULT_QUANTILES = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def _zeta(zeta_star):
    return np.asarray(getattr(zeta_star, "zeta", zeta_star), dtype=float)


def relative_cost_error(instance: Instance, z, zeta_star) -> float:
    norms = normalizations(instance)
    ref = profile_emissions(instance, _zeta(zeta_star)) / norms.n0
    if ref == 0:
        raise DegenerateReference("C(zeta*) is zero")
    return abs(cost(instance, z, norms) - ref) / abs(ref)


def co2_reduction_error(instance: Instance, z, zeta_star) -> float:
    e_star = profile_emissions(instance, _zeta(zeta_star))
    e0 = emissions(instance, np.zeros(instance.consumption.shape))
    if not e0 > e_star:
        raise DegenerateReference("E(0) <= E(zeta*): the relaxation offers no reduction")
    return (emissions(instance, z) - e_star) / (e0 - e_star)


def consumption_deviation_std(instance: Instance, z) -> float:
    dev = (instance.consumption * as_values(z)).sum(axis=1) / instance.aggregates.per_customer
    return float(np.sqrt(np.mean(dev**2)))


def avg_discount_changes(instance: Instance, z) -> float:
    # grid indices compare exactly; raw float input compares values exactly
    arr = z.index if isinstance(z, DiscountMatrix) else as_values(z)
    n_c, n_t = arr.shape
    return float((arr[:, 1:] != arr[:, :-1]).sum()) / (n_c * (n_t - 1))


def savings_distribution(instance: Instance, z, quantiles=DEFAULT_QUANTILES):
    s = customer_savings(instance, z).relative
    qs = np.quantile(s, quantiles, method="linear")
    return [(float(q), float(v)) for q, v in zip(quantiles, qs)], float(s.mean())


@dataclass(frozen=True)
class MetricsReport:
    relative_cost_error: float
    co2_reduction_error: float
    consumption_deviation_std: float
    avg_discount_changes: float
    mean_relative_savings: float
    savings_quantiles: list
    feasibility: FeasibilityReport

    def to_dict(self) -> dict:
        d = asdict(self)
        d["savings_quantiles"] = [list(p) for p in self.savings_quantiles]
        d["feasibility"]["power_violations"] = [list(v) for v in self.feasibility.power_violations]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def flat_row(self) -> dict:
        """One CSV-ready row; quantiles become ``savings_q<q>`` columns."""
        f = self.feasibility
        row = {
            "relative_cost_error": self.relative_cost_error,
            "co2_reduction_error": self.co2_reduction_error,
            "consumption_deviation_std": self.consumption_deviation_std,
            "avg_discount_changes": self.avg_discount_changes,
            "mean_relative_savings": self.mean_relative_savings,
        }
        for q, v in self.savings_quantiles:
            row[f"savings_q{q:g}"] = v
        row.update(
            global_deviation=f.global_deviation,
            weighted_global_deviation=f.weighted_global_deviation,
            n_power_violations=len(f.power_violations),
            feasible=f.feasible,
        )
        return row


def full_report(instance: Instance, z, zeta_star, quantiles=DEFAULT_QUANTILES) -> MetricsReport:
    qs, mean_s = savings_distribution(instance, z, quantiles)
    return MetricsReport(
        relative_cost_error=relative_cost_error(instance, z, zeta_star),
        co2_reduction_error=co2_reduction_error(instance, z, zeta_star),
        consumption_deviation_std=consumption_deviation_std(instance, z),
        avg_discount_changes=avg_discount_changes(instance, z),
        mean_relative_savings=mean_s,
        savings_quantiles=qs,
        feasibility=check_constraints(instance, z),
    )


def write_report_csv(report: MetricsReport, path) -> None:
    row = report.flat_row()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
