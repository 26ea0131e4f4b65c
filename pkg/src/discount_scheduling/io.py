"""File formats: instance JSON and discount-matrix CSV.

Floats are written with ``repr`` so a read after a write is bit-exact.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidInstance, LengthMismatch
from .model import DiscountMatrix, DiscountScheme, Instance, PenaltyWeights

FORMAT_VERSION = 1


def instance_to_dict(instance: Instance) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "n_customers": instance.n_customers,
        "n_timesteps": instance.n_timesteps,
        "scheme": {"z_max": instance.scheme.z_max, "n_categories": instance.scheme.n_categories},
        "penalties": {
            "lambda1": instance.penalties.lambda1,
            "lambda2": instance.penalties.lambda2,
            "lambda3": instance.penalties.lambda3,
        },
        "flat_tariff": instance.flat_tariff,
        "intensity": instance.intensity.tolist(),
        "power_bound": instance.power_bound.tolist(),
        "elasticity": instance.elasticity.tolist(),
        "consumption": instance.consumption.tolist(),
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        return Instance(
            consumption=np.asarray(data["consumption"], dtype=float),
            intensity=np.asarray(data["intensity"], dtype=float),
            elasticity=np.asarray(data["elasticity"], dtype=float),
            power_bound=np.asarray(data["power_bound"], dtype=float),
            scheme=DiscountScheme(**data.get("scheme", {})),
            penalties=PenaltyWeights(**data.get("penalties", {})),
            flat_tariff=float(data.get("flat_tariff", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInstance(f"malformed instance document: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_instance(instance: Instance, path) -> None:
    atomic_write_text(path, json.dumps(instance_to_dict(instance), indent=1) + "\n")


def read_instance(path) -> Instance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInstance(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


def write_discounts(z: DiscountMatrix, path) -> None:
    vals = z.values
    lines = ["customer,timestep,discount"]
    for c in range(vals.shape[0]):
        for t in range(vals.shape[1]):
            lines.append(f"{c},{t},{float(vals[c, t])!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_discounts(path, instance: Instance) -> DiscountMatrix:
    """Read a long-format discount CSV; every cell must be present exactly once."""
    shape = instance.consumption.shape
    vals = np.full(shape, np.nan)
    seen = np.zeros(shape, dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                c, t, v = int(row["customer"]), int(row["timestep"]), float(row["discount"])
            except (KeyError, TypeError, ValueError) as exc:
                raise LengthMismatch(f"bad discount row {row}: {exc}") from exc
            if not (0 <= c < shape[0] and 0 <= t < shape[1]):
                raise LengthMismatch(f"cell ({c}, {t}) outside instance shape {shape}")
            if seen[c, t]:
                raise LengthMismatch(f"duplicate cell ({c}, {t})")
            seen[c, t] = True
            vals[c, t] = v
    if not seen.all():
        raise LengthMismatch(f"{int((~seen).sum())} of {seen.size} cells missing")
    return DiscountMatrix.from_values(vals, instance.scheme)
