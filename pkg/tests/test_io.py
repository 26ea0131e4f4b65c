import json

import numpy as np
import pytest

from discount_scheduling.datagen import GeneratorConfig, generate_instance
from discount_scheduling.errors import InvalidInstance, LengthMismatch, NotInZ
from discount_scheduling.io import (
    atomic_write_text,
    instance_from_dict,
    instance_to_dict,
    read_discounts,
    read_instance,
    write_discounts,
    write_instance,
)
from discount_scheduling.model import DiscountMatrix, DiscountScheme, PenaltyWeights

from conftest import make_instance, random_z


def test_instance_round_trip_is_bit_exact(tmp_path):
    inst = generate_instance(GeneratorConfig(n_customers=7, n_timesteps=9, seed=1))
    path = tmp_path / "i.json"
    write_instance(inst, path)
    back = read_instance(path)
    np.testing.assert_array_equal(back.consumption, inst.consumption)
    np.testing.assert_array_equal(back.intensity, inst.intensity)
    np.testing.assert_array_equal(back.power_bound, inst.power_bound)
    assert back.scheme == inst.scheme and back.penalties == inst.penalties
    write_instance(back, tmp_path / "j.json")
    assert (tmp_path / "i.json").read_bytes() == (tmp_path / "j.json").read_bytes()


def test_instance_dict_keeps_non_default_settings():
    inst = make_instance([[1, 2]], [1, 2], n_k=3, z_max=0.25, penalties=PenaltyWeights(1, 2, 3))
    back = instance_from_dict(json.loads(json.dumps(instance_to_dict(inst))))
    assert back.scheme == DiscountScheme(0.25, 3)
    assert back.penalties == PenaltyWeights(1, 2, 3)


def test_malformed_instance_documents(tmp_path):
    with pytest.raises(InvalidInstance):
        instance_from_dict({"intensity": [1, 2]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidInstance):
        read_instance(bad)


def test_discount_round_trip(tmp_path, rng):
    inst = make_instance(rng.uniform(0.5, 2, (4, 6)), np.arange(1, 7), n_k=7)
    z = random_z(rng, inst)
    path = tmp_path / "z.csv"
    write_discounts(z, path)
    assert path.read_text().splitlines()[0] == "customer,timestep,discount"
    assert read_discounts(path, inst) == z


def _write_rows(path, rows):
    path.write_text("customer,timestep,discount\n" + "".join(f"{c},{t},{v}\n" for c, t, v in rows))


def test_discount_reader_validates_cells(tmp_path):
    inst = make_instance([[1, 1], [1, 1]], [1, 2])
    p = tmp_path / "z.csv"
    full = [(0, 0, 0.0), (0, 1, 0.25), (1, 0, -0.5), (1, 1, 0.5)]
    _write_rows(p, full[:3])
    with pytest.raises(LengthMismatch):
        read_discounts(p, inst)
    _write_rows(p, full + [(0, 0, 0.0)])
    with pytest.raises(LengthMismatch):
        read_discounts(p, inst)
    _write_rows(p, full[:3] + [(2, 1, 0.0)])
    with pytest.raises(LengthMismatch):
        read_discounts(p, inst)
    _write_rows(p, full[:3] + [(1, 1, 0.1)])
    with pytest.raises(NotInZ):
        read_discounts(p, inst)
    _write_rows(p, full)
    assert read_discounts(p, inst) == DiscountMatrix.from_values([[0, 0.25], [-0.5, 0.5]], inst.scheme)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "out.txt"
    atomic_write_text(p, "a\n")
    atomic_write_text(p, "b\n")
    assert p.read_text() == "b\n"
    assert [x.name for x in tmp_path.iterdir()] == ["out.txt"]
