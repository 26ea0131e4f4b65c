import numpy as np
import pytest
from hypothesis import strategies as st

from discount_scheduling.model import DiscountMatrix, DiscountScheme, Instance, PenaltyWeights


def make_instance(d, intensity, chi=None, dp=None, z_max=0.5, n_k=5, penalties=None, strict=True):
    d = np.asarray(d, dtype=float)
    chi = np.ones(d.shape[0]) if chi is None else chi
    dp = np.full(d.shape[1], 1e9) if dp is None else dp
    return Instance(
        consumption=d,
        intensity=np.asarray(intensity, dtype=float),
        elasticity=np.asarray(chi, dtype=float),
        power_bound=np.asarray(dp, dtype=float),
        scheme=DiscountScheme(z_max, n_k),
        penalties=penalties or PenaltyWeights(),
        strict=strict,
    )


def random_instance(rng, n_c, n_t, n_k=5, z_max=0.5, dp_scale=None):
    """Instance with positive data and a positive emission normalization (resampled until it has one)."""
    while True:
        d = rng.uniform(0.1, 3.0, (n_c, n_t))
        intensity = rng.uniform(100, 500, n_t)
        intensity[0], intensity[-1] = 100.0, 500.0
        chi = rng.uniform(0.2, 1.0, n_c)
        mut = chi @ d
        dp = mut * (rng.uniform(0.05, 0.3, n_t) if dp_scale is None else dp_scale)
        inst = make_instance(d, intensity, chi, dp, z_max, n_k, strict=False)
        if normalizations_ok(inst):
            return inst.replace(strict=True)


def normalizations_ok(inst):
    sgn = np.sign(inst.intensity - inst.intensity.mean())
    return float(inst.intensity @ (sgn * inst.aggregates.mutable)) > 0


def random_z(rng, instance):
    idx = rng.integers(0, instance.scheme.n_categories, instance.consumption.shape)
    return DiscountMatrix(idx, instance.scheme)


@st.composite
def instances(draw, max_c=4, max_t=5, n_k=st.sampled_from([2, 3, 4, 5, 7])):
    n_c = draw(st.integers(1, max_c))
    n_t = draw(st.integers(2, max_t))
    seed = draw(st.integers(0, 2**32 - 1))
    k = draw(n_k)
    z_max = draw(st.sampled_from([0.25, 0.5, 1.0]))
    return random_instance(np.random.default_rng(seed), n_c, n_t, k, z_max)


@st.composite
def instance_and_z(draw, **kw):
    inst = draw(instances(**kw))
    seed = draw(st.integers(0, 2**32 - 1))
    return inst, random_z(np.random.default_rng(seed), inst)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines recorded via ``record_property``."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
