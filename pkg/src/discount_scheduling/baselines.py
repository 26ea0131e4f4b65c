"""Monolithic baseline: one binary problem for the whole instance, solved by annealing.

The global balance equality ``sum_{c,t} z d = 0`` becomes a squared penalty.
Its square couples every pair of bits, so it is kept as a rank-1 term
``mu * (a @ x + b)**2`` next to the sparse QUBO instead of being materialized.
The power bounds are not in the objective; their hinge-squared excess is
reported after the solve and post-processing then restores them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numba
import numpy as np

from .encoding import build_encoding, decode_index
from .errors import TooLarge
from .model import DiscountMatrix, Instance, normalizations, power_deviation
from .postprocess import PostProcessConfig, PostProcessResult, post_process
from .qubo import Qubo, SquareAccumulator
from .relaxation import EffectiveDiscountProfile, solve_global
from .decomposition import add_penalty_terms
from .solvers import DEFAULT_SCHEDULE, AnnealingSchedule, SolverBudget, _restart_seed

MAX_DENSE_PAIRS = 5_000_000


@dataclass(frozen=True, eq=False)
class MonolithicQubo:
    sparse: Qubo
    balance_coef: np.ndarray  # a
    balance_const: float  # b
    balance_weight: float  # mu
    n_timesteps: int
    n_bits: int

    @property
    def n_vars(self) -> int:
        return self.sparse.n_vars

    def energy(self, bits) -> float:
        x = np.asarray(bits, dtype=float)
        s = float(self.balance_coef @ x) + self.balance_const
        return _sparse_energy(self.sparse, x) + self.balance_weight * s * s

    def to_qubo(self, max_pairs: int = MAX_DENSE_PAIRS) -> Qubo:
        """Materialize the rank-1 term; only feasible for small instances."""
        n = self.n_vars
        if n * (n - 1) // 2 > max_pairs:
            raise TooLarge(f"dense balance penalty over {n} bits exceeds {max_pairs} pairs")
        acc = SquareAccumulator(n)
        acc.add_squares([self.balance_const], np.arange(n)[None, :], self.balance_coef[None, :], self.balance_weight)
        dense = acc.build()
        q = self.sparse
        return Qubo(q.linear + dense.linear, q.quadratic + dense.quadratic, q.offset + dense.offset)


def _sparse_energy(q: Qubo, x) -> float:
    return q.offset + float(q.linear @ x) + float(x @ (q.quadratic @ x))


def build_monolithic_qubo(instance: Instance, balance_weight: float = 10.0) -> MonolithicQubo:
    """Emission term + penalties + ``mu * (sum z d / (z_max * sum d))**2``.

    ``mu`` is ``balance_weight`` times the largest emission-term gain any
    assignment can reach, so the balance penalty dominates for weights above 1.
    """
    enc = build_encoding(instance.scheme)
    norms = normalizations(instance)
    n_c, n_t, q = instance.n_customers, instance.n_timesteps, enc.n_bits
    z_max = instance.scheme.z_max
    w = instance.scheme.step * np.asarray(enc.weights, dtype=float)
    d = instance.consumption
    var = np.arange(n_c * n_t * q).reshape(n_c, n_t, q)
    acc = SquareAccumulator(n_c * n_t * q)

    # E(z)/n0 = sum I d (1 - chi z) / n0 with z = w @ x - z_max
    slope = -(instance.intensity[None, :] * instance.elasticity[:, None] * d) / norms.n0
    acc.add_linear(var, slope[:, :, None] * w, const=float((instance.intensity * d.sum(axis=0)).sum()) / norms.n0
                   - z_max * float(slope.sum()))
    add_penalty_terms(acc, instance, np.arange(n_c), var, w, norms)

    scale = z_max * float(d.sum())
    a = (d[:, :, None] * w / scale).ravel()
    b = -z_max * float(d.sum()) / scale
    mu = balance_weight * z_max * float(np.abs(slope).sum())
    return MonolithicQubo(acc.build(), a, b, mu, n_t, q)


@numba.njit(cache=True)
def _anneal_rank1(indptr, indices, data, linear, a, b, mu, betas, seed):
    np.random.seed(seed)
    n = linear.size
    x = np.zeros(n, np.int8)
    for i in range(n):
        if np.random.random() < 0.5:
            x[i] = 1
    h = linear.copy()
    s = b
    for i in range(n):
        if x[i]:
            s += a[i]
            for p in range(indptr[i], indptr[i + 1]):
                h[indices[p]] += data[p]
    e = 0.0
    for i in range(n):
        if x[i]:
            e += 0.5 * (linear[i] + h[i])
    e += mu * s * s
    best_e = e
    best_x = x.copy()
    for beta in betas:
        for i in range(n):
            delta = 1.0 if x[i] == 0 else -1.0
            ds = delta * a[i]
            de = delta * h[i] + mu * ds * (2.0 * s + ds)
            if de <= 0.0 or np.random.random() < np.exp(-beta * de):
                if x[i] == 0:
                    x[i] = 1
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] += data[p]
                else:
                    x[i] = 0
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] -= data[p]
                s += ds
                e += de
        if e < best_e:
            best_e = e
            best_x[:] = x
    x[:] = best_x
    h = linear.copy()
    s = b
    for i in range(n):
        if x[i]:
            s += a[i]
            for p in range(indptr[i], indptr[i + 1]):
                h[indices[p]] += data[p]
    improved = True
    while improved:
        improved = False
        for i in range(n):
            delta = 1.0 if x[i] == 0 else -1.0
            ds = delta * a[i]
            de = delta * h[i] + mu * ds * (2.0 * s + ds)
            if de < 0.0:
                if x[i] == 0:
                    x[i] = 1
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] += data[p]
                else:
                    x[i] = 0
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] -= data[p]
                s += ds
                improved = True
    return x


def _coefficient_scale(mq: MonolithicQubo) -> float:
    """Mean |coefficient| of the materialized problem, computed without materializing it."""
    q = mq.sparse
    a, b, mu = mq.balance_coef, mq.balance_const, mq.balance_weight
    lin = np.abs(q.linear + mu * (2 * b * a + a * a))
    n = a.size
    # mean of |2 mu a_i a_j| over pairs, plus the sparse couplings
    sa = np.abs(a)
    pair_sum = mu * (sa.sum() ** 2 - (sa * sa).sum())
    n_pairs = n * (n - 1) / 2
    total = lin.sum() + pair_sum + np.abs(q.quadratic.data).sum()
    return float(total / (n + n_pairs)) if n else 1.0


def anneal_monolithic(mq: MonolithicQubo, budget: SolverBudget, schedule: AnnealingSchedule = DEFAULT_SCHEDULE):
    adj = mq.sparse.symmetric_adjacency()
    if budget.sweep_count is not None:
        sweeps = int(budget.sweep_count)
    else:
        # every flip also touches the rank-1 accumulator
        per_sweep = schedule.seconds_per_update * (2 * mq.n_vars + adj.nnz)
        sweeps = int(np.clip(budget.time_limit / budget.restarts / per_sweep, schedule.min_sweeps, schedule.max_sweeps))
    scale = _coefficient_scale(mq) or 1.0
    betas = np.geomspace(schedule.beta_start / scale, schedule.beta_end / scale, sweeps)
    best, best_e = None, np.inf
    for r in range(budget.restarts):
        x = _anneal_rank1(
            adj.indptr, adj.indices, adj.data, mq.sparse.linear.copy(),
            mq.balance_coef, mq.balance_const, mq.balance_weight, betas, _restart_seed(budget.seed, r),
        ).astype(np.uint8)
        e = mq.energy(x)
        if e < best_e:
            best, best_e = x, e
    return best, best_e


@dataclass(frozen=True, eq=False)
class MonolithicResult:
    z: DiscountMatrix
    raw: DiscountMatrix
    profile: EffectiveDiscountProfile
    energy: float
    power_hinge_sq: float  # sum_t max(0, |p_t| - dp_t)**2 / dp_t**2 before post-processing
    wall_seconds: float
    postprocess: PostProcessResult | None


def power_hinge_squared(instance: Instance, z) -> float:
    p = power_deviation(instance, z)
    excess = np.maximum(np.abs(p) - instance.power_bound, 0.0) / instance.power_bound
    return float(excess @ excess)


def run_monolithic(
    instance: Instance,
    budget: SolverBudget | None = None,
    balance_weight: float = 10.0,
    postprocess_config: PostProcessConfig | None = PostProcessConfig(),
) -> MonolithicResult:
    started = time.perf_counter()
    budget = budget or SolverBudget(time_limit=0.1 * instance.n_customers)
    profile = solve_global(instance)
    mq = build_monolithic_qubo(instance, balance_weight)
    bits, e = anneal_monolithic(mq, budget)
    enc = build_encoding(instance.scheme)
    idx = decode_index(enc, bits.reshape(instance.n_customers, instance.n_timesteps, enc.n_bits))
    raw = DiscountMatrix(idx, instance.scheme)
    hinge = power_hinge_squared(instance, raw)
    post, z = None, raw
    if postprocess_config is not None:
        post = post_process(instance, raw, profile, postprocess_config)
        z = post.z
    return MonolithicResult(z, raw, profile, float(e), hinge, time.perf_counter() - started, post)
