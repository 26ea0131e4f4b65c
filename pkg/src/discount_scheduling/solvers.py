"""Classical QUBO sub-solvers: exhaustive search, simulated annealing, random sampling.

Every solver has the signature ``solver(qubo, budget) -> (bits, energy)``
where ``bits`` is a ``uint8`` vector and ``energy == energy(qubo, bits)``.
Ties are broken toward the bit vector that compares smallest from the last
index backwards (the smallest integer when bit ``i`` has weight ``2**i``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidConfig, TooLarge
from .qubo import Qubo, energies, energy


@dataclass(frozen=True)
class SolverBudget:
    time_limit: float | None = None
    sweep_count: int | None = None
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.time_limit is None and self.sweep_count is None:
            raise InvalidConfig("budget needs a time_limit or a sweep_count")
        if self.time_limit is not None and not self.time_limit > 0:
            raise InvalidConfig("time_limit must be positive")
        if self.sweep_count is not None and self.sweep_count < 1:
            raise InvalidConfig("sweep_count must be positive")
        if self.restarts < 1:
            raise InvalidConfig("restarts must be >= 1")

    def split(self, parts: int) -> "SolverBudget":
        """Per-part budget: time is divided evenly, sweep counts are per solve already."""
        if self.time_limit is None:
            return self
        return SolverBudget(self.time_limit / parts, self.sweep_count, self.restarts, self.seed)

    def with_seed(self, seed: int) -> "SolverBudget":
        return SolverBudget(self.time_limit, self.sweep_count, self.restarts, seed)


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric inverse-temperature ladder, in units of 1 / mean |coefficient|."""

    beta_start: float = 0.1
    beta_end: float = 50.0
    # fixed cost model converting time limits to sweeps (keeps runs seed-deterministic)
    seconds_per_update: float = 4e-9
    min_sweeps: int = 10
    max_sweeps: int = 100_000


DEFAULT_SCHEDULE = AnnealingSchedule()


def _restart_seed(seed: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, restart]).generate_state(1)[0])


def _tie_better(a: np.ndarray, b: np.ndarray) -> bool:
    """True if ``a`` precedes ``b`` in the tie-break order (compared from the last index)."""
    diff = np.flatnonzero(a != b)
    return bool(diff.size) and a[diff[-1]] < b[diff[-1]]


def _tie_tol(qubo: Qubo) -> float:
    return 1e-12 * (abs(qubo.offset) + np.abs(qubo.linear).sum() + np.abs(qubo.quadratic.data).sum() + 1.0)


def _pick(candidates, qubo: Qubo):
    """Lowest energy, then the tie-break order."""
    tol = _tie_tol(qubo)
    best_bits, best_e = None, np.inf
    for bits in candidates:
        e = energy(qubo, bits)
        if best_bits is None or e < best_e - tol:
            best_bits, best_e = bits, e
        elif e <= best_e + tol and _tie_better(bits, best_bits):
            best_bits, best_e = bits, min(e, best_e)
    return best_bits, energy(qubo, best_bits)


# -- exhaustive ---------------------------------------------------------------


@numba.njit(cache=True)
def _gray_enumerate(coupling, linear, offset, tol):
    n = linear.size
    x = np.zeros(n, np.int8)
    h = linear.copy()
    e = offset
    best_e = e
    best_key = 0
    key = 0
    for step in range(1, 1 << n):
        b = 0
        s = step
        while (s & 1) == 0:
            s >>= 1
            b += 1
        i = b  # variable i is key bit i
        if x[i] == 0:
            e += h[i]
            x[i] = 1
            for j in range(n):
                h[j] += coupling[i, j]
        else:
            e -= h[i]
            x[i] = 0
            for j in range(n):
                h[j] -= coupling[i, j]
        key ^= 1 << b
        if (step & 4095) == 0:
            # periodic exact recompute bounds floating drift
            e = offset
            for j in range(n):
                h[j] = linear[j]
            for j in range(n):
                if x[j]:
                    for k in range(n):
                        h[k] += coupling[j, k]
            for j in range(n):
                if x[j]:
                    e += 0.5 * (linear[j] + h[j])
        if e < best_e - tol:
            best_e = e
            best_key = key
        elif e <= best_e + tol and key < best_key:
            best_key = key
            if e < best_e:
                best_e = e
    return best_key


def solve_exhaustive(qubo: Qubo, budget: SolverBudget | None = None, max_vars: int = 24):
    n = qubo.n_vars
    if n > max_vars:
        raise TooLarge(f"exhaustive search over {n} variables exceeds max_vars={max_vars}")
    if n == 0:
        return np.zeros(0, np.uint8), qubo.offset
    coupling = qubo.symmetric_adjacency().toarray()
    key = _gray_enumerate(coupling, qubo.linear.copy(), qubo.offset, 1e3 * _tie_tol(qubo))
    bits = np.array([(key >> i) & 1 for i in range(n)], dtype=np.uint8)
    return bits, energy(qubo, bits)


# -- simulated annealing ------------------------------------------------------


@numba.njit(cache=True)
def _anneal(indptr, indices, data, linear, offset, betas, seed):
    np.random.seed(seed)
    n = linear.size
    x = np.zeros(n, np.int8)
    for i in range(n):
        if np.random.random() < 0.5:
            x[i] = 1
    h = linear.copy()
    for i in range(n):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                h[indices[p]] += data[p]
    e = offset
    for i in range(n):
        if x[i]:
            e += 0.5 * (linear[i] + h[i])
    best_e = e
    best_x = x.copy()
    for beta in betas:
        for i in range(n):
            de = h[i] if x[i] == 0 else -h[i]
            if de <= 0.0 or np.random.random() < np.exp(-beta * de):
                if x[i] == 0:
                    x[i] = 1
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] += data[p]
                else:
                    x[i] = 0
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] -= data[p]
                e += de
        if e < best_e:
            best_e = e
            best_x[:] = x
    # zero-temperature quench from the best state: flip while any flip strictly lowers energy
    x[:] = best_x
    h = linear.copy()
    for i in range(n):
        if x[i]:
            for p in range(indptr[i], indptr[i + 1]):
                h[indices[p]] += data[p]
    improved = True
    while improved:
        improved = False
        for i in range(n):
            de = h[i] if x[i] == 0 else -h[i]
            if de < 0.0:
                if x[i] == 0:
                    x[i] = 1
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] += data[p]
                else:
                    x[i] = 0
                    for p in range(indptr[i], indptr[i + 1]):
                        h[indices[p]] -= data[p]
                improved = True
    return x


def sweeps_for(qubo: Qubo, budget: SolverBudget, schedule: AnnealingSchedule = DEFAULT_SCHEDULE) -> int:
    if budget.sweep_count is not None:
        return int(budget.sweep_count)
    per_sweep = schedule.seconds_per_update * (qubo.n_vars + 2 * qubo.quadratic.nnz)
    sweeps = int(budget.time_limit / budget.restarts / max(per_sweep, 1e-12))
    return int(np.clip(sweeps, schedule.min_sweeps, schedule.max_sweeps))


def beta_ladder(qubo: Qubo, sweeps: int, schedule: AnnealingSchedule = DEFAULT_SCHEDULE) -> np.ndarray:
    scale = qubo.mean_abs_coefficient() or 1.0
    return np.geomspace(schedule.beta_start / scale, schedule.beta_end / scale, sweeps)


def solve_sa(qubo: Qubo, budget: SolverBudget, schedule: AnnealingSchedule = DEFAULT_SCHEDULE):
    """Single-spin-flip Metropolis annealing plus a greedy quench; best state over restarts."""
    if qubo.n_vars == 0:
        return np.zeros(0, np.uint8), qubo.offset
    adj = qubo.symmetric_adjacency()
    betas = beta_ladder(qubo, sweeps_for(qubo, budget, schedule), schedule)
    lin = qubo.linear.copy()
    results = [
        _anneal(adj.indptr, adj.indices, adj.data, lin, qubo.offset, betas, _restart_seed(budget.seed, r))
        for r in range(budget.restarts)
    ]
    return _pick([r.astype(np.uint8) for r in results], qubo)


# -- random baseline ----------------------------------------------------------


def solve_random(qubo: Qubo, budget: SolverBudget, batch: int = 4096):
    """Best of uniformly random bit vectors; draws as many samples as SA would run sweeps."""
    rng = np.random.default_rng(budget.seed)
    best_bits, best_e = None, np.inf
    tol = _tie_tol(qubo)
    remaining = budget.restarts * sweeps_for(qubo, budget)
    while remaining:
        k = min(batch, remaining)
        remaining -= k
        x = rng.integers(0, 2, size=(k, qubo.n_vars), dtype=np.uint8)
        e = energies(qubo, x)
        i = int(np.argmin(e))
        near = np.flatnonzero(e <= e[i] + tol)
        cands = x[near]
        # tie-break minimum among near-ties; lexsort's primary key is its last row
        order = np.lexsort(cands.T)
        cand = cands[order[0]]
        ce = energy(qubo, cand)
        if best_bits is None or ce < best_e - tol or (ce <= best_e + tol and _tie_better(cand, best_bits)):
            best_bits, best_e = cand, ce
    return best_bits, energy(qubo, best_bits)


SUBSOLVERS = {
    "sa": solve_sa,
    "exhaustive": solve_exhaustive,
    "random": solve_random,
}
