"""Chunked decomposition: global targets -> per-chunk QUBOs -> sequential solve -> post-processing."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .encoding import IntegerEncoding, build_encoding, decode_index
from .errors import (
    DSPError,
    IndivisibleChunkSize,
    SubSolverFailure,
    TargetBoundsInfeasible,
    ZeroChunkMutableConsumption,
)
from .model import DiscountMatrix, Instance, NormalizationConstants, normalizations
from .postprocess import PostProcessConfig, PostProcessResult, post_process
from .qubo import Qubo, SquareAccumulator
from .relaxation import EffectiveDiscountProfile, solve_global
from .solvers import SUBSOLVERS, SolverBudget, solve_sa


@dataclass(frozen=True)
class Chunking:
    chunk_size: int
    chunks: tuple  # tuple of tuples of 0-based customer indices

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)


def partition_customers(instance: Instance, m: int) -> Chunking:
    """Sort customers by total consumption (descending) and cut into groups of ``m``."""
    n_c = instance.n_customers
    if m < 1 or n_c % m:
        raise IndivisibleChunkSize(f"{n_c} customers cannot be split into chunks of {m}")
    totals = instance.aggregates.per_customer
    order = np.lexsort((np.arange(n_c), -totals))
    return Chunking(m, tuple(tuple(int(c) for c in order[i : i + m]) for i in range(0, n_c, m)))


@dataclass(frozen=True, eq=False)
class ChunkTargets:
    alpha: np.ndarray
    xi: np.ndarray  # (M, N_T) chunk effective discounts
    mutable: np.ndarray  # (M, N_T) chunk mutable consumption
    z_max: float
    redistribution_iterations: int = 0


def chunk_mutable(instance: Instance, chunking: Chunking) -> np.ndarray:
    chi, d = instance.elasticity, instance.consumption
    mut = np.array([chi[list(ch)] @ d[list(ch)] for ch in chunking.chunks])
    if (mut <= 0).any():
        j, t = np.argwhere(mut <= 0)[0]
        raise ZeroChunkMutableConsumption(f"chunk {j} has zero mutable consumption at timestep {t}")
    return mut


def chunk_targets(
    instance: Instance, chunking: Chunking, zeta_star, max_iterations: int = 20
) -> ChunkTargets:
    """Chunk effective discounts ``xi^j_t = zeta_t - alpha_t S_j / D~^j_t``.

    ``S_j`` is the chunk's total weighted deviation under ``zeta``. With
    ``sum_t alpha_t = 1`` every chunk is balanced and the chunks recombine to
    ``zeta``. Uniform ``alpha`` is tried first; any timestep that pushes some
    ``|xi|`` past ``z_max`` gets its ``alpha`` capped and the remaining mass is
    spread proportionally over the uncapped timesteps.
    """
    zeta = np.asarray(getattr(zeta_star, "zeta", zeta_star), dtype=float)
    z_max = instance.scheme.z_max
    mut = chunk_mutable(instance, chunking)
    n_t = zeta.shape[0]
    g = (mut @ zeta)[:, None] / mut  # xi = zeta - alpha * g
    alpha = np.full(n_t, 1.0 / n_t)
    fixed = np.zeros(n_t, dtype=bool)
    tol = 1e-12 * z_max
    for it in range(max_iterations + 1):
        xi = zeta - alpha * g
        over = (np.abs(xi) > z_max + tol).any(axis=0)
        if not over.any():
            return ChunkTargets(alpha, xi, mut, z_max, it)
        if it == max_iterations:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = np.where(g > 0, (zeta + z_max) / g, np.where(g < 0, (zeta - z_max) / g, np.inf))
        cap = np.clip(cap.min(axis=0), 0.0, None)
        alpha = alpha.copy()
        alpha[over] = cap[over]
        fixed |= over
        free = ~fixed
        rest = 1.0 - alpha[fixed].sum()
        if not free.any() or alpha[free].sum() <= 0 or rest < 0:
            break
        alpha[free] *= rest / alpha[free].sum()
    raise TargetBoundsInfeasible(
        f"could not redistribute alpha so that |xi| <= z_max within {max_iterations} iterations"
    )


class SequentialUpdate(NamedTuple):
    xi: np.ndarray  # clipped target row for the chunk
    residual: np.ndarray  # carried weighted residual, sum_{i<j} (D~^i xi^i - achieved_i)
    clipped: np.ndarray  # weighted amount that did not fit into [-z_max, z_max]


def sequential_update(targets: ChunkTargets, achieved, j: int) -> SequentialUpdate:
    """Fold the shortfall of chunks ``0..j-1`` into chunk ``j``'s target.

    ``achieved[i]`` is chunk i's elasticity-weighted contribution
    ``sum_{c in C_i} chi_c d_ct z_ct``. Anything clipped here stays in the
    residual seen by chunk ``j + 1``.
    """
    achieved = np.asarray(achieved, dtype=float).reshape(-1, targets.xi.shape[1])[:j]
    residual = (targets.mutable[:j] * targets.xi[:j] - achieved).sum(axis=0)
    raw = targets.xi[j] + residual / targets.mutable[j]
    xi = np.clip(raw, -targets.z_max, targets.z_max)
    return SequentialUpdate(xi, residual, (raw - xi) * targets.mutable[j])


@dataclass(frozen=True, eq=False)
class ChunkQubo:
    qubo: Qubo
    customers: tuple
    n_timesteps: int
    encoding: IntegerEncoding

    def variable(self, c_local: int, t: int, k: int) -> int:
        return (c_local * self.n_timesteps + t) * self.encoding.n_bits + k

    def decode(self, bits) -> np.ndarray:
        """Grid indices, shape ``(m, N_T)``."""
        b = np.asarray(bits).reshape(len(self.customers), self.n_timesteps, self.encoding.n_bits)
        return decode_index(self.encoding, b)


def add_penalty_terms(acc: SquareAccumulator, instance: Instance, cust, var, w, norms: NormalizationConstants):
    """Consumption-deviation, discount-change and regularization terms for customers ``cust``.

    ``var[c_local, t, k]`` is the bit index, ``w`` the per-bit discount increments.
    """
    lam = instance.penalties
    z_max = instance.scheme.z_max
    m, n_t, q = var.shape
    d = instance.consumption[cust]
    totals = instance.aggregates.per_customer[cust]
    share = d / totals[:, None]
    acc.add_squares(
        -z_max * share.sum(axis=1),
        var.reshape(m, n_t * q),
        (share[:, :, None] * w).reshape(m, n_t * q),
        lam.lambda1 / norms.n1,
    )
    if n_t > 1:
        pair_idx = np.concatenate([var[:, :-1, :], var[:, 1:, :]], axis=2).reshape(-1, 2 * q)
        pair_coef = np.broadcast_to(np.concatenate([w, -w]), pair_idx.shape)
        acc.add_squares(np.zeros(pair_idx.shape[0]), pair_idx, pair_coef, lam.lambda2 / norms.n2)
    acc.add_squares(
        np.full(m * n_t, -z_max),
        var.reshape(m * n_t, q),
        np.broadcast_to(w, (m * n_t, q)),
        lam.lambda3 / norms.n3,
    )


def build_chunk_qubo(
    instance: Instance,
    chunk,
    xi_row,
    encoding: IntegerEncoding | None = None,
    norms: NormalizationConstants | None = None,
) -> ChunkQubo:
    """QUBO whose energy equals the chunk fit objective plus the chunk's share of the penalties."""
    encoding = encoding or build_encoding(instance.scheme)
    norms = norms or normalizations(instance)
    cust = np.asarray(chunk, dtype=np.int64)
    m, n_t, q = cust.size, instance.n_timesteps, encoding.n_bits
    z_max, dz = instance.scheme.z_max, instance.scheme.step
    w = dz * np.asarray(encoding.weights, dtype=float)
    d = instance.consumption[cust]
    chi = instance.elasticity[cust]
    mut = chi @ d
    if (mut <= 0).any():
        raise ZeroChunkMutableConsumption("chunk has zero mutable consumption")
    var = np.arange(m * n_t * q).reshape(m, n_t, q)
    acc = SquareAccumulator(m * n_t * q)

    # z = sum_k w_k x_k - z_max, so each squared term is an affine form in x
    fit = -((chi[:, None] * d / mut)[:, :, None] * w)  # (m, n_t, q)
    acc.add_squares(
        np.asarray(xi_row, dtype=float) + z_max,
        var.transpose(1, 0, 2).reshape(n_t, m * q),
        fit.transpose(1, 0, 2).reshape(n_t, m * q),
        1.0 / (n_t * z_max**2),
    )
    add_penalty_terms(acc, instance, cust, var, w, norms)
    return ChunkQubo(acc.build(), tuple(int(c) for c in cust), n_t, encoding)


def chunk_objective(instance: Instance, chunk, xi_row, z_values, norms: NormalizationConstants | None = None) -> float:
    """Direct evaluation of the chunk sub-problem at discount values ``(m, N_T)``."""
    norms = norms or normalizations(instance)
    lam = instance.penalties
    cust = list(chunk)
    z = np.asarray(z_values, dtype=float)
    d = instance.consumption[cust]
    chi = instance.elasticity[cust]
    mut = chi @ d
    n_t = z.shape[1]
    z_max = instance.scheme.z_max
    fit = float(((np.asarray(xi_row) - (chi[:, None] * d * z).sum(axis=0) / mut) ** 2).sum()) / (n_t * z_max**2)
    dev = (d * z).sum(axis=1) / instance.aggregates.per_customer[cust]
    return (
        fit
        + lam.lambda1 / norms.n1 * float(dev @ dev)
        + lam.lambda2 / norms.n2 * float((np.diff(z, axis=1) ** 2).sum())
        + lam.lambda3 / norms.n3 * float((z**2).sum())
    )


@dataclass(frozen=True)
class ChunkRecord:
    index: int
    energy: float
    residual_norm: float
    wall_seconds: float
    clipped_norm: float = 0.0


@dataclass(eq=False)
class RunReport:
    chunks: list = field(default_factory=list)
    final_residual: np.ndarray | None = None
    redistribution_iterations: int = 0
    wall_seconds: float = 0.0
    n_moves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "chunks": [
                {
                    "index": c.index,
                    "energy": c.energy,
                    "residual_norm": c.residual_norm,
                    "wall_seconds": c.wall_seconds,
                }
                for c in self.chunks
            ],
            "final_residual": None if self.final_residual is None else self.final_residual.tolist(),
            "redistribution_iterations": self.redistribution_iterations,
            "wall_seconds": self.wall_seconds,
            "postprocess_moves": dict(self.n_moves),
        }


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    z: DiscountMatrix
    raw: DiscountMatrix  # gathered chunk solutions before post-processing
    profile: EffectiveDiscountProfile
    chunking: Chunking
    targets: ChunkTargets
    report: RunReport
    postprocess: PostProcessResult | None


def _resolve(subsolver) -> Callable:
    if callable(subsolver):
        return subsolver
    try:
        return SUBSOLVERS[subsolver]
    except KeyError:
        raise ValueError(f"unknown sub-solver {subsolver!r}; choose from {sorted(SUBSOLVERS)}") from None


def _chunk_seed(seed: int, j: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED, j]).generate_state(1)[0])


def run_decomposition(
    instance: Instance,
    m: int,
    subsolver="sa",
    budget: SolverBudget | None = None,
    postprocess_config: PostProcessConfig | None = PostProcessConfig(),
) -> DecompositionResult:
    """Solve global LP, split into chunks, solve chunks in sequence, post-process.

    ``budget`` is the total budget; time limits are split evenly over chunks.
    Pass ``postprocess_config=None`` to skip post-processing.
    """
    started = time.perf_counter()
    solver = _resolve(subsolver)
    budget = budget or SolverBudget(time_limit=0.1 * instance.n_customers)
    profile = solve_global(instance)
    chunking = partition_customers(instance, m)
    targets = chunk_targets(instance, chunking, profile)
    encoding = build_encoding(instance.scheme)
    norms = normalizations(instance)
    sub_budget = budget.split(chunking.n_chunks)

    n_chunks, n_t = chunking.n_chunks, instance.n_timesteps
    index = np.zeros(instance.consumption.shape, dtype=np.int64)
    achieved = np.zeros((n_chunks, n_t))
    report = RunReport(redistribution_iterations=targets.redistribution_iterations)
    chi, d = instance.elasticity, instance.consumption
    for j, chunk in enumerate(chunking.chunks):
        t0 = time.perf_counter()
        upd = sequential_update(targets, achieved, j)
        cq = build_chunk_qubo(instance, chunk, upd.xi, encoding, norms)
        try:
            bits, e = solver(cq.qubo, sub_budget.with_seed(_chunk_seed(budget.seed, j)))
        except DSPError as exc:
            report.wall_seconds = time.perf_counter() - started
            raise SubSolverFailure(f"chunk {j}: {exc}", report) from exc
        rows = list(chunk)
        index[rows] = cq.decode(bits)
        zc = instance.scheme.values[index[rows]]
        achieved[j] = chi[rows] @ (d[rows] * zc)
        carried = upd.residual + targets.mutable[j] * targets.xi[j] - achieved[j]
        report.chunks.append(
            ChunkRecord(j, float(e), float(np.linalg.norm(carried)), time.perf_counter() - t0,
                        float(np.linalg.norm(upd.clipped)))
        )
    report.final_residual = instance.aggregates.mutable * profile.zeta - achieved.sum(axis=0)

    raw = DiscountMatrix(index, instance.scheme)
    post = None
    z = raw
    if postprocess_config is not None:
        post = post_process(instance, raw, profile, postprocess_config)
        z = post.z
        for mv in post.moves:
            report.n_moves[mv.kind] = report.n_moves.get(mv.kind, 0) + 1
    report.wall_seconds = time.perf_counter() - started
    return DecompositionResult(z, raw, profile, chunking, targets, report, post)


# -- representational power ---------------------------------------------------


def _subset_sums(weights, values) -> np.ndarray:
    sums = np.zeros(1)
    for w in weights:
        sums = (sums[:, None] + w * values[None, :]).ravel()
    return sums


def min_approximation_error(weights, values, targets) -> np.ndarray:
    """Exact ``min_z |sum_c w_c z_c - target|`` over ``z in values**m`` (meet in the middle)."""
    weights = np.asarray(weights, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    h = weights.size // 2
    left = _subset_sums(weights[:h], values)
    right = np.sort(_subset_sums(weights[h:], values))
    need = targets[:, None] - left[None, :]
    pos = np.searchsorted(right, need)
    lo = right[np.clip(pos - 1, 0, right.size - 1)]
    hi = right[np.clip(pos, 0, right.size - 1)]
    err = np.minimum(np.abs(need - lo), np.abs(need - hi))
    return err.min(axis=1)


def _qubo_min_error(weights, encoding: IntegerEncoding, target, subsolver, budget) -> float:
    m, q = weights.size, encoding.n_bits
    w = encoding.step * np.asarray(encoding.weights, dtype=float)
    acc = SquareAccumulator(m * q)
    const = -target - encoding.scheme.z_max * weights.sum()
    acc.add_squares([const], np.arange(m * q)[None, :], (weights[:, None] * w).reshape(1, -1), 1.0)
    bits, _ = subsolver(acc.build(), budget)
    z = encoding.scheme.values[decode_index(encoding, np.asarray(bits).reshape(m, q))]
    return abs(float(weights @ z) - target)


def approximation_error_study(
    instance: Instance,
    chunk_sizes,
    zeta_grid,
    subsolver=solve_sa,
    timesteps=None,
    seed: int = 0,
    exact_limit: int = 12,
    budget: SolverBudget | None = None,
) -> list[dict]:
    """Minimal relative error ``|sum_c (chi d / D~) z - zeta| / |zeta|`` for random customer groups.

    For each chunk size a random group of customers is drawn (seeded); the
    minimum over all discount assignments is exact up to ``exact_limit``
    customers and delegated to ``subsolver`` above it.
    """
    zeta_grid = np.asarray(zeta_grid, dtype=float)
    if (zeta_grid == 0).any():
        raise ValueError("relative error is undefined at zeta = 0")
    rng = np.random.default_rng(seed)
    values = instance.scheme.values
    encoding = build_encoding(instance.scheme)
    solver = _resolve(subsolver)
    budget = budget or SolverBudget(sweep_count=500, restarts=4, seed=seed)
    steps = range(instance.n_timesteps) if timesteps is None else timesteps
    rows = []
    for m in chunk_sizes:
        group = rng.permutation(instance.n_customers)[:m]
        wd = instance.elasticity[group, None] * instance.consumption[group]
        for t in steps:
            weights = wd[:, t] / wd[:, t].sum()
            if m <= exact_limit:
                err = min_approximation_error(weights, values, zeta_grid)
            else:
                err = np.array([_qubo_min_error(weights, encoding, zt, solver, budget) for zt in zeta_grid])
            for zt, e in zip(zeta_grid, err):
                rows.append({"chunk_size": int(m), "zeta": float(zt), "timestep": int(t), "error": float(e / abs(zt))})
    return rows
