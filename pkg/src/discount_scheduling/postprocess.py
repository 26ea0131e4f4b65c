"""Greedy post-processing of a gathered discount matrix.

Three stages run in order:

``repair``
    single-customer steps that bring every timestep's elasticity-weighted
    deviation ``p_t`` back into its admissible band (no overshoot past the
    global target ``D~_t zeta*_t`` and ``|p_t| <= dp_t``).
``pairs``
    the greedy up/down pair exchange: per timestep, one customer whose
    consumption deviation is too negative gets one step more, one whose
    deviation is too positive gets one step less, chosen to move ``p_t``
    closest to the target without overshooting it.
``balance``
    single or paired steps (any timesteps) that drive the unweighted total
    ``sum_{c,t} z d`` to zero while staying inside every band.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import DiscountMatrix, Instance, power_deviation


@dataclass(frozen=True)
class PostProcessConfig:
    cutoff: int = 500
    passes: int = 1
    repair: bool = True
    balance: bool = True
    balance_rtol: float = 1e-7  # target |sum z d| relative to total consumption
    balance_max_moves: int = 100_000

    def __post_init__(self):
        if self.cutoff < 1 or self.passes < 1:
            raise ValueError("cutoff and passes must be >= 1")


@dataclass(frozen=True)
class Move:
    pass_index: int
    timestep: int
    customer_up: int | None
    customer_down: int | None
    eps_before: float
    eps_after: float
    kind: str  # "repair" | "pair" | "balance"


@dataclass(frozen=True, eq=False)
class PostProcessResult:
    z: DiscountMatrix
    moves: list
    deviation: np.ndarray  # incrementally maintained sum_t chi_c d_ct z_ct
    max_candidates: int


def _signs(zeta) -> np.ndarray:
    return np.where(np.asarray(zeta) < 0, -1.0, 1.0)


def power_band(instance: Instance, zeta) -> tuple[np.ndarray, np.ndarray]:
    """Admissible interval for ``p_t``: between the target and the far power bound."""
    target = instance.aggregates.mutable * np.asarray(zeta)
    dp = instance.power_bound
    pos = _signs(zeta) > 0
    lo = np.where(pos, -dp, target)
    hi = np.where(pos, target, dp)
    return lo, hi


def verify_power_feasibility(instance: Instance, z, zeta_star, tol: float | None = None) -> bool:
    zeta = getattr(zeta_star, "zeta", zeta_star)
    tol = 1e-9 * float(instance.power_bound.max()) if tol is None else tol
    p = power_deviation(instance, z)
    lo, hi = power_band(instance, zeta)
    return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))


def _limit(cands: np.ndarray, delta: np.ndarray, r: int) -> np.ndarray:
    if cands.size <= r:
        return cands
    keep = cands[np.lexsort((cands, -np.abs(delta[cands])))[:r]]
    return np.sort(keep)


class _State:
    def __init__(self, instance: Instance, z: DiscountMatrix, zeta):
        scheme = instance.scheme
        self.top = scheme.n_categories - 1
        self.idx = z.index.copy()
        self.d = instance.consumption
        chi = instance.elasticity
        vals = scheme.values[self.idx]
        self.step_w = chi[:, None] * self.d * scheme.step  # Delta_{c,t}
        self.step_g = self.d * scheme.step  # effect of one step on sum z d
        wz = chi[:, None] * self.d * vals
        self.delta = wz.sum(axis=1)
        self.p = wz.sum(axis=0)
        self.g = float((self.d * vals).sum())
        self.target = instance.aggregates.mutable * np.asarray(zeta)
        self.sign = _signs(zeta)
        self.lo, self.hi = power_band(instance, zeta)
        self.tol = 1e-12 * float(instance.power_bound.max())

    def step(self, c: int, t: int, direction: int):
        self.idx[c, t] += direction
        self.delta[c] += direction * self.step_w[c, t]
        self.p[t] += direction * self.step_w[c, t]
        self.g += direction * self.step_g[c, t]


def _repair(st: _State, moves: list):
    n_t = st.p.shape[0]
    for t in range(n_t):
        while st.p[t] > st.hi[t] + st.tol or st.p[t] < st.lo[t] - st.tol:
            direction = -1 if st.p[t] > st.hi[t] else 1
            col = st.idx[:, t]
            w = st.step_w[:, t]
            ok = (col > 0) if direction < 0 else (col < st.top)
            cands = np.flatnonzero(ok & (w > 0))
            if not cands.size:
                break
            new_p = st.p[t] + direction * w[cands]
            inside = (new_p >= st.lo[t] - st.tol) & (new_p <= st.hi[t] + st.tol)
            gain = np.abs(st.delta[cands] + direction * w[cands]) - np.abs(st.delta[cands])
            if inside.any():
                # smallest sufficient step: lands closest to the target
                pool = cands[inside]
                miss = np.abs(st.target[t] - new_p[inside])
                pick = pool[np.lexsort((pool, gain[inside], miss))[0]]
            else:
                # no step lands inside: take the one that shrinks the violation most, or stop
                viol = np.maximum(np.maximum(st.lo[t] - new_p, new_p - st.hi[t]), 0.0)
                now = max(st.lo[t] - st.p[t], st.p[t] - st.hi[t])
                better = viol < now - st.tol
                if not better.any():
                    break
                pool = cands[better]
                pick = pool[np.lexsort((pool, gain[better], viol[better]))[0]]
            eps = st.target[t] - st.p[t]
            st.step(int(pick), t, direction)
            up, down = (int(pick), None) if direction > 0 else (None, int(pick))
            moves.append(Move(-1, t, up, down, eps, st.target[t] - st.p[t], "repair"))


def _pairs(st: _State, cutoff: int, pass_index: int, moves: list) -> int:
    largest = 0
    for t in range(st.p.shape[0]):
        eps = st.target[t] - st.p[t]
        col = st.idx[:, t]
        w = st.step_w[:, t]
        up = np.flatnonzero((col < st.top) & (st.delta < -w / 2))
        down = np.flatnonzero((col > 0) & (st.delta > w / 2))
        up = _limit(up, st.delta, cutoff)
        down = _limit(down, st.delta, cutoff)
        largest = max(largest, up.size, down.size)
        if not up.size or not down.size:
            continue
        s = st.sign[t]
        score = s * (eps - (w[up][:, None] - w[down][None, :]))
        score = np.where(score > 0, score, np.inf)
        k = int(np.argmin(score))  # row-major: ties go to the lowest (up, down) indices
        best = score.flat[k]
        if not (np.isfinite(best) and best < s * eps):
            continue
        cu, cd = int(up[k // down.size]), int(down[k % down.size])
        st.step(cu, t, +1)
        st.step(cd, t, -1)
        moves.append(Move(pass_index, t, cu, cd, eps, st.target[t] - st.p[t], "pair"))
    return largest


def _balance(st: _State, tol_g: float, max_moves: int, moves: list):
    for _ in range(max_moves):
        if abs(st.g) <= tol_g:
            return
        p = st.p[None, :]
        up_ok = (st.idx < st.top) & (st.step_g > 0) & (p + st.step_w <= st.hi[None, :] + st.tol)
        dn_ok = (st.idx > 0) & (st.step_g > 0) & (p - st.step_w >= st.lo[None, :] - st.tol)
        up = np.flatnonzero(up_ok.ravel())
        dn = np.flatnonzero(dn_ok.ravel())
        gu = st.step_g.ravel()[up]
        gd = st.step_g.ravel()[dn]
        options = []  # (new |g|, up cell, down cell)
        if up.size:
            i = int(np.argmin(np.abs(st.g + gu)))
            options.append((abs(st.g + gu[i]), int(up[i]), None))
        if dn.size:
            i = int(np.argmin(np.abs(st.g - gd)))
            options.append((abs(st.g - gd[i]), None, int(dn[i])))
        if up.size and dn.size:
            order = np.argsort(gd, kind="stable")
            gs = gd[order]
            want = st.g + gu  # ideal down-step size for each up cell
            pos = np.searchsorted(gs, want)
            best = (np.inf, None, None)
            for cand in (np.clip(pos - 1, 0, gs.size - 1), np.clip(pos, 0, gs.size - 1)):
                resid = np.abs(want - gs[cand])
                i = int(np.argmin(resid))
                if resid[i] < best[0]:
                    best = (float(resid[i]), int(up[i]), int(dn[order[cand[i]]]))
            if best[1] is not None and best[1] != best[2]:
                options.append(best)
        if not options:
            return
        new_g, cu, cd = min(options, key=lambda o: o[0])
        if not new_g < abs(st.g):
            return
        n_t = st.idx.shape[1]
        for cell, direction in ((cu, 1), (cd, -1)):
            if cell is None:
                continue
            c, t = divmod(cell, n_t)
            eps = st.target[t] - st.p[t]
            st.step(c, t, direction)
            up_c, dn_c = (c, None) if direction > 0 else (None, c)
            moves.append(Move(-1, t, up_c, dn_c, eps, st.target[t] - st.p[t], "balance"))


def post_process(instance: Instance, z: DiscountMatrix, zeta_star, config: PostProcessConfig | None = None):
    config = config or PostProcessConfig()
    zeta = getattr(zeta_star, "zeta", zeta_star)
    st = _State(instance, z, zeta)
    moves: list = []
    if config.repair:
        _repair(st, moves)
    largest = 0
    for k in range(config.passes):
        largest = max(largest, _pairs(st, config.cutoff, k, moves))
    if config.balance:
        _balance(st, config.balance_rtol * float(instance.consumption.sum()), config.balance_max_moves, moves)
    return PostProcessResult(DiscountMatrix(st.idx, instance.scheme), moves, st.delta, largest)


def write_change_log(moves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pass", "timestep", "customer_up", "customer_down", "eps_before", "eps_after", "kind"])
        for m in moves:
            w.writerow([
                m.pass_index,
                m.timestep,
                "" if m.customer_up is None else m.customer_up,
                "" if m.customer_down is None else m.customer_down,
                repr(float(m.eps_before)),
                repr(float(m.eps_after)),
                m.kind,
            ])
