"""Relay assignment algorithms.

Every algorithm here chooses ``assign[i] in {0..K}`` (0 = direct to the AP)
and hands the resulting links to POWMU, which is optimal for a fixed
assignment.  They differ only in how the assignment is searched:

* :func:`bba` - best-first branch and bound on the convex relaxation (exact).
* :func:`obh` - dives a single branch, fixing the largest relaxed ``b`` each round.
* :func:`rph` - rounds one root relaxation.
* :func:`rstma` - local search from the min-product (OR) criterion.
* :func:`htc_baseline` - fixed harvest fraction with equal slots.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .netmodel import NetworkInstance
from .relaxation import FREE, INFEASIBLE, OPTIMAL, build_relaxation, solve_relaxation
from .scheduling import SchedulingInstance, powmu
from .single import SourceLink

DIRECT = 0


@dataclass(eq=False)
class FullSchedule:
    """Schedule of a whole network for one relay assignment.

    ``tau_rel``/``p_rel`` are indexed by relay (length K) and are zero for
    idle relays.
    """

    assignment: np.ndarray
    tau0: float
    tau_src: np.ndarray
    p_src: np.ndarray
    tau_rel: np.ndarray
    p_rel: np.ndarray
    total: float
    algorithm: str = ""
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "assignment": [int(a) for a in self.assignment],
            "tau0_s": self.tau0,
            "tau_src_s": [float(t) for t in self.tau_src],
            "p_src_w": [float(p) for p in self.p_src],
            "tau_rel_s": [float(t) for t in self.tau_rel],
            "p_rel_w": [float(p) for p in self.p_rel],
            "total_s": self.total,
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FullSchedule":
        return cls(
            assignment=np.asarray(d["assignment"], dtype=int),
            tau0=d["tau0_s"],
            tau_src=np.asarray(d["tau_src_s"], dtype=float),
            p_src=np.asarray(d["p_src_w"], dtype=float),
            tau_rel=np.asarray(d["tau_rel_s"], dtype=float),
            p_rel=np.asarray(d["p_rel_w"], dtype=float),
            total=d["total_s"],
            algorithm=d.get("algorithm", ""),
            stats=d.get("stats", {}),
        )


def _check_assignment(instance: NetworkInstance, assignment) -> np.ndarray:
    a = np.asarray(assignment, dtype=int).reshape(-1)
    if a.shape != (instance.n,):
        raise ValueError(f"assignment must have length {instance.n}")
    if np.any(a < 0) or np.any(a > instance.k):
        raise ValueError(f"assignment values must lie in 0..{instance.k}")
    return a


def assignment_to_links(instance: NetworkInstance, assignment) -> SchedulingInstance:
    """One link per source plus one per relay carrying at least one source.

    Relay links follow the sources in increasing relay index.
    """
    a = _check_assignment(instance, assignment)
    p, ch = instance.params, instance.channels
    common = dict(ap_power=p.ap_power_pa, bandwidth=p.bandwidth_w, noise_psd=p.noise_psd_n0)
    links = []
    for i, j in enumerate(a):
        g = ch.g_src_ap[i] if j == DIRECT else ch.g_src_rel[i, j - 1]
        links.append(SourceLink(ch.h_ap_src[i], g, p.demands[i], p.zeta_src[i], **common))
    for j in _active_relays(a):
        load = float(p.demands[a == j].sum())
        links.append(SourceLink(ch.h_ap_rel[j - 1], ch.g_rel_ap[j - 1], load, p.zeta_rel[j - 1], **common))
    return SchedulingInstance(links, p.max_ul_power)


def _active_relays(a: np.ndarray) -> list[int]:
    return sorted({int(j) for j in a if j != DIRECT})


def solve_assignment(instance: NetworkInstance, assignment, algorithm: str = "powmu") -> FullSchedule:
    """Optimal schedule (POWMU) for a fixed relay assignment."""
    a = _check_assignment(instance, assignment)
    sched = powmu(assignment_to_links(instance, a))
    n, k = instance.n, instance.k
    tau_rel = np.zeros(k)
    p_rel = np.zeros(k)
    for pos, j in enumerate(_active_relays(a)):
        tau_rel[j - 1] = sched.tau_it[n + pos]
        p_rel[j - 1] = sched.p_tx[n + pos]
    return FullSchedule(
        assignment=a.copy(),
        tau0=sched.tau0,
        tau_src=sched.tau_it[:n].copy(),
        p_src=sched.p_tx[:n].copy(),
        tau_rel=tau_rel,
        p_rel=p_rel,
        total=sched.total,
        algorithm=algorithm,
    )


class _Memo:
    """Caches POWMU totals per assignment within one algorithm run."""

    def __init__(self, instance: NetworkInstance):
        self.instance = instance
        self.cache: dict[tuple, FullSchedule] = {}
        self.calls = 0

    def __call__(self, assignment) -> FullSchedule:
        key = tuple(int(v) for v in assignment)
        hit = self.cache.get(key)
        if hit is None:
            self.calls += 1
            hit = solve_assignment(self.instance, key)
            self.cache[key] = hit
        return hit


def enumerate_assignments(instance: NetworkInstance) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(instance.k + 1), repeat=instance.n)


def exhaustive(instance: NetworkInstance) -> FullSchedule:
    """Best assignment by brute force over all (K+1)^N choices."""
    best = None
    for a in enumerate_assignments(instance):
        s = solve_assignment(instance, a)
        if best is None or s.total < best.total:
            best = s
    best.algorithm = "exhaustive"
    return best


def schedule_violation(instance: NetworkInstance, fs: FullSchedule) -> float:
    """Largest relative violation of the energy, demand and power constraints."""
    p, ch = instance.params, instance.channels
    wn0 = p.noise_power
    worst = 0.0

    def check(h, zeta, g, demand, tau, pw):
        nonlocal worst
        if demand == 0:
            return
        energy = zeta * p.ap_power_pa * h * fs.tau0
        worst = max(worst, (pw * tau - energy) / energy)
        bits = tau * p.bandwidth_w * math.log2(1.0 + pw * g / wn0)
        worst = max(worst, (demand - bits) / demand)
        if math.isfinite(p.max_ul_power):
            worst = max(worst, (pw - p.max_ul_power) / p.max_ul_power)

    a = fs.assignment
    for i, j in enumerate(a):
        g = ch.g_src_ap[i] if j == DIRECT else ch.g_src_rel[i, j - 1]
        check(ch.h_ap_src[i], p.zeta_src[i], g, p.demands[i], fs.tau_src[i], fs.p_src[i])
    for j in range(1, instance.k + 1):
        load = float(p.demands[a == j].sum())
        if load == 0:
            worst = max(worst, fs.tau_rel[j - 1] / max(fs.total, 1e-300))
            continue
        check(ch.h_ap_rel[j - 1], p.zeta_rel[j - 1], ch.g_rel_ap[j - 1], load, fs.tau_rel[j - 1], fs.p_rel[j - 1])
    total = fs.tau0 + fs.tau_src.sum() + fs.tau_rel.sum()
    worst = max(worst, abs(total - fs.total) / max(fs.total, 1e-300))
    return worst


# ---------------------------------------------------------------- exact search

INTEGRAL_TOL = 1e-5


def _round_rows(b: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the smaller relay index
    return np.argmax(b, axis=1).astype(int)


def _is_integral(b: np.ndarray, rows) -> bool:
    return all(b[i].max() >= 1.0 - INTEGRAL_TOL for i in rows)


def _relax(instance, fixed, tau_ub, tol):
    model = build_relaxation(instance, fixed, tau_ub)
    return solve_relaxation(model, tol=tol)


def bba(
    instance: NetworkInstance,
    rtol: float = 1e-7,
    relax_tol: float = 1e-8,
    trace: Callable[[dict], None] | None = None,
) -> FullSchedule:
    """Globally optimal relay assignment by best-first branch and bound.

    Nodes are partial assignments (``-1`` = free).  ``trace`` receives one
    record per node: ``id``, ``parent``, ``fixed``, ``bound``, ``parent_bound``
    and ``action``.
    """
    start = time.perf_counter()
    memo = _Memo(instance)
    n, k = instance.n, instance.k
    best = memo([DIRECT] * n)
    stats = {"nodes": 0, "relaxations": 0, "pruned": 0, "branched": 0}
    if k == 0:
        return _finish(best, "bba", stats, start, memo)

    def emit(**rec):
        if trace is not None:
            trace(rec)

    ids = itertools.count()
    # entries: (key bound, node id, parent id, parent bound, fixed)
    heap = [(-math.inf, next(ids), -1, -math.inf, (FREE,) * n)]
    while heap:
        key, nid, parent, pbound, fixed = heapq.heappop(heap)
        if key >= best.total * (1.0 - rtol):
            stats["pruned"] += 1
            emit(id=nid, parent=parent, fixed=list(fixed), bound=key, parent_bound=pbound, action="prune_queued")
            continue
        stats["nodes"] += 1
        free = [i for i in range(n) if fixed[i] == FREE]
        if not free:
            leaf = memo(fixed)
            if leaf.total < best.total:
                best = leaf
            emit(id=nid, parent=parent, fixed=list(fixed), bound=leaf.total, parent_bound=pbound, action="leaf")
            continue
        stats["relaxations"] += 1
        # any completion beating the incumbent fits every slot under its length
        cutoff = best.total * (1.0 + 1e-6)
        sol = _relax(instance, fixed, cutoff, relax_tol)
        if sol.status == INFEASIBLE:
            emit(id=nid, parent=parent, fixed=list(fixed), bound=math.inf, parent_bound=pbound, action="infeasible")
            continue
        if sol.status != OPTIMAL:
            # no usable bound: split on the first free source and keep the parent's bound
            stats["branched"] += 1
            emit(id=nid, parent=parent, fixed=list(fixed), bound=pbound, parent_bound=pbound, action=f"split:{free[0]}")
            for j in range(k + 1):
                child = list(fixed)
                child[free[0]] = j
                heapq.heappush(heap, (key, next(ids), nid, pbound, tuple(child)))
            continue
        # the relaxation only bounds completions no longer than the cutoff;
        # capping at the cutoff makes it a bound on the whole subtree
        lb = min(sol.lower_bound, cutoff)
        rounded = _round_rows(sol.b)
        cand = memo(rounded)
        if cand.total < best.total:
            best = cand
        if lb >= best.total * (1.0 - rtol):
            stats["pruned"] += 1
            emit(id=nid, parent=parent, fixed=list(fixed), bound=lb, parent_bound=pbound, action="prune_bound")
            continue
        if _is_integral(sol.b, free):
            emit(id=nid, parent=parent, fixed=list(fixed), bound=lb, parent_bound=pbound, action="integral")
            continue
        # branch on the free source holding the largest fractional entry
        frac = [
            (-sol.b[i, j], i, j)
            for i in free
            for j in range(k + 1)
            if INTEGRAL_TOL < sol.b[i, j] < 1.0 - INTEGRAL_TOL
        ]
        _, i_br, _ = min(frac)
        stats["branched"] += 1
        emit(id=nid, parent=parent, fixed=list(fixed), bound=lb, parent_bound=pbound, action=f"branch:{i_br}")
        for j in range(k + 1):
            child = list(fixed)
            child[i_br] = j
            heapq.heappush(heap, (lb, next(ids), nid, lb, tuple(child)))
    return _finish(best, "bba", stats, start, memo)


def _finish(fs: FullSchedule, name: str, stats: dict, start: float, memo: _Memo | None = None) -> FullSchedule:
    out = FullSchedule(
        fs.assignment.copy(), fs.tau0, fs.tau_src.copy(), fs.p_src.copy(),
        fs.tau_rel.copy(), fs.p_rel.copy(), fs.total, name, dict(stats),
    )
    if memo is not None:
        out.stats["powmu_calls"] = memo.calls
    out.stats["wall_time_s"] = time.perf_counter() - start
    return out


# ------------------------------------------------------- relaxation heuristics

def _relax_with_retry(instance, fixed, tau_ub, tol):
    """Heuristic solves may force a branch worse than all-direct; widen the bound once."""
    sol = _relax(instance, fixed, tau_ub, tol)
    if sol.status != OPTIMAL:
        sol = _relax(instance, fixed, 4.0 * tau_ub, tol)
    return sol


def obh(instance: NetworkInstance, relax_tol: float = 1e-6) -> FullSchedule:
    """Dive one branch: force the largest relaxed ``b`` each round."""
    start = time.perf_counter()
    n, k = instance.n, instance.k
    direct = solve_assignment(instance, [DIRECT] * n)
    stats = {"relaxations": 0, "fallback": False}
    if k == 0:
        return _finish(direct, "obh", stats, start)
    ub = direct.total * (1.0 + 1e-6)
    fixed = [FREE] * n
    free = list(range(n))
    while free:
        sol = _relax_with_retry(instance, tuple(fixed), ub, relax_tol)
        stats["relaxations"] += 1
        if sol.status != OPTIMAL:
            stats["fallback"] = True
            for i in free:
                fixed[i] = DIRECT
            break
        frac = [
            (-sol.b[i, j], i, j)
            for i in free
            for j in range(k + 1)
            if INTEGRAL_TOL < sol.b[i, j] < 1.0 - INTEGRAL_TOL
        ]
        if frac:
            _, i_f, j_f = min(frac)
            fixed[i_f] = j_f
            free.remove(i_f)
        # integral rows, and a lone remaining source, are read off this solution
        if not frac or len(free) == 1:
            for i in free:
                fixed[i] = int(np.argmax(sol.b[i]))
            break
    return _finish(solve_assignment(instance, fixed), "obh", stats, start)


def rph(instance: NetworkInstance, relax_tol: float = 1e-6) -> FullSchedule:
    """Round one root relaxation row by row."""
    start = time.perf_counter()
    n, k = instance.n, instance.k
    direct = solve_assignment(instance, [DIRECT] * n)
    stats = {"relaxations": 0, "fallback": False}
    if k == 0:
        return _finish(direct, "rph", stats, start)
    sol = _relax_with_retry(instance, None, direct.total * (1.0 + 1e-6), relax_tol)
    stats["relaxations"] = 1
    if sol.status != OPTIMAL:
        stats["fallback"] = True
        return _finish(direct, "rph", stats, start)
    return _finish(solve_assignment(instance, _round_rows(sol.b)), "rph", stats, start)


# ------------------------------------------------------ criterion-based search

def _scores(instance: NetworkInstance, i: int) -> np.ndarray:
    """Min-product score of every candidate (index 0 = direct link)."""
    ch = instance.channels
    s = np.empty(instance.k + 1)
    s[0] = ch.g_src_ap[i] * ch.h_ap_src[i]
    s[1:] = np.minimum(ch.g_src_rel[i] * ch.h_ap_src[i], ch.g_rel_ap * ch.h_ap_rel)
    return s


def or_criterion(instance: NetworkInstance) -> np.ndarray:
    """Per-source argmax of the min-product score; ties go to the smaller index."""
    return np.array([int(np.argmax(_scores(instance, i))) for i in range(instance.n)], dtype=int)


def relay_benefit(instance: NetworkInstance, i: int, j: int) -> bool:
    """Whether relay ``j`` (1-based) can shorten source ``i``'s schedule."""
    if not 1 <= j <= instance.k:
        raise ValueError(f"relay index must lie in 1..{instance.k}")
    s = _scores(instance, i)
    return bool(s[j] > s[0])


def or_powmu(instance: NetworkInstance) -> FullSchedule:
    start = time.perf_counter()
    return _finish(solve_assignment(instance, or_criterion(instance)), "or_powmu", {}, start)


def rstma(instance: NetworkInstance) -> FullSchedule:
    """Local search from the OR assignment, accepting the first strict improvement."""
    start = time.perf_counter()
    memo = _Memo(instance)
    n, k = instance.n, instance.k
    a = or_criterion(instance)
    cur = memo(a)
    scores = [_scores(instance, i) for i in range(n)]
    moves = 0
    improved = True
    while improved:
        improved = False
        groups = {j: [i for i in range(n) if a[i] == j] for j in range(k + 1)}
        order = sorted((j for j in groups if len(groups[j]) > 1), key=lambda j: (-len(groups[j]), j))
        for j in order:
            for i in groups[j]:
                alts = sorted((jj for jj in range(k + 1) if jj != j), key=lambda jj: (-scores[i][jj], jj))
                for jj in alts:
                    trial = a.copy()
                    trial[i] = jj
                    cand = memo(trial)
                    if cand.total < cur.total * (1.0 - 1e-12):
                        a, cur = trial, cand
                        moves += 1
                        improved = True
                        break
                if improved:
                    break
            if improved:
                break
    return _finish(cur, "rstma", {"moves": moves}, start, memo)


# ------------------------------------------------------------------- baseline

def htc_baseline(instance: NetworkInstance, rho: float = 0.8) -> FullSchedule:
    """Harvest-then-cooperate: EH for ``rho*T``, then 2N equal IT slots.

    A direct source uses both of its slots; a relayed source uses one and its
    relay forwards in the other.  Powers do not depend on ``T``, so ``T`` is
    the smallest block in which every slot carries its bits.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    start = time.perf_counter()
    p, ch = instance.params, instance.channels
    n, k = instance.n, instance.k
    a = or_criterion(instance)
    wn0 = p.noise_power
    slots_per_t = 2.0 * n / (1.0 - rho)  # T per unit slot length
    pa, pmax, w = p.ap_power_pa, p.max_ul_power, p.bandwidth_w

    def slot_need(bits, h, zeta, g, slots):
        # power if the harvested energy is spread over ``slots`` slots
        pw = min(pmax, zeta * pa * h * rho * slots_per_t / slots)
        return bits / (slots * w * math.log2(1.0 + pw * g / wn0)), pw

    need = 0.0
    p_src = np.zeros(n)
    src_slots = np.zeros(n)
    for i in range(n):
        if p.demands[i] == 0:
            continue
        j = a[i]
        g = ch.g_src_ap[i] if j == DIRECT else ch.g_src_rel[i, j - 1]
        m = 2 if j == DIRECT else 1
        d, p_src[i] = slot_need(p.demands[i], ch.h_ap_src[i], p.zeta_src[i], g, m)
        src_slots[i] = m
        need = max(need, d)
    p_rel = np.zeros(k)
    rel_slots = np.zeros(k)
    for j in range(1, k + 1):
        feeders = [i for i in range(n) if a[i] == j and p.demands[i] > 0]
        if not feeders:
            continue
        m = len(feeders)
        d, p_rel[j - 1] = slot_need(
            float(p.demands[feeders].sum()), ch.h_ap_rel[j - 1], p.zeta_rel[j - 1], ch.g_rel_ap[j - 1], m
        )
        rel_slots[j - 1] = m
        need = max(need, d)
    total = need * slots_per_t
    delta = need
    fs = FullSchedule(
        assignment=a,
        tau0=rho * total,
        tau_src=src_slots * delta,
        p_src=p_src,
        tau_rel=rel_slots * delta,
        p_rel=p_rel,
        total=total,
        algorithm="htc",
    )
    return _finish(fs, "htc", {"rho": rho, "slot_s": delta}, start)


ALGORITHMS: dict[str, Callable[[NetworkInstance], FullSchedule]] = {
    "bba": bba,
    "obh": obh,
    "rph": rph,
    "rstma": rstma,
    "or_powmu": or_powmu,
    "htc": htc_baseline,
    "exhaustive": exhaustive,
}
