"""Convex relaxation of the joint relay-selection / scheduling MINLP.

Integrality of the selection variables ``b[i][j]`` is dropped, the products
``P * tau`` become energy variables ``A``, and the bilinear products
``b * tau`` in the power caps are replaced by their McCormick envelopes over
``0 <= tau <= tau_ub``.  The resulting problem is smooth and convex.

Internally times are measured in units of ``mean(D) / W`` and every energy
variable is rescaled to ``A * g / (W * N0)`` (an "SNR-time"), which keeps all
variables of order one.  Results are reported in seconds and joules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import barrier
from .barrier import INFEASIBLE, MAX_ITER, OPTIMAL, UNKNOWN, ConvexProblem
from .netmodel import NetworkInstance

LN2 = math.log(2.0)

FREE = -1

# below this many seconds a relaxed slot is reported as zero
ZERO_TIME = 1e-9


@dataclass(frozen=True)
class McCormick:
    """Envelope rows for ``w = b * tau`` with ``b in [0, 1]``, ``tau in [0, tau_ub]``.

    Each row is ``(coef_w, coef_tau, coef_b, rhs)`` meaning
    ``coef_w*w + coef_tau*tau + coef_b*b <= rhs``.
    """

    tau_ub: float

    def rows(self) -> list[tuple[float, float, float, float]]:
        u = self.tau_ub
        return [
            (-1.0, 0.0, 0.0, 0.0),  # w >= 0
            (-1.0, 1.0, u, u),  # w >= tau + u*(b - 1)
            (1.0, 0.0, -u, 0.0),  # w <= u*b
            (1.0, -1.0, 0.0, 0.0),  # w <= tau
        ]

    def upper(self, tau, b):
        """Largest envelope value; the lower rows never bind in the relaxation."""
        return np.minimum(self.tau_ub * np.asarray(b), np.asarray(tau))

    def contains(self, w, tau, b, tol=1e-12) -> bool:
        return all(cw * w + ct * tau + cb * b <= r + tol * max(1.0, self.tau_ub) for cw, ct, cb, r in self.rows())


@dataclass
class _Link:
    """One IT slot of the relaxed model (source->dest candidate or relay->AP)."""

    kind: str  # "src" or "rel"
    i: int  # source index (-1 for relay links)
    j: int  # destination relay index, 0 = AP (for relay links: the relay)
    gamma: float  # g*zeta*P_A*h/(W*N0)
    rho: float  # pmax*g/(W*N0), inf without a cap
    gain_ratio: float  # (W*N0)/g, converts SNR-time back to energy
    tau_ub: float
    b_index: int | None = None  # variable index of b (free entries only)
    it: int = -1
    is_: int = -1


@dataclass
class RelaxedModel:
    instance: NetworkInstance
    mask: np.ndarray  # N x (K+1): -1 free, 0 forced off, 1 forced on
    tau_ub_src: np.ndarray
    tau_ub_rel: np.ndarray
    time_unit: float
    links: list[_Link]
    problem: ConvexProblem
    relax_rows: np.ndarray  # linear rows relaxed in phase one
    x_start: np.ndarray
    b_vars: dict[tuple[int, int], int] = field(default_factory=dict)
    empty: bool = False  # some source has no candidate that can carry any flow

    @property
    def num_variables(self) -> int:
        return self.problem.n

    def describe(self) -> str:
        """Human-readable listing of the scaled model."""
        p = self.problem
        if self.empty:
            return f"relaxed model: N={self.instance.n} K={self.instance.k} (no feasible candidate for some source)"
        lines = [
            f"relaxed model: N={self.instance.n} K={self.instance.k} vars={p.n} "
            f"lin={p.G.shape[0]} eq={p.A.shape[0]} rate={p.it.size} time_unit={self.time_unit:.3e}s",
            "minimize " + " + ".join(f"{v:g}*x{k}" for k, v in enumerate(p.c) if v),
        ]
        for r in range(p.G.shape[0]):
            terms = " + ".join(f"{v:g}*x{k}" for k, v in enumerate(p.G[r]) if v)
            lines.append(f"  lin[{r}]: {terms} <= {p.h[r]:g}")
        for r in range(p.A.shape[0]):
            terms = " + ".join(f"{v:g}*x{k}" for k, v in enumerate(p.A[r]) if v)
            lines.append(f"  eq[{r}]: {terms} == {p.b[r]:g}")
        for r in range(p.it.size):
            terms = " + ".join(f"{v:g}*x{k}" for k, v in enumerate(p.C[r]) if v)
            lines.append(f"  rate[{r}]: x{p.it[r]}*log2(1 + x{p.is_[r]}/x{p.it[r]}) >= {terms or 0}")
        return "\n".join(lines)


@dataclass
class RelaxedSolution:
    objective: float
    lower_bound: float
    status: str
    kkt_residual: float
    tau0: float = 0.0
    b: np.ndarray | None = None
    tau_src: np.ndarray | None = None
    energy_src: np.ndarray | None = None
    w_src: np.ndarray | None = None
    tau_rel: np.ndarray | None = None
    energy_rel: np.ndarray | None = None
    newton_steps: int = 0

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE

    @property
    def solved(self) -> bool:
        return self.status in (OPTIMAL, MAX_ITER)


def _normalize_mask(mask, n: int, k: int) -> np.ndarray:
    if mask is None:
        return np.full((n, k + 1), FREE, dtype=int)
    arr = np.asarray(mask, dtype=int)
    if arr.ndim == 1:
        if arr.shape != (n,):
            raise ValueError(f"per-source mask must have length {n}")
        out = np.full((n, k + 1), FREE, dtype=int)
        for i, j in enumerate(arr):
            if j != FREE:
                if not 0 <= j <= k:
                    raise ValueError(f"forced relay {j} out of range")
                out[i, :] = 0
                out[i, j] = 1
        return out
    if arr.shape != (n, k + 1):
        raise ValueError(f"mask must have shape ({n}, {k + 1})")
    if np.any((arr != FREE) & (arr != 0) & (arr != 1)):
        raise ValueError("mask entries must be -1, 0 or 1")
    if np.any((arr == 1).sum(axis=1) > 1):
        raise ValueError("a source is forced onto more than one relay")
    if np.any((arr == 0).all(axis=1)):
        raise ValueError("a source has every relay forced off")
    return arr


def _broadcast_ub(tau_ub, n, k):
    if isinstance(tau_ub, tuple):
        src, rel = tau_ub
        return np.broadcast_to(np.asarray(src, float), (n, k + 1)).copy(), np.broadcast_to(
            np.asarray(rel, float), (k,)
        ).copy()
    val = float(tau_ub)
    return np.full((n, k + 1), val), np.full(k, val)


def _drop_dead_candidates(instance, mask, ub_src, ub_rel, d_scaled):
    """Switch off candidates that cannot carry any positive share of a demand.

    Under ``A <= Pmax*tau_ub*b`` and ``tau <= tau_ub`` a slot moves at most
    ``rho*tau_ub*b/ln2`` demand units as ``b -> 0``; when that is below the
    source's demand only ``b = 0`` is feasible and the relaxed set has no
    interior.  Fixing such entries to zero is exact.  Returns the updated
    mask and whether some source is left without a candidate.
    """
    ch = instance.channels
    p = instance.params
    pmax = p.max_ul_power
    if not math.isfinite(pmax):
        return mask, False
    mask = mask.copy()
    wn0 = p.noise_power
    n, k = instance.n, instance.k
    dead = np.zeros_like(mask, dtype=bool)
    for i in range(n):
        if d_scaled[i] == 0:
            continue
        for j in range(k + 1):
            g = ch.g_src_ap[i] if j == 0 else ch.g_src_rel[i, j - 1]
            if pmax * g / wn0 * ub_src[i, j] <= LN2 * d_scaled[i]:
                dead[i, j] = True
    for j in range(1, k + 1):
        cap = pmax * ch.g_rel_ap[j - 1] / wn0 * ub_rel[j - 1] / LN2
        feeders = [i for i in range(n) if mask[i, j] != 0 and not dead[i, j] and d_scaled[i] > 0]
        if feeders and all(d_scaled[i] >= cap for i in feeders):
            dead[feeders, j] = True
    if np.any(dead & (mask == 1)):
        return mask, True
    mask[dead] = 0
    for i in range(n):
        if not np.any(mask[i] != 0):
            return mask, True
    return mask, False


def build_relaxation(instance: NetworkInstance, fixed=None, tau_ub=None) -> RelaxedModel:
    """Assemble the relaxed convex problem for a (partial) relay assignment.

    Args:
        instance: the network.
        fixed: per-source forced relay (``-1`` = free) or an ``N x (K+1)``
            mask with entries -1 (free), 0 (forced off), 1 (forced on).
        tau_ub: McCormick upper bound on every IT slot in seconds; a scalar
            or a ``(src (N, K+1), rel (K,))`` tuple.
    """
    p = instance.params
    ch = instance.channels
    n, k = instance.n, instance.k
    mask = _normalize_mask(fixed, n, k)
    if tau_ub is None:
        raise ValueError("tau_ub is required")
    ub_src, ub_rel = _broadcast_ub(tau_ub, n, k)

    wn0 = p.noise_power
    pa = p.ap_power_pa
    pmax = p.max_ul_power
    demands = p.demands
    pos_d = demands[demands > 0]
    t_unit = float(np.mean(pos_d) / p.bandwidth_w) if pos_d.size else 1.0
    d_scaled = demands / (p.bandwidth_w * t_unit)

    mask, empty = _drop_dead_candidates(instance, mask, ub_src / t_unit, ub_rel / t_unit, d_scaled)
    if empty:
        return RelaxedModel(
            instance, mask, ub_src, ub_rel, t_unit, [], None, np.zeros(0, dtype=bool), np.zeros(0), {}, True
        )

    links: list[_Link] = []
    n_var = 1  # tau0 at index 0
    b_vars: dict[tuple[int, int], int] = {}
    relay_used = np.zeros(k + 1, dtype=bool)
    for i in range(n):
        row = mask[i]
        cands = [j for j in range(k + 1) if row[j] != 0]
        forced = [j for j in cands if row[j] == 1]
        if forced:
            cands = forced
        for j in cands:
            g = ch.g_src_ap[i] if j == 0 else ch.g_src_rel[i, j - 1]
            ub = float(ub_src[i, j])
            if not ub > 0:
                raise ValueError(f"tau_ub for ({i}, {j}) must be positive")
            link = _Link(
                "src",
                i,
                j,
                gamma=g * p.zeta_src[i] * pa * ch.h_ap_src[i] / wn0,
                rho=pmax * g / wn0,
                gain_ratio=wn0 / g,
                tau_ub=ub / t_unit,
            )
            link.it, link.is_ = n_var, n_var + 1
            n_var += 2
            if len(cands) > 1:
                link.b_index = n_var
                b_vars[(i, j)] = n_var
                n_var += 1
            links.append(link)
            relay_used[j] = True
    for j in range(1, k + 1):
        if not relay_used[j]:
            continue
        g = ch.g_rel_ap[j - 1]
        link = _Link(
            "rel",
            -1,
            j,
            gamma=g * p.zeta_rel[j - 1] * pa * ch.h_ap_rel[j - 1] / wn0,
            rho=pmax * g / wn0,
            gain_ratio=wn0 / g,
            tau_ub=float(ub_rel[j - 1]) / t_unit,
        )
        link.it, link.is_ = n_var, n_var + 1
        n_var += 2
        links.append(link)

    # pinned variable x[one] == 1 carries the constant demand terms
    one = n_var
    n_var += 1
    c = np.zeros(n_var)
    c[0] = 1.0
    G_rows: list[np.ndarray] = []
    h_vals: list[float] = []
    relax: list[bool] = []

    def add(coefs: dict[int, float], rhs: float, relaxable: bool):
        row = np.zeros(n_var)
        for idx, v in coefs.items():
            row[idx] += v
        G_rows.append(row)
        h_vals.append(rhs)
        relax.append(relaxable)

    C = np.zeros((len(links), n_var))
    feeders: dict[int, list[_Link]] = {}
    for r, link in enumerate(links):
        c[link.it] = 1.0
        add({link.it: -1.0}, 0.0, False)  # tau > 0
        add({link.is_: -1.0}, 0.0, False)  # A > 0
        add({link.it: 1.0}, link.tau_ub, True)  # tau <= tau_ub
        add({link.is_: 1.0, 0: -link.gamma}, 0.0, True)  # harvested energy
        if math.isfinite(link.rho):
            add({link.is_: 1.0, link.it: -link.rho}, 0.0, True)  # A <= Pmax*w, w <= tau
        if link.kind != "src":
            continue
        if link.b_index is not None:
            add({link.b_index: -1.0}, 0.0, False)  # b > 0
            if math.isfinite(link.rho):
                add({link.is_: 1.0, link.b_index: -link.rho * link.tau_ub}, 0.0, True)  # w <= tau_ub*b
            C[r, link.b_index] = d_scaled[link.i]
        else:
            C[r, one] = d_scaled[link.i]
        if link.j > 0:
            feeders.setdefault(link.j, []).append(link)

    # tau0 <= total <= tau_ub keeps phase one bounded
    add({0: 1.0}, max(float(np.max(ub_src)), float(np.max(ub_rel, initial=0.0))) / t_unit, True)

    # relay slots forward everything their sources send
    for r, link in enumerate(links):
        if link.kind != "rel":
            continue
        any_fixed = False
        for s_link in feeders.get(link.j, []):
            if s_link.b_index is None:
                C[r, one] += d_scaled[s_link.i]
                any_fixed = True
            else:
                C[r, s_link.b_index] += d_scaled[s_link.i]
        # P_r <= Pmax * min(1, sum_i b_ij): the second branch via envelopes of b_ij*tau_r;
        # a forced feeder makes it redundant
        if math.isfinite(link.rho) and not any_fixed:
            coefs = {link.is_: 1.0}
            for s_link in feeders.get(link.j, []):
                coefs[s_link.b_index] = coefs.get(s_link.b_index, 0.0) - link.rho * link.tau_ub
            add(coefs, 0.0, True)

    G = np.array(G_rows)
    h = np.array(h_vals)

    A_rows, b_eq = [], []
    for i in range(n):
        idx = [v for (ii, _), v in b_vars.items() if ii == i]
        if idx:
            row = np.zeros(n_var)
            row[idx] = 1.0
            A_rows.append(row)
            b_eq.append(1.0)
    pin = np.zeros(n_var)
    pin[one] = 1.0
    A_rows.append(pin)
    b_eq.append(1.0)
    A = np.array(A_rows)
    beq = np.array(b_eq)

    rate_it = np.array([l.it for l in links], dtype=int)
    rate_is = np.array([l.is_ for l in links], dtype=int)
    prob = ConvexProblem(c, G, h, A, beq, rate_it, rate_is, C)
    x0 = _initial_point(prob, links, b_vars, n, one)
    return RelaxedModel(
        instance, mask, ub_src, ub_rel, t_unit, links, prob, np.array(relax, dtype=bool), x0, b_vars
    )


def _initial_point(prob: ConvexProblem, links, b_vars, n, one) -> np.ndarray:
    x = np.zeros(prob.n)
    x[one] = 1.0
    counts: dict[int, int] = {}
    for (i, _), _v in b_vars.items():
        counts[i] = counts.get(i, 0) + 1
    for (i, _), v in b_vars.items():
        x[v] = 1.0 / counts[i]
    for link in links:
        x[link.it] = 0.5 * link.tau_ub
    # demand each slot must carry at the uniform b
    need = prob.C @ x
    for r, link in enumerate(links):
        tau = x[link.it]
        s_need = tau * np.expm1(max(need[r], 0.0) / tau * math.log(2.0))
        x[link.is_] = 2.0 * s_need + 1e-9
    x[0] = 2.0 * max(x[l.is_] / l.gamma for l in links) if links else 1.0
    return x


def solve_relaxation(model: RelaxedModel, tol: float = 1e-6, max_newton: int = 600) -> RelaxedSolution:
    """Solve the relaxed model; the returned ``lower_bound`` is certified by the barrier gap."""
    if model.empty:
        return RelaxedSolution(math.inf, math.inf, INFEASIBLE, math.nan)
    prob = model.problem
    x0 = model.x_start
    steps = 0
    bar = barrier._Barrier(prob)
    if not bar.in_domain(x0):
        x0, steps, certified = barrier.phase_one(prob, x0, model.relax_rows, max_newton=max_newton)
        if x0 is None:
            if certified:
                return RelaxedSolution(math.inf, math.inf, INFEASIBLE, math.nan, newton_steps=steps)
            return RelaxedSolution(math.nan, -math.inf, UNKNOWN, math.nan, newton_steps=steps)
    res = barrier.barrier_solve(prob, x0, rel_tol=tol, max_newton=max_newton)
    return _unpack(model, res, steps)


def _unpack(model: RelaxedModel, res: barrier.BarrierResult, steps0: int) -> RelaxedSolution:
    inst = model.instance
    n, k = inst.n, inst.k
    tu = model.time_unit
    x = res.x
    b = np.zeros((n, k + 1))
    tau_src = np.zeros((n, k + 1))
    e_src = np.zeros((n, k + 1))
    w_src = np.zeros((n, k + 1))
    tau_rel = np.zeros(k)
    e_rel = np.zeros(k)
    for link in model.links:
        tau = x[link.it] * tu
        tau = 0.0 if tau < ZERO_TIME else tau
        energy = x[link.is_] * tu * link.gain_ratio
        if link.kind == "src":
            bij = x[link.b_index] if link.b_index is not None else 1.0
            b[link.i, link.j] = bij
            tau_src[link.i, link.j] = tau
            e_src[link.i, link.j] = energy
            w_src[link.i, link.j] = McCormick(link.tau_ub * tu).upper(tau, bij)
        else:
            tau_rel[link.j - 1] = tau
            e_rel[link.j - 1] = energy
    return RelaxedSolution(
        objective=res.objective * tu,
        lower_bound=res.lower_bound * tu,
        status=res.status if res.status != barrier.OPTIMAL else OPTIMAL,
        kkt_residual=res.kkt_residual,
        tau0=x[0] * tu,
        b=b,
        tau_src=tau_src,
        energy_src=e_src,
        w_src=w_src,
        tau_rel=tau_rel,
        energy_rel=e_rel,
        newton_steps=steps0 + res.newton_steps,
    )


def perspective_rate(tau, a, g, w, n0):
    """Bits carried by a slot of length ``tau`` spending energy ``a``; zero at ``tau = 0``."""
    tau = np.asarray(tau, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = tau * w * np.log2(1.0 + a * g / (np.where(tau > 0, tau, 1.0) * w * n0))
    return np.where(tau > 0, val, 0.0)[()]


__all__ = [
    "FREE",
    "INFEASIBLE",
    "MAX_ITER",
    "OPTIMAL",
    "UNKNOWN",
    "McCormick",
    "RelaxedModel",
    "RelaxedSolution",
    "build_relaxation",
    "perspective_rate",
    "solve_relaxation",
]
