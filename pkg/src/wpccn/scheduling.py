"""Multi-link scheduling and power control with a shared EH slot.

For a fixed EH duration every link's IT time has a closed characterization
(power-capped or energy-limited); the total length ``g(tau0)`` is convex in
``tau0`` and POWMU bisects on the sign of its derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import TIME_EPS
from .single import LN2, SourceLink, ddot_solution, optimal_single, v_curve_derivative


class InfeasibleError(ValueError):
    """An EH duration too short to fund a link's demand at any IT length."""


@dataclass(frozen=True)
class SchedulingInstance:
    links: tuple[SourceLink, ...]
    pmax: float

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if not self.links:
            raise ValueError("scheduling instance needs at least one link")
        if not self.pmax > 0:
            raise ValueError("pmax must be positive")


@dataclass(eq=False)
class Schedule:
    tau0: float
    tau_it: np.ndarray
    p_tx: np.ndarray
    total: float
    iterations: int = 0
    bounds: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "tau0_s": self.tau0,
            "tau_it_s": [float(t) for t in self.tau_it],
            "p_tx_w": [float(p) for p in self.p_tx],
            "total_s": self.total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            tau0=d["tau0_s"],
            tau_it=np.asarray(d["tau_it_s"], dtype=float),
            p_tx=np.asarray(d["p_tx_w"], dtype=float),
            total=d["total_s"],
        )


@dataclass
class _Prepared:
    """Per-link constants reused across the many ``g`` evaluations."""

    link: SourceLink
    tau0_hat: float
    tau0_ddot: float
    tau_it_ddot: float
    # tau0 = scale * expm1(x) / x with x = demand*ln2/(W*tau_it)
    scale: float
    x_unit: float = field(init=False)

    def __post_init__(self):
        self.x_unit = self.link.demand * LN2 / self.link.bandwidth


def _prepare(link: SourceLink, pmax: float) -> _Prepared:
    ddot = ddot_solution(link, pmax)
    hat = optimal_single(link, pmax)
    scale = link.demand * LN2 / (link.bandwidth * link.gamma)
    return _Prepared(link, hat.tau0, ddot.tau0, ddot.tau_it, scale)


def _solve_energy_limited(tau0: float, scale: float) -> float:
    """Positive root ``x`` of ``expm1(x) = c*x`` with ``c = tau0/scale > 1``.

    Newton from the right of the root converges monotonically (the function
    is convex and increasing there); bisection guards the bracket.
    """
    c = tau0 / scale
    if not c > 1.0:
        raise InfeasibleError(f"EH time {tau0:.3e} s cannot fund the demand (needs > {scale:.3e} s)")
    hi = min(2.0 * (c - 1.0), 2.0 * math.log(c) + 2.0)
    lo = 0.0
    x = hi
    for _ in range(200):
        ex = math.exp(x)
        h = math.expm1(x) - c * x
        if h > 0.0:
            hi = x
        elif h < 0.0:
            lo = x
        else:
            return x
        dh = ex - c
        x_new = x - h / dh if dh > 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * x:
            return x_new
        x = x_new
    return x


def _it_time(p: _Prepared, tau0: float) -> tuple[float, bool]:
    """IT time at ``tau0`` and whether the power cap is the binding limit."""
    if p.link.demand == 0:
        return 0.0, True
    if tau0 >= p.tau0_ddot:
        return p.tau_it_ddot, True
    x = _solve_energy_limited(tau0, p.scale)
    return p.x_unit / x, False


def subproblem_it_time(tau0: float, link: SourceLink, pmax: float) -> float:
    """Shortest IT duration of ``link`` given a fixed EH duration ``tau0``.

    Raises:
        InfeasibleError: if no finite IT duration meets the demand.
    """
    t, _ = _it_time(_prepare(link, pmax), tau0)
    return t


def _g_and_derivative(prepared: Sequence[_Prepared], tau0: float) -> tuple[float, float, list[float]]:
    taus = []
    deriv = 1.0
    for p in prepared:
        t, capped = _it_time(p, tau0)
        taus.append(t)
        if not capped:
            deriv += 1.0 / v_curve_derivative(t, p.link)
    return tau0 + sum(taus), deriv, taus


def g_value(tau0: float, instance: SchedulingInstance) -> float:
    """Total schedule length when the EH slot lasts ``tau0``."""
    prepared = [_prepare(l, instance.pmax) for l in instance.links]
    return _g_and_derivative(prepared, tau0)[0]


def g_derivative(tau0: float, instance: SchedulingInstance) -> float:
    """Right derivative of :func:`g_value` (capped links contribute nothing)."""
    prepared = [_prepare(l, instance.pmax) for l in instance.links]
    return _g_and_derivative(prepared, tau0)[1]


def _powers(prepared: Sequence[_Prepared], tau0: float, taus: Sequence[float], pmax: float) -> np.ndarray:
    out = np.zeros(len(taus))
    for i, (p, t) in enumerate(zip(prepared, taus)):
        if t > 0:
            out[i] = min(pmax, p.link.harvest_power * tau0 / t)
    return out


def _assemble(instance, active, prepared, tau0, taus, iterations, bounds) -> Schedule:
    n = len(instance.links)
    tau_it = np.zeros(n)
    p_tx = np.zeros(n)
    if active:
        tau_it[active] = taus
        p_tx[active] = _powers(prepared, tau0, taus, instance.pmax)
    else:
        tau0 = 0.0
    return Schedule(tau0, tau_it, p_tx, tau0 + float(sum(taus)), iterations, bounds)


def tau0_bounds(prepared: Sequence[_Prepared]) -> tuple[float, float]:
    lb = max(p.tau0_hat for p in prepared)
    ub = max(p.tau0_ddot for p in prepared)
    if math.isinf(ub):
        # no power cap: tau0* <= g(tau0*) <= g(lb)
        ub = _g_and_derivative(prepared, lb)[0]
    return lb, ub


def powmu(instance: SchedulingInstance, eps: float = TIME_EPS) -> Schedule:
    """Optimal EH duration by bisection on the sign of ``dg/dtau0``.

    Zero-demand links are left out of the search and reported with zero time
    and power.
    """
    active = [i for i, l in enumerate(instance.links) if l.demand > 0]
    if not active:
        return _assemble(instance, active, [], 0.0, [], 0, (0.0, 0.0))
    prepared = [_prepare(instance.links[i], instance.pmax) for i in active]
    lb, ub = tau0_bounds(prepared)
    bounds = (lb, ub)
    iterations = 0
    g_lb, d_lb, taus = _g_and_derivative(prepared, lb)
    tau0 = lb
    # convexity: a non-negative slope at lb means lb is optimal
    if d_lb < -1e-9 and ub - lb > 2.0 * eps:
        while ub - lb > 2.0 * eps:
            mid = 0.5 * (lb + ub)
            _, d, _ = _g_and_derivative(prepared, mid)
            iterations += 1
            if d >= 0.0:
                ub = mid
            if d <= 0.0:
                lb = mid
            tau0 = mid
        _, _, taus = _g_and_derivative(prepared, tau0)
    return _assemble(instance, active, prepared, tau0, taus, iterations, bounds)


def max_eh(instance: SchedulingInstance) -> Schedule:
    """EH duration set to the largest individually optimal EH time."""
    active = [i for i, l in enumerate(instance.links) if l.demand > 0]
    if not active:
        return _assemble(instance, active, [], 0.0, [], 0, (0.0, 0.0))
    prepared = [_prepare(instance.links[i], instance.pmax) for i in active]
    tau0 = max(p.tau0_hat for p in prepared)
    _, _, taus = _g_and_derivative(prepared, tau0)
    return _assemble(instance, active, prepared, tau0, taus, 0, (tau0, tau0))


def schedule_violation(instance: SchedulingInstance, sched: Schedule) -> float:
    """Largest relative violation of the energy, demand and power-cap constraints."""
    worst = 0.0
    for link, t, p in zip(instance.links, sched.tau_it, sched.p_tx):
        if link.demand == 0:
            continue
        energy = link.harvest_power * sched.tau0
        worst = max(worst, (p * t - energy) / energy)
        bits = t * link.bandwidth * math.log2(1.0 + link.snr(p))
        worst = max(worst, (link.demand - bits) / link.demand)
        if math.isfinite(instance.pmax):
            worst = max(worst, (p - instance.pmax) / instance.pmax)
    total = sched.tau0 + float(np.sum(sched.tau_it))
    worst = max(worst, abs(total - sched.total) / max(sched.total, 1e-300))
    return worst
