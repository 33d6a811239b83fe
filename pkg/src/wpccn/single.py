"""Optimal EH/IT durations of a single source-destination link.

A link harvests during ``tau0`` and then spends all (or, when the power cap
binds, part) of that energy to push ``demand`` bits in ``tau_it`` seconds.
The feasible boundary is the curve ``tau0 = V(tau_it)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import lambert_w0

LN2 = math.log(2.0)

UNCONSTRAINED = "unconstrained"
PMAX_BOUND = "pmax_bound"


@dataclass(frozen=True)
class SourceLink:
    """One transmitter (a source or a loaded relay) and its destination."""

    h_dl: float
    g_ul: float
    demand: float
    zeta: float
    ap_power: float
    bandwidth: float
    noise_psd: float

    def __post_init__(self):
        if not (self.h_dl > 0 and self.g_ul > 0):
            raise ValueError("channel gains must be positive")
        if self.demand < 0:
            raise ValueError("demand must be non-negative")
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0, 1]")

    @property
    def noise_power(self) -> float:
        return self.bandwidth * self.noise_psd

    @property
    def harvest_power(self) -> float:
        """Power collected per second of EH, ``zeta * P_A * h``."""
        return self.zeta * self.ap_power * self.h_dl

    @property
    def gamma(self) -> float:
        """End-to-end SNR factor ``g * zeta * P_A * h / (W * N0)``."""
        return self.g_ul * self.harvest_power / self.noise_power

    def snr(self, p_tx: float) -> float:
        return p_tx * self.g_ul / self.noise_power


@dataclass(frozen=True)
class LinkSolution:
    tau0: float
    tau_it: float
    p_tx: float
    regime: str = UNCONSTRAINED

    @property
    def total(self) -> float:
        return self.tau0 + self.tau_it


def v_curve(tau_it: float, link: SourceLink) -> float:
    """Smallest EH time that funds an IT slot of length ``tau_it``."""
    if link.demand == 0:
        return 0.0
    if tau_it <= 0:
        return math.inf
    x = link.demand * LN2 / (link.bandwidth * tau_it)
    try:
        return tau_it / link.gamma * math.expm1(x)
    except OverflowError:
        return math.inf


def _expm1_minus_xexp(x: float) -> float:
    """``expm1(x) - x*exp(x)`` without cancellation for small ``x``."""
    if x < 0.1:
        # -sum_{n>=2} (n-1) x^n / n!
        total, term = 0.0, x
        for n in range(2, 20):
            term *= x / n
            total -= (n - 1) * term
        return total
    return math.expm1(x) - x * math.exp(x)


def v_curve_derivative(tau_it: float, link: SourceLink) -> float:
    """``dV/dtau_it``; strictly negative for positive demand."""
    x = link.demand * LN2 / (link.bandwidth * tau_it)
    try:
        return _expm1_minus_xexp(x) / link.gamma
    except OverflowError:
        return -math.inf


def dot_solution(link: SourceLink) -> LinkSolution:
    """Tangent point of ``V`` with a slope -1 line: optimum without a power cap."""
    if link.demand == 0:
        return LinkSolution(0.0, 0.0, 0.0, UNCONSTRAINED)
    gamma = link.gamma
    alpha = lambert_w0((gamma - 1.0) / math.e) + 1.0
    tau_it = link.demand * LN2 / (link.bandwidth * alpha)
    tau0 = tau_it / gamma * math.expm1(alpha)
    p = link.harvest_power * tau0 / tau_it
    return LinkSolution(tau0, tau_it, p, UNCONSTRAINED)


def ddot_solution(link: SourceLink, pmax: float) -> LinkSolution:
    """Point where energy, demand and power-cap constraints are all tight."""
    if not pmax > 0:
        raise ValueError("pmax must be positive")
    if link.demand == 0:
        return LinkSolution(0.0, 0.0, 0.0, PMAX_BOUND)
    if math.isinf(pmax):
        return LinkSolution(math.inf, 0.0, math.inf, PMAX_BOUND)
    tau_it = link.demand / (link.bandwidth * math.log2(1.0 + link.snr(pmax)))
    tau0 = pmax * tau_it / link.harvest_power
    return LinkSolution(tau0, tau_it, pmax, PMAX_BOUND)


def optimal_single(link: SourceLink, pmax: float = math.inf) -> LinkSolution:
    """Minimum-length schedule of one link under the power cap."""
    dot = dot_solution(link)
    # small slack keeps boundary cases from flapping between regimes
    if dot.p_tx <= pmax * (1.0 + 1e-9):
        return dot
    return ddot_solution(link, pmax)
