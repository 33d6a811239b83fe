"""Scalar special functions and root finding shared by the solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

INV_E = math.exp(-1.0)

# schedule lengths are ~1e-3 s, so 1 ns keeps ~1e-6 relative precision
TIME_EPS = 1e-9


class BracketError(ValueError):
    """Raised when a bracket does not contain a sign change."""


@dataclass(frozen=True)
class RootFindConfig:
    abs_tol: float = TIME_EPS
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def _w0_initial_guess(x: float) -> float:
    q = math.e * x + 1.0
    if q < 0.5:
        # branch-point series in p = sqrt(2(ex + 1))
        p = math.sqrt(2.0 * max(q, 0.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    if x < 3.0:
        return math.log1p(x) * (1.0 - 0.25 * math.log1p(x) / (1.0 + math.log1p(x)))
    l1 = math.log(x)
    l2 = math.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w0(x: float, abs_tol: float = 1e-12, max_iter: int = 200) -> float:
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration from a series/asymptotic seed; bisection on
    ``[-1, max(1, log1p(x))]`` takes over if Halley stalls.

    Raises:
        ValueError: if ``x < -1/e``.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("lambert_w0 of NaN")
    if x < -INV_E:
        # tolerate the rounding of (something)/e landing just below -1/e
        if -INV_E - x > 4e-16:
            raise ValueError(f"lambert_w0 domain is x >= -1/e, got {x!r}")
        return -1.0
    if x == 0.0:
        return 0.0
    if x == -INV_E:
        return -1.0
    if math.isinf(x):
        return math.inf

    w = _w0_initial_guess(x)
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 <= 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w_new = w - step
        if w_new <= -1.0:
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 1e-15 * (1.0 + abs(w_new)):
            w = w_new
            break
        w = w_new
    if abs(w * math.exp(w) - x) <= abs_tol * max(1.0, abs(x)) and w >= -1.0:
        return w

    # fallback: w*exp(w) is increasing on [-1, inf)
    lo, hi = -1.0, max(1.0, math.log1p(abs(x)) + 1.0)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mid * math.exp(mid) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisect(
    f: Callable[[float], float], lb: float, ub: float, abs_tol: float, max_iter: int
) -> tuple[float, int]:
    """Bisection returning ``(root, iterations)``.

    The bracket is halved until it is narrower than ``2 * abs_tol``.
    """
    if lb > ub:
        lb, ub = ub, lb
    flb = f(lb)
    if flb == 0.0:
        return lb, 0
    fub = f(ub)
    if fub == 0.0:
        return ub, 0
    if flb * fub > 0.0:
        raise BracketError(f"no sign change on [{lb}, {ub}]: f={flb}, {fub}")
    lb_sign = flb > 0.0
    it = 0
    while ub - lb >= 2.0 * abs_tol and it < max_iter:
        mid = 0.5 * (lb + ub)
        if mid == lb or mid == ub:
            break
        fm = f(mid)
        it += 1
        if fm == 0.0:
            return mid, it
        if (fm > 0.0) == lb_sign:
            lb = mid
        else:
            ub = mid
    return 0.5 * (lb + ub), it


def bisect_root(
    f: Callable[[float], float],
    lb: float,
    ub: float,
    cfg: RootFindConfig | None = None,
) -> float:
    """Root of a monotone scalar function bracketed by ``[lb, ub]``.

    Raises:
        BracketError: if ``f(lb)`` and ``f(ub)`` have the same strict sign.
    """
    cfg = cfg or RootFindConfig()
    if lb == ub:
        if f(lb) != 0.0:
            raise BracketError(f"degenerate bracket at {lb} is not a root")
        return lb
    root, _ = bisect(f, lb, ub, cfg.abs_tol, cfg.max_iter)
    return root


def bisection_iteration_bound(width: float, abs_tol: float) -> int:
    """Worst-case iteration count of :func:`bisect` on a bracket of ``width``."""
    if width <= 2.0 * abs_tol:
        return 0
    return math.ceil(math.log2(width / abs_tol)) + 2
