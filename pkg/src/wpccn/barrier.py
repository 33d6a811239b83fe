"""Primal log-barrier interior-point method for the relaxation's problem class.

Problem form::

    minimize    c @ x
    subject to  G @ x <= h
                A @ x == b
                x[it] * log2(1 + x[is_] / x[it]) - C[k] @ x >= 0   for each k

The last family is the perspective of ``log2(1 + u)`` minus a linear term; it
is concave, so ``-log`` of it is a valid self-concordant-style barrier term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"
UNKNOWN = "unknown"  # feasibility neither found nor refuted


@dataclass
class ConvexProblem:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    it: np.ndarray  # perspective time index per rate constraint
    is_: np.ndarray  # perspective energy index per rate constraint
    C: np.ndarray  # linear part subtracted from each perspective

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0] + self.it.shape[0]


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    lower_bound: float
    status: str
    kkt_residual: float
    newton_steps: int


def _perspective_parts(x, it, is_):
    tau = x[it]
    s = x[is_]
    u = s / tau
    psi = np.log1p(u) / LN2
    dpsi = 1.0 / ((1.0 + u) * LN2)
    d2psi = -dpsi / (1.0 + u)
    return tau, u, tau * psi, psi - u * dpsi, dpsi, d2psi


class _Barrier:
    """Barrier value, gradient and Hessian for a fixed problem."""

    def __init__(self, prob: ConvexProblem):
        self.p = prob

    def in_domain(self, x) -> bool:
        p = self.p
        if np.any(p.h - p.G @ x <= 0):
            return False
        if p.it.size:
            tau = x[p.it]
            if np.any(tau <= 0) or np.any(x[p.is_] < 0):
                return False
            f = tau * np.log1p(x[p.is_] / tau) / LN2 - p.C @ x
            if np.any(f <= 0) or not np.all(np.isfinite(f)):
                return False
        return True

    def value(self, x, t) -> float:
        p = self.p
        r = p.h - p.G @ x
        val = t * (p.c @ x) - np.sum(np.log(r))
        if p.it.size:
            _, _, persp, *_ = _perspective_parts(x, p.it, p.is_)
            val -= np.sum(np.log(persp - p.C @ x))
        return float(val)

    def _slacks(self, x):
        p = self.p
        r = p.h - p.G @ x
        if p.it.size:
            _, _, persp, *_ = _perspective_parts(x, p.it, p.is_)
            return r, persp - p.C @ x
        return r, np.zeros(0)

    def decrease(self, x, dx, alpha, t, slacks) -> float:
        """``value(x + alpha*dx) - value(x)`` from slack ratios (no cancellation)."""
        r0, f0 = slacks
        r1, f1 = self._slacks(x + alpha * dx)
        return float(t * alpha * (self.p.c @ dx) - np.sum(np.log(r1 / r0)) - np.sum(np.log(f1 / f0)))

    def derivatives(self, x, t):
        p = self.p
        r = p.h - p.G @ x
        inv_r = 1.0 / r
        grad = t * p.c + p.G.T @ inv_r
        Gs = p.G * inv_r[:, None]
        H = Gs.T @ Gs
        if p.it.size:
            tau, u, persp, dtau, ds, d2 = _perspective_parts(x, p.it, p.is_)
            f = persp - p.C @ x
            F = -p.C.copy()
            rows = np.arange(p.it.size)
            F[rows, p.it] += dtau
            F[rows, p.is_] += ds
            inv_f = 1.0 / f
            grad -= F.T @ inv_f
            Fs = F * inv_f[:, None]
            H += Fs.T @ Fs
            # -hess(f)/f; hess of the perspective is d2/tau * [[u^2, -u], [-u, 1]]
            w = -d2 / tau * inv_f
            np.add.at(H, (p.it, p.it), w * u * u)
            np.add.at(H, (p.it, p.is_), -w * u)
            np.add.at(H, (p.is_, p.it), -w * u)
            np.add.at(H, (p.is_, p.is_), w)
        return grad, H

    def duals(self, x, t):
        p = self.p
        lam = 1.0 / (t * (p.h - p.G @ x))
        if p.it.size:
            tau, u, persp, dtau, ds, _ = _perspective_parts(x, p.it, p.is_)
            mu = 1.0 / (t * (persp - p.C @ x))
            F = -p.C.copy()
            rows = np.arange(p.it.size)
            F[rows, p.it] += dtau
            F[rows, p.is_] += ds
        else:
            mu = np.zeros(0)
            F = np.zeros((0, x.size))
        return lam, mu, F


def _newton_direction(grad, H, A, eq_resid=None):
    """Equality-constrained Newton step; ``eq_resid = A@x - b`` is driven back to zero."""
    n = grad.size
    p = A.shape[0]
    if p == 0:
        try:
            return np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(H, -grad, rcond=None)[0]
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-grad, np.zeros(p) if eq_resid is None else -eq_resid])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n]


def _center(bar: _Barrier, x, t, max_steps, tol=1e-9, stop=None):
    """Damped Newton on the barrier at parameter ``t``; returns (x, steps, converged)."""
    A, b = bar.p.A, bar.p.b
    steps = 0
    while steps < max_steps:
        grad, H = bar.derivatives(x, t)
        # round-off in the KKT solves lets A@x drift; each step pulls it back
        dx = _newton_direction(grad, H, A, A @ x - b)
        dec2 = -float(grad @ dx)
        if dec2 < -1e-8 * (1.0 + float(np.abs(grad) @ np.abs(dx))):
            # not a descent direction: the KKT solve lost precision
            return x, steps, False
        if dec2 / 2.0 <= tol:
            return x, steps, True
        slacks = bar._slacks(x)
        alpha = 1.0
        while True:
            xn = x + alpha * dx
            if bar.in_domain(xn) and bar.decrease(x, dx, alpha, t, slacks) <= -0.25 * alpha * dec2:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                return x, steps, False
        x = xn
        steps += 1
        if stop is not None and stop(x):
            return x, steps, True
    return x, steps, False


def barrier_solve(
    prob: ConvexProblem,
    x0: np.ndarray,
    rel_tol: float = 1e-7,
    mu: float = 20.0,
    max_newton: int = 600,
) -> BarrierResult:
    """Solve from a strictly feasible ``x0`` (``A @ x0 == b`` must hold)."""
    bar = _Barrier(prob)
    m = prob.m
    x = x0.copy()
    obj = float(prob.c @ x)
    t = m / max(abs(obj), 1e-12)
    total = 0
    status = OPTIMAL
    while True:
        x, steps, ok = _center(bar, x, t, max_newton - total)
        total += steps
        obj = float(prob.c @ x)
        gap = m / t
        if not ok and total >= max_newton:
            status = MAX_ITER
            break
        if gap <= rel_tol * max(abs(obj), 1e-12):
            break
        t *= mu
    # Euclidean stationarity is dominated by near-boundary coordinates, so the
    # residual is measured in the local (Hessian) norm: Newton decrement per
    # unit of t, relative to the objective, alongside the duality gap.
    grad, H = bar.derivatives(x, t)
    dx = _newton_direction(grad, H, prob.A)
    dec = math.sqrt(max(-float(grad @ dx), 0.0))
    denom = max(abs(obj), 1e-12)
    kkt = max(dec * math.sqrt(m) / t / denom, (m / t) / denom)
    return BarrierResult(x, obj, obj - m / t, status, kkt, total)


def phase_one(
    prob: ConvexProblem,
    x0: np.ndarray,
    relax_lin: np.ndarray,
    margin: float = 1e-9,
    max_newton: int = 600,
) -> tuple[np.ndarray | None, int, bool]:
    """Find a strictly feasible point by minimizing a shared violation ``sigma``.

    Linear rows flagged in ``relax_lin`` and every rate constraint are
    relaxed by ``sigma``; the remaining rows (domain constraints) must hold
    at ``x0``.  Returns ``(x, steps, True)`` on success, ``(None, steps, True)``
    when the optimal violation is certified positive and ``(None, steps,
    False)`` when the search stalls without a certificate.
    """
    n = prob.n
    r = prob.h - prob.G @ x0
    viol = np.max(-r[relax_lin]) if relax_lin.any() else -np.inf
    if prob.it.size:
        tau = x0[prob.it]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = tau * np.log1p(x0[prob.is_] / tau) / LN2 - prob.C @ x0
        viol = max(viol, float(np.max(-f)))
    sigma0 = max(viol, 0.0) + 1.0
    G1 = np.hstack([prob.G, -relax_lin[:, None].astype(float)])
    C1 = np.hstack([prob.C, -np.ones((prob.C.shape[0], 1))])
    c1 = np.zeros(n + 1)
    c1[-1] = 1.0
    # keep sigma bounded below so the phase-one problem stays bounded
    G1 = np.vstack([G1, np.eye(1, n + 1, n) * -1.0])
    h1 = np.concatenate([prob.h, [sigma0 + 10.0 * (abs(sigma0) + 1.0)]])
    A1 = np.hstack([prob.A, np.zeros((prob.A.shape[0], 1))])
    p1 = ConvexProblem(c1, G1, h1, A1, prob.b, prob.it, prob.is_, C1)
    bar = _Barrier(p1)
    x = np.concatenate([x0, [sigma0]])
    if not bar.in_domain(x):
        raise ValueError("phase-one start violates a hard domain constraint")
    m = p1.m
    t = 1.0
    total = 0
    while total < max_newton:
        x, steps, ok = _center(bar, x, t, max_newton - total, stop=lambda z: z[-1] < -margin)
        total += steps
        if x[-1] < -margin:
            return x[:n], total, True
        if not ok:
            return None, total, False
        # sigma - m/t bounds the optimal violation from below at a center
        if x[-1] - m / t > 0:
            return None, total, True
        if m / t < 1e-13:
            return None, total, False
        t *= 20.0
    return None, total, False
