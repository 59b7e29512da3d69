"""Gradient-based minimisation with bounds and inequality constraints.

Three methods are available:

``slsqp``
    Sequential least-squares QP (scipy's implementation of Kraft's code),
    used for dense problems with a few hundred variables at most.
``sqp-diag``
    SQP with a separable diagonal Hessian model ``h_i = c |g_i| / x_i``,
    a move limit, and an exact dual solve for a single linear(ised)
    constraint. Scales to hundreds of thousands of variables.
``projected-gradient``
    Projected steepest descent with adaptive step; a slow but robust
    reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize as so


class OptimizerError(RuntimeError):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


@dataclass
class NlpProblem:
    """``min f(x)`` s.t. ``c_i(x) <= 0`` and ``lower <= x <= upper``.

    Callbacks return ``(value, gradient)``.
    """
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constraints: Sequence[Callable[[np.ndarray], tuple[float, np.ndarray]]] = ()

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float).copy()
        n = self.x0.size
        self.lower = np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent bounds: lower > upper")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("start point violates bounds")

    @property
    def n(self) -> int:
        return self.x0.size


@dataclass
class OptimizeOptions:
    method: str = "sqp-diag"
    max_iter: int = 300
    rtol: float = 1e-5
    window: int = 3
    move: float = 0.2
    line_search: bool = True
    curvature: float | Callable = 2.0     # h = curvature * |g|, scalar factor divided by x or callable of x
    adaptive_move: bool = False
    constraint_tol: float = 1e-6
    callback: Callable | None = None


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    status: str                      # converged | max-iter | stalled
    nit: int
    history: list = field(default_factory=list)
    message: str = ""


def _check(x, val, grad, what):
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise OptimizerError(f"non-finite {what} at iterate", x=np.array(x, copy=True))


def _converged(hist, rtol, window):
    if len(hist) <= window:
        return False
    f = [h["f"] for h in hist[-window - 1:]]
    ref = max(abs(f[-1]), 1e-300)
    return all(abs(f[k + 1] - f[k]) / ref < rtol for k in range(window))


def minimize(problem: NlpProblem, options: OptimizeOptions | None = None) -> OptimizeResult:
    opts = options or OptimizeOptions()
    method = opts.method.lower()
    if method == "slsqp":
        return _slsqp(problem, opts)
    if method in ("sqp-diag", "projected-gradient"):
        return _diagonal(problem, opts, projected=(method == "projected-gradient"))
    raise ValueError(f"unknown optimiser method {opts.method!r}")


# ---------------------------------------------------------------------------

class _Converged(Exception):
    pass


def _slsqp(problem: NlpProblem, opts: OptimizeOptions) -> OptimizeResult:
    cache: dict = {}

    def evaluate(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            f, g = problem.objective(x)
            _check(x, f, g, "objective")
            cache[key] = (float(f), np.asarray(g, float))
        return cache[key]

    cons = []
    for c in problem.constraints:
        def fun(x, c=c):
            v, _ = c(x)
            return -float(v)

        def jac(x, c=c):
            _, g = c(x)
            return -np.asarray(g, float)
        cons.append({"type": "ineq", "fun": fun, "jac": jac})

    hist: list = []
    status = {"s": "max-iter"}
    last = {"x": problem.x0.copy()}

    def record(xk):
        last["x"] = np.array(xk, copy=True)
        f, _ = evaluate(np.asarray(xk))
        viol = max([0.0] + [float(c(xk)[0]) for c in problem.constraints])
        hist.append({"iter": len(hist), "f": f, "violation": viol})
        if opts.callback is not None:
            opts.callback(len(hist) - 1, np.array(xk), f)
        if _converged(hist, opts.rtol, opts.window):
            status["s"] = "converged"
            raise _Converged

    record(problem.x0)
    bounds = list(zip(problem.lower, problem.upper))
    message = "relative objective change below tolerance"
    try:
        res = so.minimize(lambda x: evaluate(x)[0], problem.x0, jac=lambda x: evaluate(x)[1],
                          method="SLSQP", bounds=bounds, constraints=cons, callback=record,
                          options={"maxiter": opts.max_iter, "ftol": 1e-14})
    except _Converged:
        res = None
    # scipy does not stop on StopIteration here, so convergence unwinds through _Converged
    x = np.clip(last["x"] if res is None else res.x, problem.lower, problem.upper)
    if res is not None:
        message = str(res.message)
    if res is not None and status["s"] != "converged":
        if res.status == 0:
            status["s"] = "converged"
        elif res.status == 9:
            status["s"] = "max-iter"
        else:
            status["s"] = "stalled"
    f, _ = evaluate(x)
    return OptimizeResult(x, f, status["s"], len(hist) - 1, hist, message)


# ---------------------------------------------------------------------------

def _dual_step(x, g, h, cval, a, lo, hi):
    """Minimise ``g.d + 0.5 sum h d^2`` over the box with ``cval + a.d <= 0``."""
    if a is None:
        return np.clip(-g / h, lo, hi)

    def step(mu):
        return np.clip(-(g + mu * a) / h, lo, hi)

    d = step(0.0)
    if cval + a @ d <= 0:
        return d
    lo_mu, hi_mu = 0.0, 1.0
    while cval + a @ step(hi_mu) > 0:
        hi_mu *= 2.0
        if hi_mu > 1e300:
            break
    for _ in range(200):
        mid = 0.5 * (lo_mu + hi_mu)
        if cval + a @ step(mid) > 0:
            lo_mu = mid
        else:
            hi_mu = mid
        if hi_mu - lo_mu <= 1e-15 * max(hi_mu, 1e-300):
            break
    return step(hi_mu)


def _diagonal(problem: NlpProblem, opts: OptimizeOptions, projected: bool) -> OptimizeResult:
    if len(problem.constraints) > 1:
        raise ValueError("diagonal SQP handles at most one inequality constraint")
    x = problem.x0.copy()
    lo, hi = problem.lower, problem.upper
    span = np.where(hi > lo, hi - lo, 1.0)
    hist: list = []
    alpha = 1.0
    f, g = problem.objective(x)
    _check(x, f, g, "objective")
    status = "max-iter"
    penalty = 0.0
    move = np.full_like(x, opts.move)
    d_prev = np.zeros_like(x)
    best = (np.inf, x.copy())
    for it in range(opts.max_iter + 1):
        if problem.constraints:
            cval, a = problem.constraints[0](x)
            a = np.asarray(a, float)
            _check(x, cval, a, "constraint")
        else:
            cval, a = 0.0, None
        hist.append({"iter": it, "f": float(f), "violation": max(float(cval), 0.0)})
        if f < best[0] and cval <= opts.constraint_tol:
            best = (float(f), x.copy())
        if opts.callback is not None:
            opts.callback(it, x.copy(), float(f))
        if _converged(hist, opts.rtol, opts.window):
            status = "converged"
            break
        if it == opts.max_iter:
            break
        if projected:
            h = np.full_like(x, 1.0 / alpha) * max(np.abs(g).max(), 1e-300) / np.abs(span).max()
        else:
            if callable(opts.curvature):
                h = opts.curvature(x) * np.abs(g)
            else:
                h = opts.curvature * np.abs(g) / np.maximum(np.abs(x), 1e-3 * span)
            h = np.maximum(h, 1e-8 * max(h.max(), 1e-300))
        dlo = np.maximum(lo - x, -move * span)
        dhi = np.minimum(hi - x, move * span)
        d = _dual_step(x, g, h, cval, a, dlo, dhi)
        if opts.adaptive_move:
            # shrink where the step direction flips, widen where it persists
            flip = d * d_prev < 0
            move = np.clip(np.where(flip, 0.7 * move, 1.2 * move), 0.01 * opts.move, opts.move)
            d_prev = d
        if np.linalg.norm(d) <= 1e-14 * max(np.linalg.norm(x), 1.0):
            status = "converged" if cval <= opts.constraint_tol * max(1.0, abs(cval)) else "stalled"
            break
        t = 1.0
        accepted = False
        if a is not None:
            lam_est = np.abs(g).sum() / max(np.abs(a).sum(), 1e-300)
            penalty = max(penalty, 2.0 * lam_est)
        merit0 = f + penalty * max(cval, 0.0)
        for _ in range(30 if opts.line_search else 1):
            xn = np.clip(x + t * d, lo, hi)
            fn, gn = problem.objective(xn)
            _check(xn, fn, gn, "objective")
            cn = problem.constraints[0](xn)[0] if problem.constraints else 0.0
            if not opts.line_search or fn + penalty * max(cn, 0.0) <= merit0 + 1e-12 * abs(merit0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = "stalled"
            break
        if projected:
            alpha = alpha * 1.5 if t == 1.0 else alpha * t
        x, f, g = xn, fn, gn
    if status != "converged" and np.isfinite(best[0]) and best[0] < f:
        # without convergence, hand back the best feasible iterate seen
        x, f = best[1], best[0]
    return OptimizeResult(x, float(f), status, len(hist) - 1, hist, status)
