"""Solvers for the routing problem and its variants.

Three entry points:

* ``solve_relaxed`` — activations free in [0, 1], gas charged as q.eta.
* ``solve_fixed_activation`` — binary activation pattern frozen; gas-free
  utility maximization over the active markets.
* ``solve_exact_enumeration`` — the integer problem, by enumerating binary
  activation patterns (with a separable shortcut for linear utility).

The workhorse is a multi-start augmented-Lagrangian loop on the invariant
equalities with projected-gradient inner iterations (Barzilai-Borwein trial
steps, nonmonotone Armijo backtracking).  The feasible set is a product of
boxes and, in the relaxed variant, the per-market coupling {0 <= y <= eta*b,
0 <= eta <= 1}, onto which we project exactly (a one-dimensional convex
piecewise-quadratic problem in eta per market).

Two shortcuts apply under linear utility, where the objective separates per
market.  Markets whose zero-trade certificate already covers their gas fee
are pinned to zero without a solve: the certificate threshold is the right
derivative of the per-market gain at zero activation, and the gain is
concave, so the first-order test is globally exact.  And the relaxed
problem decomposes into independent single-market solves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    LinearUtility,
    Market,
    RoutingInstance,
    TradePlan,
    net_output,
    objective_relaxed,
)
from .tradefn import (
    GEOMETRIC_MEAN,
    WEIGHTED_GEOMETRIC_MEAN,
    WEIGHTED_SUM,
    TradeFunction,
    lambert_w0,
)

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
INFEASIBLE = "Infeasible"

ACTIVATION_EPSILON = 1e-6

_ARMIJO_C1 = 1e-4
_MAX_HALVINGS = 40
_MEMORY = 8
_TIE_TOL = 1e-10


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances, iteration budgets, penalty schedule, and seeding."""

    tol_stationarity: float = 1e-7
    tol_constraint: float = 1e-8
    max_outer: int = 60
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 4.0
    restarts: int = 8
    seed: int = 0
    interior_floor: float = 1e-9

    def __post_init__(self) -> None:
        if self.tol_stationarity <= 0 or self.tol_constraint <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if self.restarts < 1:
            raise ValueError("need at least one start")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class SolveResult:
    """Best plan found, its objective, status, and multiplier estimates."""

    plan: TradePlan
    objective: float
    status: str
    lambdas: np.ndarray
    inner_iterations: int


def round_activation(eta, activation_epsilon: float = ACTIVATION_EPSILON) -> np.ndarray:
    """Binary pattern: 1 where eta exceeds the activation threshold."""
    eta = np.asarray(eta, dtype=float)
    return (eta > activation_epsilon).astype(float)


def _value_price_fn(tf: TradeFunction):
    """Value-and-gradient closure for strictly positive 1-D input.

    Same math as ``TradeFunction.evaluate``/``gradient`` with the
    validation and broadcasting stripped for the solver's inner loop.
    """
    if tf.kind == WEIGHTED_SUM:
        w = np.asarray(tf.weights, dtype=float)

        def value_price(post: np.ndarray):
            return float(w @ post), w

        return value_price
    if tf.kind in (GEOMETRIC_MEAN, WEIGHTED_GEOMETRIC_MEAN):
        e = tf._exponents()

        def value_price(post: np.ndarray):
            phi = math.exp(float(np.log(post) @ e))
            return phi, e * (phi / post)

        return value_price
    n = tf.dimension

    def value_price(post: np.ndarray):
        zp = post + 1.0
        log_zp = np.log(zp)
        s = (2.0 / n) * float(zp @ (zp * log_zp))
        w0 = lambert_w0(s)
        value = math.exp(0.5 * w0)
        if abs(s) < 1e-4:
            w_prime = 1.0 - 2.0 * s + 4.5 * s * s
        else:
            w_prime = w0 / (s * (1.0 + w0))
        ds_dz = (2.0 / n) * zp * (2.0 * log_zp + 1.0)
        return value - 1.0, (0.5 * value * w_prime) * ds_dz

    return value_price


def _zero_trade_threshold(mk: Market, g: np.ndarray) -> float:
    """Minimal gas fee making zero trade optimal at this market alone.

    This is the right derivative at zero activation of the market's
    gas-free gain; the gain is concave, so q >= threshold certifies zero
    trade globally, not just to first order.
    """
    price = np.asarray(mk.spot_price(), dtype=float)
    positive = price > 0.0
    if np.any(~positive & (g > 0.0)):
        return math.inf
    ratios = g[positive] / price[positive]
    alpha = max(float(np.max(ratios)) if ratios.size else 0.0, 0.0)
    mu = np.maximum(mk.gamma * alpha * price - g, 0.0)
    return float(mu @ mk.bounds)


def _project_coupling(y_hat: np.ndarray, eta_hat: float, b: np.ndarray):
    """Exact Euclidean projection of (y_hat, eta_hat) onto
    {(y, eta): 0 <= eta <= 1, 0 <= y <= eta * b}.

    For fixed eta the best y is clip(y_hat, 0, eta*b); substituting gives a
    convex piecewise-quadratic in eta whose segments are scanned between the
    breakpoints y_hat_j / b_j.
    """
    pos = y_hat > 0.0
    if not np.any(pos):
        eta = min(max(eta_hat, 0.0), 1.0)
        return np.clip(y_hat, 0.0, eta * b), eta
    t = y_hat[pos] / b[pos]
    order = np.argsort(t)
    t_sorted = t[order]
    bs = b[pos][order]
    ys = y_hat[pos][order]
    # suffix sums of b*y and b*b over breakpoints above the current segment
    s1 = np.concatenate([np.cumsum((bs * ys)[::-1])[::-1], [0.0]])
    s2 = np.concatenate([np.cumsum((bs * bs)[::-1])[::-1], [0.0]])
    n_break = len(t_sorted)
    eta_star = eta_hat
    for seg in range(n_break + 1):
        hi = math.inf if seg == n_break else t_sorted[seg]
        root = (eta_hat + s1[seg]) / (1.0 + s2[seg])
        if root <= hi + 1e-15:
            eta_star = root
            break
    eta = min(max(eta_star, 0.0), 1.0)
    return np.clip(y_hat, 0.0, eta * b), eta


class _Engine:
    """Flat-vector view of one solve: objective, gradient, projection."""

    def __init__(
        self,
        instance: RoutingInstance,
        options: SolveOptions,
        free_eta: bool,
        pattern: np.ndarray | None = None,
    ) -> None:
        self.inst = instance
        self.opt = options
        self.free_eta = free_eta
        self.pattern = pattern
        if free_eta:
            self.active = list(range(instance.m))
        else:
            self.active = [i for i in range(instance.m) if pattern[i] > 0.5]
        self.markets = [instance.markets[i] for i in self.active]
        self.x_slices: list[slice] = []
        self.y_slices: list[slice] = []
        off = 0
        for mk in self.markets:
            self.x_slices.append(slice(off, off + mk.n_local))
            off += mk.n_local
            self.y_slices.append(slice(off, off + mk.n_local))
            off += mk.n_local
        self.eta_slice = slice(off, off + len(self.active)) if free_eta else None
        self.dim = off + (len(self.active) if free_eta else 0)
        self.reserves = [mk.reserves for mk in self.markets]
        self.bounds = [mk.bounds for mk in self.markets]
        self.gammas = [mk.gamma for mk in self.markets]
        self.tidx = [mk.token_index for mk in self.markets]
        self.x_caps = [
            np.maximum(mk.reserves - options.interior_floor, 0.0) for mk in self.markets
        ]
        self.value_price = [_value_price_fn(mk.trade_function) for mk in self.markets]
        self.phi_at_reserves = [
            vp(reserves)[0] for vp, reserves in zip(self.value_price, self.reserves)
        ]
        self.gas = np.array([mk.gas for mk in self.markets])
        utility = instance.utility
        if isinstance(utility, LinearUtility):
            self.linear_g = [utility.pi[idx] for idx in self.tidx]
        else:
            self.linear_g = None

    # -- variable layout ----------------------------------------------------

    def zero_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def pack_plan(self, plan: TradePlan) -> np.ndarray:
        v = np.zeros(self.dim)
        for k, i in enumerate(self.active):
            v[self.x_slices[k]] = plan.x[i]
            v[self.y_slices[k]] = plan.y[i]
        if self.free_eta:
            v[self.eta_slice] = plan.eta[self.active]
        return self.project(v)

    def unpack_plan(self, v: np.ndarray) -> TradePlan:
        plan = TradePlan.zero(self.inst)
        for k, i in enumerate(self.active):
            plan.x[i] = v[self.x_slices[k]].copy()
            plan.y[i] = v[self.y_slices[k]].copy()
        if self.free_eta:
            plan.eta = np.zeros(self.inst.m)
            plan.eta[self.active] = v[self.eta_slice]
        else:
            plan.eta = self.pattern.astype(float).copy()
        return plan

    # -- geometry -----------------------------------------------------------

    def project(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        if self.free_eta:
            eta = np.clip(out[self.eta_slice], 0.0, 1.0)
            for k in range(len(self.markets)):
                out[self.x_slices[k]] = np.clip(v[self.x_slices[k]], 0.0, self.x_caps[k])
                y_proj, eta_k = _project_coupling(
                    v[self.y_slices[k]], float(v[self.eta_slice][k]), self.bounds[k]
                )
                out[self.y_slices[k]] = y_proj
                eta[k] = eta_k
            out[self.eta_slice] = eta
        else:
            for k in range(len(self.markets)):
                out[self.x_slices[k]] = np.clip(v[self.x_slices[k]], 0.0, self.x_caps[k])
                out[self.y_slices[k]] = np.clip(v[self.y_slices[k]], 0.0, self.bounds[k])
        return out

    # -- objective pieces ---------------------------------------------------

    def _net_basket(self, v: np.ndarray) -> np.ndarray:
        psi = np.zeros(self.inst.n)
        for k in range(len(self.markets)):
            np.add.at(psi, self.tidx[k], v[self.x_slices[k]] - v[self.y_slices[k]])
        return psi

    def constraints(self, v: np.ndarray) -> np.ndarray:
        h = np.zeros(len(self.active))
        for k in range(len(self.markets)):
            post = (
                self.reserves[k]
                + self.gammas[k] * v[self.y_slices[k]]
                - v[self.x_slices[k]]
            )
            h[k] = self.value_price[k](post)[0] - self.phi_at_reserves[k]
        return h

    def true_objective(self, v: np.ndarray) -> float:
        val = self.inst.utility.value(self._net_basket(v))
        if self.free_eta:
            val -= float(self.gas @ v[self.eta_slice])
        return val

    def auglag_value_grad(self, v: np.ndarray, lam: np.ndarray, rho: float):
        """Value and gradient of the augmented Lagrangian, plus residuals."""
        if self.linear_g is not None:
            grads = self.linear_g
            value = 0.0
        else:
            psi = self._net_basket(v)
            grad_u = self.inst.utility.gradient(psi)
            grads = [grad_u[idx] for idx in self.tidx]
            value = -self.inst.utility.value(psi)
        grad = np.empty(self.dim)
        h = np.empty(len(self.active))
        for k in range(len(self.markets)):
            x = v[self.x_slices[k]]
            y = v[self.y_slices[k]]
            gamma = self.gammas[k]
            post = self.reserves[k] + gamma * y - x
            phi, price = self.value_price[k](post)
            h_k = phi - self.phi_at_reserves[k]
            h[k] = h_k
            w_k = lam[k] + rho * h_k
            g = grads[k]
            if self.linear_g is not None:
                value -= float(g @ x) - float(g @ y)
            grad[self.x_slices[k]] = -g - w_k * price
            grad[self.y_slices[k]] = g + (w_k * gamma) * price
            value += lam[k] * h_k + 0.5 * rho * h_k * h_k
        if self.free_eta:
            value += float(self.gas @ v[self.eta_slice])
            grad[self.eta_slice] = self.gas
        return value, grad, h

    def stationarity(self, v: np.ndarray, grad: np.ndarray) -> float:
        moved = self.project(v - grad)
        return float(np.max(np.abs(v - moved))) if self.dim else 0.0


def _inner_descent(
    engine: _Engine,
    v: np.ndarray,
    lam: np.ndarray,
    rho: float,
    gtol: float,
    max_inner: int,
):
    """Projected-gradient descent with BB steps and nonmonotone Armijo."""
    value, grad, h = engine.auglag_value_grad(v, lam, rho)
    step = 1.0 / max(1.0, float(np.max(np.abs(grad))) if engine.dim else 1.0)
    history = [value]
    iterations = 0
    crit = engine.stationarity(v, grad)
    while iterations < max_inner and crit > gtol:
        reference = max(history)
        trial = step
        candidate = None
        for _ in range(_MAX_HALVINGS):
            u = engine.project(v - trial * grad)
            slope = float(grad @ (u - v))
            cand_value, cand_grad, cand_h = engine.auglag_value_grad(u, lam, rho)
            if cand_value <= reference + _ARMIJO_C1 * slope:
                candidate = (u, cand_value, cand_grad, cand_h)
                break
            trial *= 0.5
        iterations += 1
        if candidate is None:
            break
        u, cand_value, cand_grad, cand_h = candidate
        dv = u - v
        dg = cand_grad - grad
        curvature = float(dv @ dg)
        if curvature > 1e-18:
            step = min(max(float(dv @ dv) / curvature, 1e-14), 1e10)
        else:
            step = min(trial * 2.0, 1e10)
        stalled = float(np.max(np.abs(dv))) <= 1e-16 * (1.0 + float(np.max(np.abs(v))))
        v, value, grad, h = u, cand_value, cand_grad, cand_h
        history.append(value)
        if len(history) > _MEMORY:
            history.pop(0)
        crit = engine.stationarity(v, grad)
        if stalled:
            break
    return v, grad, h, crit, iterations


def _face_tangent_basis(engine: _Engine, v: np.ndarray, grad: np.ndarray):
    """Tangent directions of the face a projected gradient step settles on.

    Coordinates are free when the stepped point leaves them strictly inside
    their box; a tender that rides its activation cap moves together with
    eta as a single direction.  Returns None when every direction is fixed.
    """
    p = engine.project(v - grad)
    scale = 1.0 + float(np.max(np.abs(v)))
    cols: list[np.ndarray] = []
    for k in range(len(engine.markets)):
        xs, ys = engine.x_slices[k], engine.y_slices[k]
        cap = engine.x_caps[k]
        b = engine.bounds[k]
        px = p[xs]
        for j in range(len(cap)):
            if 1e-12 * scale < px[j] < cap[j] - 1e-12 * scale:
                e = np.zeros(engine.dim)
                e[xs.start + j] = 1.0
                cols.append(e)
        py = p[ys]
        if engine.free_eta:
            eta_idx = engine.eta_slice.start + k
            eta_p = float(p[eta_idx])
            tied = []
            for j in range(len(b)):
                if py[j] <= 1e-12 * scale:
                    continue
                if py[j] >= (eta_p - 1e-9) * b[j]:
                    tied.append(j)
                else:
                    e = np.zeros(engine.dim)
                    e[ys.start + j] = 1.0
                    cols.append(e)
            if 1e-12 < eta_p < 1.0 - 1e-12:
                e = np.zeros(engine.dim)
                e[eta_idx] = 1.0
                for j in tied:
                    e[ys.start + j] = b[j]
                cols.append(e)
        else:
            for j in range(len(b)):
                if 1e-12 * scale < py[j] < b[j] - 1e-12 * scale:
                    e = np.zeros(engine.dim)
                    e[ys.start + j] = 1.0
                    cols.append(e)
    if not cols:
        return None
    return np.array(cols).T


def _face_polish(engine: _Engine, v: np.ndarray, lam: np.ndarray, rho: float, tol: float):
    """Damped Newton steps on the active face.

    Projected gradient steps crawl when the face mixes a stiff penalty
    direction with a soft one; a few Newton steps on the reduced problem
    (finite-difference Hessian of the analytic gradient) finish the job.
    Steps are only accepted when they reduce the stationarity measure or
    the augmented-Lagrangian value, so a bad model cannot make things worse.
    """
    value, grad, h = engine.auglag_value_grad(v, lam, rho)
    crit = engine.stationarity(v, grad)
    for _ in range(12):
        if crit <= 0.5 * tol:
            break
        basis = _face_tangent_basis(engine, v, grad)
        if basis is None:
            break
        n_free = basis.shape[1]
        gt = basis.T @ grad
        fd = 1e-6 * (1.0 + float(np.max(np.abs(v))))
        hess = np.zeros((n_free, n_free))
        frozen = []
        for i in range(n_free):
            direction = basis[:, i]
            probe = None
            for sgn in (1.0, -1.0):
                u = engine.project(v + (sgn * fd) * direction)
                gap = np.max(np.abs((u - v) - (sgn * fd) * direction))
                if gap <= 1e-9 * fd * (1.0 + float(np.max(np.abs(direction)))):
                    probe = (u, sgn)
                    break
            if probe is None:
                frozen.append(i)
                continue
            u, sgn = probe
            _, g_probe, _ = engine.auglag_value_grad(u, lam, rho)
            hess[:, i] = (sgn / fd) * (basis.T @ (g_probe - grad))
        hess = 0.5 * (hess + hess.T)
        for i in frozen:
            hess[i, :] = 0.0
            hess[:, i] = 0.0
            hess[i, i] = 1.0
            gt[i] = 0.0
        step = None
        ridge = 0.0
        ridge_base = max(1e-12, 1e-10 * float(np.max(np.abs(hess))))
        for _ in range(8):
            try:
                cand = np.linalg.solve(hess + ridge * np.eye(n_free), -gt)
            except np.linalg.LinAlgError:
                cand = None
            if cand is not None and bool(np.all(np.isfinite(cand))):
                step = cand
                break
            ridge = ridge_base if ridge == 0.0 else ridge * 100.0
        if step is None:
            break
        moved = False
        for _ in range(6):
            u = engine.project(v + basis @ step)
            val_u, g_u, h_u = engine.auglag_value_grad(u, lam, rho)
            crit_u = engine.stationarity(u, g_u)
            if crit_u < crit or val_u < value - 1e-15 * (1.0 + abs(value)):
                v, value, grad, h, crit = u, val_u, g_u, h_u, crit_u
                moved = True
                break
            step = step * 0.25
        if not moved:
            break
    return v, grad, h, crit


def _auglag(engine: _Engine, v0: np.ndarray):
    """Outer augmented-Lagrangian loop; returns the final iterate.

    The multiplier is updated whenever the constraint violation improves by
    a factor of four (or is already within tolerance); otherwise the penalty
    grows.  Growing the penalty only on stalled progress keeps it moderate,
    which keeps the inner subproblems well conditioned.
    """
    opt = engine.opt
    n_con = len(engine.active)
    lam = np.zeros(n_con)
    rho = opt.penalty_init
    gtol = max(1e-2, opt.tol_stationarity)
    v = engine.project(v0)
    total_inner = 0
    crit = math.inf
    prev_h = math.inf
    h = engine.constraints(v)
    for _ in range(opt.max_outer):
        v, _, h, crit, used = _inner_descent(engine, v, lam, rho, gtol, opt.max_inner)
        total_inner += used
        if crit > opt.tol_stationarity and crit <= 1e-3 and (
            used >= opt.max_inner or gtol <= opt.tol_stationarity
        ):
            v, _, h, crit = _face_polish(engine, v, lam, rho, opt.tol_stationarity)
        h_norm = float(np.max(np.abs(h))) if n_con else 0.0
        if crit <= opt.tol_stationarity and h_norm <= opt.tol_constraint:
            break
        if h_norm <= max(0.25 * prev_h, opt.tol_constraint):
            lam = lam + rho * h
            prev_h = h_norm
            gtol = max(opt.tol_stationarity, min(0.2 * gtol, h_norm))
        else:
            rho = min(rho * opt.penalty_growth, 1e12)
    h = engine.constraints(v)
    lam_hat = lam + rho * h
    converged = (
        crit <= opt.tol_stationarity
        and (float(np.max(np.abs(h))) if n_con else 0.0) <= opt.tol_constraint
    )
    return v, h, lam_hat, crit, total_inner, converged


def _newton_repair(engine: _Engine, v: np.ndarray) -> np.ndarray:
    """One Newton step per market toward the invariant, along y (or x)."""
    out = v.copy()
    for k in range(len(engine.markets)):
        x = out[engine.x_slices[k]]
        y = out[engine.y_slices[k]]
        post = engine.reserves[k] + engine.gammas[k] * y - x
        if np.any(post <= 0.0):
            continue
        phi, price = engine.value_price[k](post)
        h_k = phi - engine.phi_at_reserves[k]
        if abs(h_k) < 1e-12:
            continue
        y_sens = engine.gammas[k] * float(price @ y)
        x_sens = float(price @ x)
        if y_sens > 1e-12:
            out[engine.y_slices[k]] = np.clip(y * max(1.0 - h_k / y_sens, 0.0), 0.0, None)
        elif x_sens > 1e-12:
            out[engine.x_slices[k]] = np.clip(x * max(1.0 + h_k / x_sens, 0.0), 0.0, None)
    return engine.project(out)


def _random_start(engine: _Engine, rng: np.random.Generator) -> np.ndarray:
    v = np.zeros(engine.dim)
    for k, mk in enumerate(engine.markets):
        v[engine.x_slices[k]] = rng.uniform(0.0, 1.0, mk.n_local) * engine.x_caps[k]
        v[engine.y_slices[k]] = rng.uniform(0.0, 1.0, mk.n_local) * engine.bounds[k]
    if engine.free_eta:
        v[engine.eta_slice] = rng.uniform(0.0, 1.0, len(engine.active))
    return _newton_repair(engine, engine.project(v))


def _run_multistart(engine: _Engine, extra_starts=()):
    opt = engine.opt
    starts: list[np.ndarray] = [engine.zero_point()]
    for plan in extra_starts:
        starts.append(engine.pack_plan(plan))
    for r in range(1, opt.restarts):
        rng = np.random.default_rng([opt.seed, r])
        starts.append(_random_start(engine, rng))

    best = None
    total_inner = 0
    for v0 in starts:
        v, h, lam_hat, crit, used, converged = _auglag(engine, v0)
        total_inner += used
        h_norm = float(np.max(np.abs(h))) if len(engine.active) else 0.0
        feasible = h_norm <= opt.tol_constraint
        objective = engine.true_objective(v)
        candidate = (v, lam_hat, crit, converged, feasible, objective, h_norm)
        if best is None:
            best = candidate
            continue
        _, _, _, _, best_feasible, best_obj, best_h = best
        if feasible and not best_feasible:
            best = candidate
        elif feasible == best_feasible:
            if feasible:
                if objective > best_obj + _TIE_TOL:
                    best = candidate
            else:
                if h_norm < best_h:
                    best = candidate
    v, lam_hat, crit, converged, feasible, _, _ = best
    return v, lam_hat, crit, converged, feasible, total_inner


def _zero_result(instance: RoutingInstance) -> SolveResult:
    return SolveResult(
        plan=TradePlan.zero(instance),
        objective=0.0,
        status=CONVERGED,
        lambdas=np.zeros(instance.m),
        inner_iterations=0,
    )


def _certified_no_trade(instance: RoutingInstance) -> bool:
    """True when every market's zero-trade certificate covers its gas fee."""
    if not isinstance(instance.utility, LinearUtility):
        return False
    pi = instance.utility.pi
    return all(
        _zero_trade_threshold(mk, pi[mk.token_index]) <= mk.gas
        for mk in instance.markets
    )


def _postprocess_relaxed(instance: RoutingInstance, plan: TradePlan) -> TradePlan:
    """Zero the activation of markets with no trade and positive gas."""
    out = plan.copy()
    for i, mk in enumerate(instance.markets):
        if mk.gas <= 0.0:
            continue
        x_scale = 1e-9 * max(1.0, float(np.max(mk.reserves)))
        y_scale = 1e-9 * max(1.0, float(np.max(mk.bounds)))
        if np.all(np.abs(out.x[i]) <= x_scale) and np.all(np.abs(out.y[i]) <= y_scale):
            out.x[i] = np.zeros(mk.n_local)
            out.y[i] = np.zeros(mk.n_local)
            out.eta[i] = 0.0
    return out


def _single_market_subinstance(instance: RoutingInstance, i: int) -> RoutingInstance:
    mk = instance.markets[i]
    local = Market(
        id=mk.id,
        tokens=tuple(range(1, mk.n_local + 1)),
        reserves=mk.reserves,
        gamma=mk.gamma,
        gas=mk.gas,
        bounds=mk.bounds,
        trade_function=mk.trade_function,
    )
    pi_local = instance.utility.pi[mk.token_index]
    return RoutingInstance(n=mk.n_local, markets=(local,), utility=LinearUtility(pi_local))


def _slice_plan(plan: TradePlan, i: int) -> TradePlan:
    """Restrict a joint plan to market ``i`` of a single-market sub-instance."""
    return TradePlan(
        x=[plan.x[i].copy()],
        y=[plan.y[i].copy()],
        eta=np.array([float(plan.eta[i])]),
    )


def solve_relaxed(
    instance: RoutingInstance,
    options: SolveOptions | None = None,
    *,
    decompose: bool | None = None,
    extra_starts=(),
) -> SolveResult:
    """Solve the relaxed problem: activations in [0, 1], gas charged as q.eta.

    Multi-start augmented Lagrangian; the returned objective is the best over
    all restarts and is recomputed from the final plan.  Deterministic for a
    fixed seed.  With linear utility and several markets the problem separates
    per market; ``decompose=None`` picks that route automatically (the joint
    path is forced with ``decompose=False``).
    """
    options = options or SolveOptions()
    if not extra_starts and _certified_no_trade(instance):
        return _zero_result(instance)
    if decompose is None:
        decompose = isinstance(instance.utility, LinearUtility) and instance.m > 1
    if decompose:
        if not isinstance(instance.utility, LinearUtility):
            raise ValueError("decomposition requires linear utility")
        plan = TradePlan.zero(instance)
        lambdas = np.zeros(instance.m)
        inner = 0
        statuses = []
        for i in range(instance.m):
            sub = _single_market_subinstance(instance, i)
            sub_options = replace(options, seed=options.seed + 7919 * (i + 1))
            sub_starts = tuple(_slice_plan(p, i) for p in extra_starts)
            res = solve_relaxed(
                sub, sub_options, decompose=False, extra_starts=sub_starts
            )
            plan.x[i] = res.plan.x[0]
            plan.y[i] = res.plan.y[0]
            plan.eta[i] = res.plan.eta[0]
            lambdas[i] = res.lambdas[0]
            inner += res.inner_iterations
            statuses.append(res.status)
        plan = _postprocess_relaxed(instance, plan)
        status = CONVERGED if all(s == CONVERGED for s in statuses) else MAX_ITERATIONS
        return SolveResult(
            plan=plan,
            objective=objective_relaxed(instance, plan),
            status=status,
            lambdas=lambdas,
            inner_iterations=inner,
        )

    engine = _Engine(instance, options, free_eta=True)
    v, lam_hat, crit, converged, feasible, inner = _run_multistart(engine, extra_starts)
    plan = _postprocess_relaxed(instance, engine.unpack_plan(v))
    status = CONVERGED if (converged and feasible) else MAX_ITERATIONS
    return SolveResult(
        plan=plan,
        objective=objective_relaxed(instance, plan),
        status=status,
        lambdas=lam_hat.copy(),
        inner_iterations=inner,
    )


def solve_fixed_activation(
    instance: RoutingInstance,
    active,
    options: SolveOptions | None = None,
    *,
    extra_starts=(),
    decompose: bool | None = None,
) -> SolveResult:
    """Gas-free utility maximization with a frozen binary activation pattern.

    Markets with pattern 0 are pinned to zero trade; active markets face the
    full tender bound b.  The reported objective is the utility value (gas is
    not subtracted here).  With linear utility the problem separates per
    market, exactly as in :func:`solve_relaxed`.
    """
    options = options or SolveOptions()
    pattern = np.asarray(active, dtype=float)
    if pattern.shape != (instance.m,):
        raise ValueError("activation pattern length must equal the market count")
    if not np.all((np.abs(pattern) <= 1e-9) | (np.abs(pattern - 1.0) <= 1e-9)):
        raise ValueError("activation pattern must be binary")
    pattern = (pattern > 0.5).astype(float)
    if not np.any(pattern > 0.5):
        result = _zero_result(instance)
        result.plan.eta = pattern.copy()
        return result

    if decompose is None:
        decompose = isinstance(instance.utility, LinearUtility) and instance.m > 1
    if decompose:
        if not isinstance(instance.utility, LinearUtility):
            raise ValueError("decomposition requires linear utility")
        plan = TradePlan.zero(instance)
        plan.eta = pattern.copy()
        lambdas = np.zeros(instance.m)
        inner = 0
        statuses = []
        for i in range(instance.m):
            if pattern[i] <= 0.5:
                continue
            sub = _single_market_subinstance(instance, i)
            sub_options = replace(options, seed=options.seed + 7919 * (i + 1))
            sub_starts = tuple(_slice_plan(p, i) for p in extra_starts)
            res = solve_fixed_activation(
                sub, (1.0,), sub_options, extra_starts=sub_starts, decompose=False
            )
            plan.x[i] = res.plan.x[0]
            plan.y[i] = res.plan.y[0]
            lambdas[i] = res.lambdas[0]
            inner += res.inner_iterations
            statuses.append(res.status)
        status = CONVERGED if all(s == CONVERGED for s in statuses) else MAX_ITERATIONS
        psi = net_output(instance, plan)
        return SolveResult(
            plan=plan,
            objective=instance.utility.value(psi),
            status=status,
            lambdas=lambdas,
            inner_iterations=inner,
        )

    engine = _Engine(instance, options, free_eta=False, pattern=pattern)
    v, lam_hat, crit, converged, feasible, inner = _run_multistart(engine, extra_starts)
    plan = engine.unpack_plan(v)
    lambdas = np.zeros(instance.m)
    for k, i in enumerate(engine.active):
        lambdas[i] = lam_hat[k]
    status = CONVERGED if (converged and feasible) else MAX_ITERATIONS
    psi = net_output(instance, plan)
    return SolveResult(
        plan=plan,
        objective=instance.utility.value(psi),
        status=status,
        lambdas=lambdas,
        inner_iterations=inner,
    )


def _standalone_gains(instance: RoutingInstance, options: SolveOptions):
    """Gas-free best gain of each market alone, via the same machinery.

    Markets whose zero-trade certificate covers a positive fee are skipped:
    the certificate bounds their standalone gain below the fee, so they
    cannot activate and their exact gain is never needed.
    """
    pi = instance.utility.pi
    gains = np.zeros(instance.m)
    plans: list[tuple[np.ndarray, np.ndarray] | None] = []
    statuses = []
    inner = 0
    for i in range(instance.m):
        mk = instance.markets[i]
        if mk.gas > 0.0 and _zero_trade_threshold(mk, pi[mk.token_index]) <= mk.gas:
            plans.append(None)
            statuses.append(CONVERGED)
            continue
        sub = _single_market_subinstance(instance, i)
        sub_options = replace(options, seed=options.seed + 7919 * (i + 1))
        res = solve_fixed_activation(sub, np.array([1.0]), sub_options)
        gains[i] = res.objective
        plans.append((res.plan.x[0], res.plan.y[0]))
        statuses.append(res.status)
        inner += res.inner_iterations
    return gains, plans, statuses, inner


def solve_exact_enumeration(
    instance: RoutingInstance,
    options: SolveOptions | None = None,
    *,
    enumerate_all: bool | None = None,
) -> SolveResult:
    """Solve the integer problem by enumerating binary activation patterns.

    Ties are broken toward fewer active markets, then the lexicographically
    smaller pattern.  With linear utility the objective separates per market,
    so the enumeration reduces to one standalone solve per market and the
    rule "activate exactly the markets whose standalone gain beats their gas
    fee"; ``enumerate_all=True`` forces the literal enumeration.
    """
    options = options or SolveOptions()
    if instance.m > 20:
        raise ValueError("enumeration limited to m <= 20 markets")
    if enumerate_all is None:
        enumerate_all = not isinstance(instance.utility, LinearUtility)

    if not enumerate_all:
        gains, plans, statuses, inner = _standalone_gains(instance, options)
        gas = instance.gas_vector()
        keep = gains > gas + _TIE_TOL
        plan = TradePlan.zero(instance)
        for i in range(instance.m):
            if keep[i]:
                plan.x[i] = plans[i][0].copy()
                plan.y[i] = plans[i][1].copy()
                plan.eta[i] = 1.0
        status = CONVERGED if all(s == CONVERGED for s in statuses) else MAX_ITERATIONS
        psi = net_output(instance, plan)
        objective = instance.utility.value(psi) - float(np.sum(gas[keep]))
        return SolveResult(
            plan=plan,
            objective=objective,
            status=status,
            lambdas=np.zeros(instance.m),
            inner_iterations=inner,
        )

    gas = instance.gas_vector()
    best_h = 0.0
    best_pattern = (0,) * instance.m
    best_result = _zero_result(instance)
    best_active = 0
    total_inner = 0
    all_converged = True
    for pattern in itertools.product((0, 1), repeat=instance.m):
        if not any(pattern):
            continue
        arr = np.array(pattern, dtype=float)
        res = solve_fixed_activation(instance, arr, options)
        total_inner += res.inner_iterations
        if res.status != CONVERGED:
            all_converged = False
        h = res.objective - float(gas @ arr)
        n_active = int(sum(pattern))
        better = h > best_h + _TIE_TOL
        tied = abs(h - best_h) <= _TIE_TOL
        if tied and (
            n_active < best_active
            or (n_active == best_active and pattern < best_pattern)
        ):
            better = True
        if better:
            best_h = h
            best_pattern = pattern
            best_result = res
            best_active = n_active
    plan = best_result.plan.copy()
    plan.eta = np.array(best_pattern, dtype=float)
    status = CONVERGED if all_converged else MAX_ITERATIONS
    return SolveResult(
        plan=plan,
        objective=best_h,
        status=status,
        lambdas=best_result.lambdas,
        inner_iterations=total_inner,
    )
