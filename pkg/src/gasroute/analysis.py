"""No-trade certificates and rounding-gap analysis.

For one market in isolation, zero trade is optimal exactly when the gas fee
covers the cost of shutting down every profitable tender direction.  That
cost has a closed form: pick the smallest price multiplier alpha* that
dominates all receive directions, then sum the residual tender gains
max(0, gamma*alpha*P_j - g_j) weighted by the tender caps.  The certificate
carries alpha*, the minimal gas, and the cap multipliers as witnesses.

The second half bounds how much the relaxation can beat the integer
optimum: eps(q, eta) = q_max*(l0(eta) - l1(eta)) + (q_max - q_min)*l1(eta),
and ``verify_epsilon`` checks the relaxed / exact / rounded sandwich against
that bound on a concrete instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    RoutingInstance,
    TradePlan,
    net_output,
    objective_integer,
    objective_relaxed,
)
from .solver import (
    ACTIVATION_EPSILON,
    CONVERGED,
    SolveOptions,
    round_activation,
    solve_exact_enumeration,
    solve_fixed_activation,
    solve_relaxed,
)


@dataclass
class NoTradeCertificate:
    """Zero-trade optimality certificate for one market."""

    market_id: int
    member: bool
    alpha_star: float
    min_gas: float
    violation: float
    slack: float
    mu: np.ndarray


def no_trade_membership(instance: RoutingInstance, index: int) -> NoTradeCertificate:
    """Decide whether zero trade at market ``index`` passes the first-order
    test, and report the minimal gas fee that would make it pass.

    Directions the price vector cannot dominate (P_j = 0 with positive
    utility gradient) make the market tradable at any fee; the certificate
    then reports infinite violation and minimal gas.
    """
    mk = instance.markets[index]
    grad_u = instance.utility.gradient(np.zeros(instance.n))
    g = np.asarray(grad_u, dtype=float)[mk.token_index]
    price = np.asarray(mk.spot_price(), dtype=float)
    mu = np.zeros(mk.n_local)
    positive = price > 0.0
    if np.any(~positive & (g > 0.0)):
        return NoTradeCertificate(
            market_id=mk.id,
            member=False,
            alpha_star=math.inf,
            min_gas=math.inf,
            violation=math.inf,
            slack=-math.inf,
            mu=mu,
        )
    ratios = g[positive] / price[positive]
    alpha_star = max(float(np.max(ratios)) if ratios.size else 0.0, 0.0)
    mu = np.maximum(mk.gamma * alpha_star * price - g, 0.0)
    min_gas = float(mu @ mk.bounds)
    member = min_gas <= mk.gas
    return NoTradeCertificate(
        market_id=mk.id,
        member=member,
        alpha_star=alpha_star,
        min_gas=min_gas,
        violation=max(min_gas - mk.gas, 0.0),
        slack=mk.gas - min_gas,
        mu=mu,
    )


def no_trade_certificates(instance: RoutingInstance) -> list[NoTradeCertificate]:
    """Certificates for every market of the instance."""
    return [no_trade_membership(instance, i) for i in range(instance.m)]


def min_gas_for_no_trade(instance: RoutingInstance, index: int) -> float:
    """Minimal gas fee under which zero trade at the market is optimal."""
    return no_trade_membership(instance, index).min_gas


@dataclass
class ConeDiagnostic:
    """Interval of price multipliers compatible with zero trade."""

    market_id: int
    nu_lo: float
    nu_hi: float
    feasible: bool


def cone_diagnostic(instance: RoutingInstance, index: int) -> ConeDiagnostic:
    """Interval test for zero-trade optimality at one market.

    alpha must dominate every receive direction (alpha >= g_j / P_j) while
    each tender direction stays coverable by its share of the gas fee
    (gamma*alpha*P_j <= g_j + q/b_j).  Zero trade passes exactly when the
    interval [nu_lo, nu_hi] is nonempty.
    """
    mk = instance.markets[index]
    grad_u = instance.utility.gradient(np.zeros(instance.n))
    g = np.asarray(grad_u, dtype=float)[mk.token_index]
    price = np.asarray(mk.spot_price(), dtype=float)
    positive = price > 0.0
    nu_lo = 0.0
    if np.any(positive):
        nu_lo = max(0.0, float(np.max(g[positive] / price[positive])))
    if np.any(~positive & (g > 0.0)):
        return ConeDiagnostic(mk.id, math.inf, -math.inf, False)
    caps = g + mk.gas / mk.bounds
    nu_hi = math.inf
    if np.any(positive):
        nu_hi = float(np.min(caps[positive] / (mk.gamma * price[positive])))
    flat = ~positive
    if np.any(flat & (caps < 0.0)):
        nu_hi = -math.inf
    return ConeDiagnostic(mk.id, nu_lo, nu_hi, nu_lo <= nu_hi)


@dataclass
class EpsilonBound:
    """Rounding-gap bound and the counts it is built from."""

    value: float
    l0: float
    l1: float
    q_max: float
    q_min: float


def epsilon_bound(
    instance: RoutingInstance,
    eta,
    activation_epsilon: float = ACTIVATION_EPSILON,
) -> EpsilonBound:
    """eps(q, eta) = q_max*(l0 - l1) + (q_max - q_min)*l1 for the given
    activation profile, counting l0 with the rounding threshold."""
    eta = np.asarray(eta, dtype=float)
    gas = instance.gas_vector()
    q_max = float(np.max(gas))
    q_min = float(np.min(gas))
    l0 = float(np.sum(eta > activation_epsilon))
    l1 = float(np.sum(eta))
    return EpsilonBound(
        value=q_max * (l0 - l1) + (q_max - q_min) * l1,
        l0=l0,
        l1=l1,
        q_max=q_max,
        q_min=q_min,
    )


@dataclass
class EpsilonReport:
    """Relaxed / exact / rounded objectives and the bound they must obey."""

    h_relaxed: float
    h_exact: float
    h_rounded: float
    eta: np.ndarray
    pattern: np.ndarray
    epsilon: EpsilonBound
    sandwich_ok: bool
    gap: float
    gap_ok: bool
    statuses: tuple[str, str, str]
    relaxed_plan: TradePlan | None = None

    def to_dict(self) -> dict:
        return {
            "h_relaxed": self.h_relaxed,
            "h_exact": self.h_exact,
            "h_rounded": self.h_rounded,
            "eta": [float(v) for v in self.eta],
            "pattern": [float(v) for v in self.pattern],
            "epsilon": self.epsilon.value,
            "l0": self.epsilon.l0,
            "l1": self.epsilon.l1,
            "sandwich_ok": self.sandwich_ok,
            "gap": self.gap,
            "gap_ok": self.gap_ok,
            "statuses": list(self.statuses),
        }


def _project_to_pattern(
    instance: RoutingInstance, plan: TradePlan, pattern: np.ndarray
) -> TradePlan:
    out = plan.copy()
    for i in range(instance.m):
        if pattern[i] < 0.5:
            out.x[i] = np.zeros_like(out.x[i])
            out.y[i] = np.zeros_like(out.y[i])
    out.eta = pattern.astype(float).copy()
    return out


def verify_epsilon(
    instance: RoutingInstance,
    options: SolveOptions | None = None,
    tol: float = 1e-6,
) -> EpsilonReport:
    """Solve the relaxed, exact, and rounded problems and check the bound.

    The relaxed and exact objectives are lifted to the best feasible values
    seen across the three solves (any feasible plan is a valid lower bound
    for its problem), so a weak solver run tightens rather than fakes the
    sandwich.  The substantive check is |h_rounded - h_exact| <= eps + tol.
    """
    options = options or SolveOptions()
    relaxed = solve_relaxed(instance, options)
    exact = solve_exact_enumeration(instance, options)
    h_relaxed = objective_relaxed(instance, relaxed.plan)
    h_exact = exact.objective

    exact_as_relaxed = objective_relaxed(instance, exact.plan)
    if exact_as_relaxed > h_relaxed:
        source = exact.plan
        h_star = exact_as_relaxed
    else:
        source = relaxed.plan
        h_star = h_relaxed
    eta = source.eta.copy()

    pattern = round_activation(eta)
    warm = _project_to_pattern(instance, source, pattern)
    rounded = solve_fixed_activation(instance, pattern, options, extra_starts=(warm,))
    h_rounded = objective_integer(instance, _project_to_pattern(instance, rounded.plan, pattern))

    h_exact_final = max(h_exact, h_rounded)
    if h_rounded > h_star:
        h_relaxed_final = h_rounded
        eta = pattern.copy()
    else:
        h_relaxed_final = h_star

    bound = epsilon_bound(instance, eta)
    sandwich_ok = h_relaxed_final >= h_exact_final - tol and h_exact_final >= h_rounded - tol
    gap = abs(h_rounded - h_exact_final)
    return EpsilonReport(
        h_relaxed=h_relaxed_final,
        h_exact=h_exact_final,
        h_rounded=h_rounded,
        eta=eta,
        pattern=pattern,
        epsilon=bound,
        sandwich_ok=sandwich_ok,
        gap=gap,
        gap_ok=gap <= bound.value + tol,
        statuses=(relaxed.status, exact.status, rounded.status),
        relaxed_plan=relaxed.plan,
    )
