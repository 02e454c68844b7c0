"""First-order optimality certificates for relaxed solutions.

Given a feasible plan, each market is classified asset by asset (tender,
receive, both-zero, saturated variants) and a per-market price multiplier
alpha plus tender-cap multipliers mu are recovered from the rows that pin
them down exactly.  ``verify_kkt`` then measures how badly the remaining
stationarity, complementarity, and fee-balance relations are violated.

Classification thresholds are relative (1e-7 of the local scale); the
verification tolerance is absolute, with corpus quantities of order one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import RoutingInstance, TradePlan, net_output

_CLASSIFY_REL = 1e-7
_MU_BOUND_SLACK = 1e-8

INACTIVE = "Inactive"
BOTH_ZERO = "BothZero"
TENDER_ONLY = "TenderOnly"
RECEIVE_INTERIOR = "ReceiveInterior"
RECEIVE_SATURATED = "ReceiveSaturated"
UNCLASSIFIED = "Unclassified"


def check_support(instance: RoutingInstance, plan: TradePlan, tol: float = 1e-8) -> bool:
    """True when no asset is simultaneously tendered and received."""
    for i in range(instance.m):
        if np.any(plan.x[i] * plan.y[i] > tol):
            return False
    return True


def check_cq(instance: RoutingInstance, plan: TradePlan) -> bool:
    """Constraint qualification: every tendered asset keeps strict slack
    below its cap, and the cap stays within twice the discounted reserves."""
    for i, mk in enumerate(instance.markets):
        y = plan.y[i]
        tendered = y > 0.0
        if not np.any(tendered):
            continue
        slack = mk.bounds[tendered] - y[tendered]
        limit = (2.0 / mk.gamma) * mk.reserves[tendered]
        if np.any(slack <= 0.0) or np.any(slack > limit):
            return False
    return True


def _classify_assets(mk, x: np.ndarray, y: np.ndarray, eta: float):
    """Per-asset case tags for one active market; None marks an overlap."""
    cases: list[str] = []
    x_tol = _CLASSIFY_REL * mk.reserves
    y_tol = _CLASSIFY_REL * mk.bounds
    for j in range(mk.n_local):
        x_pos = x[j] > x_tol[j]
        y_pos = y[j] > y_tol[j]
        if x_pos and y_pos:
            return None
        if y_pos:
            cases.append(TENDER_ONLY)
        elif x_pos:
            if x[j] >= (1.0 - _CLASSIFY_REL) * mk.reserves[j]:
                cases.append(RECEIVE_SATURATED)
            else:
                cases.append(RECEIVE_INTERIOR)
        else:
            cases.append(BOTH_ZERO)
    return cases


def _tender_saturated(mk, y: np.ndarray, eta: float) -> np.ndarray:
    return y >= eta * mk.bounds - _CLASSIFY_REL * mk.bounds


def recover_multipliers(instance: RoutingInstance, plan: TradePlan, index: int):
    """Recover (alpha, mu, residual) for one market from the plan geometry.

    alpha is the per-market price-of-value multiplier, mu the tender-cap
    multipliers (nonzero only on saturated tender rows).  The residual is
    the largest violation over the case equations for the recovered pair.
    """
    mk = instance.markets[index]
    grad_u = instance.utility.gradient(net_output(instance, plan))
    g = grad_u[mk.token_index]
    eta = float(plan.eta[index])
    active = eta > _CLASSIFY_REL
    mu = np.zeros(mk.n_local)

    if not active:
        price = mk.spot_price()
        positive = price > 0.0
        if np.any(~positive & (g > 0.0)):
            return math.inf, mu, math.inf
        ratios = g[positive] / price[positive]
        alpha = max(float(np.max(ratios)) if ratios.size else 0.0, 0.0)
        mu = np.maximum(mk.gamma * alpha * price - g, 0.0)
        residual = _inactive_residual(mk, g, price, alpha, mu)
        return alpha, mu, residual

    x, y = plan.x[index], plan.y[index]
    price = mk.trade_function.gradient(mk.reserves + mk.gamma * y - x)
    cases = _classify_assets(mk, x, y, eta)
    if cases is None:
        return math.nan, mu, math.inf
    tags = np.array(cases)
    saturated = _tender_saturated(mk, y, eta)
    tender = tags == TENDER_ONLY
    tender_unsat = tender & ~saturated
    tender_sat = tender & saturated
    interior = tags == RECEIVE_INTERIOR
    near_one = eta > 1.0 - _CLASSIFY_REL

    if np.any(interior):
        alpha = float(g[interior] @ price[interior]) / float(
            price[interior] @ price[interior]
        )
    elif np.any(tender_unsat):
        scaled = mk.gamma * price[tender_unsat]
        alpha = float(g[tender_unsat] @ scaled) / float(scaled @ scaled)
    elif np.any(tender_sat) and not near_one:
        denom = mk.gamma * float(price[tender_sat] @ mk.bounds[tender_sat])
        numer = mk.gas + float(g[tender_sat] @ mk.bounds[tender_sat])
        alpha = numer / denom if denom > 0.0 else 0.0
    else:
        lower = 0.0
        if np.any(tender):
            lower = max(lower, float(np.max(g[tender] / (mk.gamma * price[tender]))))
        both = tags == BOTH_ZERO
        if np.any(both & (price > 0.0)):
            rows = both & (price > 0.0)
            lower = max(lower, float(np.max(g[rows] / price[rows])))
        alpha = lower
    alpha = max(alpha, 0.0)
    mu[tender_sat] = np.maximum(mk.gamma * alpha * price[tender_sat] - g[tender_sat], 0.0)
    if not near_one:
        # Interior activation forces the fee identity q = mu.b exactly, so
        # project the witness onto it; the row equations keep the residual.
        total = float(mu @ mk.bounds)
        if total > 0.0:
            mu *= mk.gas / total
    residual = _active_residual(mk, g, price, tags, saturated, eta, alpha, mu)
    return alpha, mu, residual


def _inactive_residual(mk, g, price, alpha, mu) -> float:
    upper = float(np.max(g - alpha * price, initial=0.0))
    lower = float(np.max(mk.gamma * alpha * price - g - mu, initial=0.0))
    fee = max(float(mu @ mk.bounds) - mk.gas, 0.0)
    return max(upper, lower, fee, 0.0)


def _active_residual(mk, g, price, tags, saturated, eta, alpha, mu) -> float:
    worst = 0.0
    for j in range(mk.n_local):
        tag = tags[j]
        scaled = mk.gamma * alpha * price[j]
        if tag == BOTH_ZERO:
            worst = max(worst, g[j] - alpha * price[j], scaled - g[j])
        elif tag == TENDER_ONLY and not saturated[j]:
            worst = max(worst, abs(g[j] - scaled))
        elif tag == TENDER_ONLY:
            worst = max(worst, abs(g[j] - scaled + mu[j]))
        elif tag == RECEIVE_INTERIOR:
            worst = max(worst, abs(g[j] - alpha * price[j]))
        else:
            worst = max(worst, alpha * price[j] - g[j])
    fee_balance = float(mu @ mk.bounds)
    if eta > 1.0 - _CLASSIFY_REL:
        worst = max(worst, mk.gas - fee_balance)
    else:
        worst = max(worst, abs(mk.gas - fee_balance))
    return max(worst, 0.0)


@dataclass
class MarketConditions:
    """Recovered multipliers and residuals for one market."""

    market_id: int
    active: bool
    eta: float
    alpha: float
    mu: np.ndarray
    cases: list[str]
    residual: float
    invariant_residual: float
    mu_bound_excess: float
    passed: bool


@dataclass
class KktReport:
    """Verdict of the first-order optimality check for a plan."""

    passed: bool
    tol: float
    markets: list[MarketConditions] = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for entry in self.markets:
            verdict = "Pass" if entry.passed else "Fail"
            cases = ",".join(entry.cases)
            lines.append(
                f"market {entry.market_id}: {verdict}  eta={entry.eta:.6f}  "
                f"alpha={entry.alpha:.6g}  residual={entry.residual:.3g}  "
                f"cases=[{cases}]"
            )
        overall = "Pass" if self.passed else "Fail"
        lines.append(f"overall: {overall} (tol={self.tol:g})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "markets": [
                {
                    "id": entry.market_id,
                    "active": entry.active,
                    "eta": entry.eta,
                    "alpha": entry.alpha,
                    "mu": [float(v) for v in entry.mu],
                    "cases": entry.cases,
                    "residual": entry.residual,
                    "invariant_residual": entry.invariant_residual,
                    "mu_bound_excess": entry.mu_bound_excess,
                    "passed": entry.passed,
                }
                for entry in self.markets
            ],
        }


def verify_kkt(instance: RoutingInstance, plan: TradePlan, tol: float = 1e-5) -> KktReport:
    """Check the first-order conditions market by market at tolerance tol.

    A market passes when its recovered (alpha, mu) satisfy the case
    equations within tol, the tender-cap multipliers respect their fee
    bound, and the trading invariant holds at the plan.
    """
    report = KktReport(passed=True, tol=tol)
    for i, mk in enumerate(instance.markets):
        eta = float(plan.eta[i])
        active = eta > _CLASSIFY_REL
        alpha, mu, residual = recover_multipliers(instance, plan, i)
        if active:
            cases = _classify_assets(mk, plan.x[i], plan.y[i], eta)
            if cases is None:
                cases = [UNCLASSIFIED]
            invariant = abs(
                mk.trade_function.invariant_residual(
                    mk.reserves, mk.gamma, plan.x[i], plan.y[i]
                )
            )
        else:
            cases = [INACTIVE]
            invariant = 0.0
        bound = mk.gas / mk.bounds
        mu_excess = float(np.max(mu - bound, initial=0.0))
        near_one = eta > 1.0 - _CLASSIFY_REL
        ok = (
            math.isfinite(residual)
            and residual <= tol
            and invariant <= tol
            and (near_one or mu_excess <= _MU_BOUND_SLACK)
            and UNCLASSIFIED not in cases
        )
        report.markets.append(
            MarketConditions(
                market_id=mk.id,
                active=active,
                eta=eta,
                alpha=alpha,
                mu=mu,
                cases=cases,
                residual=residual,
                invariant_residual=invariant,
                mu_bound_excess=mu_excess,
                passed=ok,
            )
        )
        report.passed = report.passed and ok
    return report
