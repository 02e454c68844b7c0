"""Market, utility, and trade-plan model for gas-aware routing.

A routing instance is a token universe of size ``n``, a list of markets
(each one a pool over a subset of the tokens), and a utility over global
net baskets.  Connectivity is stored as a list of 1-based global token
indices per market; mapping a local basket into the global universe is a
scatter-add and pulling a global gradient into local coordinates is a
gather.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tradefn import TradeFunction

SCHEMA_VERSION = 1


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Market:
    """One pool: connectivity, reserves, fee, gas fee, bounds, invariant."""

    id: int
    tokens: tuple[int, ...]
    reserves: np.ndarray
    gamma: float
    gas: float
    bounds: np.ndarray
    trade_function: TradeFunction

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "reserves", _frozen_array(self.reserves, "reserves"))
        object.__setattr__(self, "bounds", _frozen_array(self.bounds, "bounds"))
        n_local = len(self.tokens)
        if n_local != len(set(self.tokens)):
            raise ValueError(f"market {self.id}: duplicate token indices")
        if self.reserves.shape != (n_local,) or self.bounds.shape != (n_local,):
            raise ValueError(f"market {self.id}: reserves/bounds length mismatch")
        if np.any(self.reserves <= 0.0):
            raise ValueError(f"market {self.id}: reserves must be strictly positive")
        if np.any(self.bounds <= 0.0):
            raise ValueError(f"market {self.id}: bounds must be strictly positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"market {self.id}: gamma must lie in (0, 1)")
        if self.gas < 0.0:
            raise ValueError(f"market {self.id}: gas fee must be nonnegative")
        if self.trade_function.dimension != n_local:
            raise ValueError(
                f"market {self.id}: trade function dimension "
                f"{self.trade_function.dimension} != {n_local} local tokens"
            )

    @property
    def n_local(self) -> int:
        return len(self.tokens)

    @property
    def token_index(self) -> np.ndarray:
        """0-based global indices of the local assets."""
        return np.asarray(self.tokens, dtype=int) - 1

    def spot_price(self) -> np.ndarray:
        """Gradient of the invariant at the current reserves."""
        return self.trade_function.gradient(self.reserves)


@dataclass(frozen=True, eq=False)
class LinearUtility:
    """u(z) = pi . z with nonnegative coefficients per global token."""

    pi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pi", _frozen_array(self.pi, "pi"))
        if np.any(self.pi < 0.0):
            raise ValueError("utility coefficients must be nonnegative")

    def value(self, basket) -> float:
        return float(self.pi @ np.asarray(basket, dtype=float))

    def gradient(self, basket) -> np.ndarray:
        return self.pi


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    """Token universe size, market list, and utility."""

    n: int
    markets: tuple[Market, ...]
    utility: LinearUtility

    def __post_init__(self) -> None:
        object.__setattr__(self, "markets", tuple(self.markets))
        if self.n < 2:
            raise ValueError("token universe must have n >= 2")
        if len(self.markets) < 1:
            raise ValueError("instance needs at least one market")
        for mk in self.markets:
            bad = [t for t in mk.tokens if not 1 <= t <= self.n]
            if bad:
                raise ValueError(
                    f"market {mk.id}: token indices {bad} outside 1..{self.n}"
                )
        pi = getattr(self.utility, "pi", None)
        if pi is not None and len(pi) != self.n:
            raise ValueError(f"utility has {len(pi)} coefficients, expected {self.n}")

    @property
    def m(self) -> int:
        return len(self.markets)

    def gas_vector(self) -> np.ndarray:
        return np.array([mk.gas for mk in self.markets])


@dataclass(eq=False)
class TradePlan:
    """Candidate (x, y, eta): received/tendered baskets and activations."""

    x: list[np.ndarray]
    y: list[np.ndarray]
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.x = [np.asarray(v, dtype=float) for v in self.x]
        self.y = [np.asarray(v, dtype=float) for v in self.y]
        self.eta = np.asarray(self.eta, dtype=float)

    @classmethod
    def zero(cls, instance: RoutingInstance) -> "TradePlan":
        return cls(
            x=[np.zeros(mk.n_local) for mk in instance.markets],
            y=[np.zeros(mk.n_local) for mk in instance.markets],
            eta=np.zeros(instance.m),
        )

    def copy(self) -> "TradePlan":
        return TradePlan(
            x=[v.copy() for v in self.x],
            y=[v.copy() for v in self.y],
            eta=self.eta.copy(),
        )


def _check_plan_shape(instance: RoutingInstance, plan: TradePlan) -> None:
    if len(plan.x) != instance.m or len(plan.y) != instance.m:
        raise ValueError("plan has wrong number of markets")
    if plan.eta.shape != (instance.m,):
        raise ValueError("plan eta has wrong length")
    for mk, xv, yv in zip(instance.markets, plan.x, plan.y):
        if xv.shape != (mk.n_local,) or yv.shape != (mk.n_local,):
            raise ValueError(f"plan vectors for market {mk.id} have wrong length")


def net_output(instance: RoutingInstance, plan: TradePlan) -> np.ndarray:
    """Global net basket: scatter-add of x^i - y^i over all markets."""
    _check_plan_shape(instance, plan)
    psi = np.zeros(instance.n)
    for mk, xv, yv in zip(instance.markets, plan.x, plan.y):
        np.add.at(psi, mk.token_index, xv - yv)
    return psi


def objective_relaxed(instance: RoutingInstance, plan: TradePlan) -> float:
    """u(net basket) - sum_i q_i * eta_i."""
    psi = net_output(instance, plan)
    return instance.utility.value(psi) - float(instance.gas_vector() @ plan.eta)


def objective_integer(instance: RoutingInstance, plan: TradePlan) -> float:
    """u(net basket) minus the gas fees of markets with eta_i = 1."""
    _check_plan_shape(instance, plan)
    near_zero = np.abs(plan.eta) <= 1e-9
    near_one = np.abs(plan.eta - 1.0) <= 1e-9
    if not np.all(near_zero | near_one):
        raise ValueError("objective_integer requires binary activations")
    psi = net_output(instance, plan)
    fees = float(np.sum(instance.gas_vector()[near_one]))
    return instance.utility.value(psi) - fees


@dataclass
class FeasibilityReport:
    """Constraint check results for one plan."""

    feasible: bool
    box_violations: list[str]
    coupling_violations: list[str]
    invariant_residuals: np.ndarray
    max_invariant_residual: float


def feasibility_report(
    instance: RoutingInstance, plan: TradePlan, tol: float = 1e-8
) -> FeasibilityReport:
    """Check boxes, the coupling y <= eta*b, and invariant residuals."""
    _check_plan_shape(instance, plan)
    box: list[str] = []
    coupling: list[str] = []
    residuals = np.zeros(instance.m)
    for i, mk in enumerate(instance.markets):
        xv, yv, ev = plan.x[i], plan.y[i], float(plan.eta[i])
        if np.any(xv < -tol) or np.any(xv > mk.reserves + tol):
            box.append(f"market {mk.id}: x outside [0, R]")
        if np.any(yv < -tol):
            box.append(f"market {mk.id}: y negative")
        if not -tol <= ev <= 1.0 + tol:
            box.append(f"market {mk.id}: eta outside [0, 1]")
        slack = yv - ev * mk.bounds
        if np.any(slack > tol * np.maximum(1.0, mk.bounds)):
            coupling.append(f"market {mk.id}: y exceeds eta * bounds")
        residuals[i] = mk.trade_function.invariant_residual(
            mk.reserves, mk.gamma, np.minimum(xv, mk.reserves), np.maximum(yv, 0.0)
        )
    max_res = float(np.max(np.abs(residuals))) if instance.m else 0.0
    feasible = not box and not coupling and max_res <= tol
    return FeasibilityReport(feasible, box, coupling, residuals, max_res)


def default_bounds(instance: RoutingInstance) -> RoutingInstance:
    """Return the instance with every bound vector replaced by 2R/gamma."""
    markets = tuple(
        replace(mk, bounds=2.0 * mk.reserves / mk.gamma) for mk in instance.markets
    )
    return replace(instance, markets=markets)


# -- serialization ----------------------------------------------------------


def instance_to_dict(instance: RoutingInstance) -> dict:
    """Plain-data rendering of an instance (bit-exact floats via repr)."""
    markets = []
    for mk in instance.markets:
        phi: dict = {"kind": mk.trade_function.kind}
        if mk.trade_function.weights is not None:
            phi["weights"] = [float(w) for w in mk.trade_function.weights]
        markets.append(
            {
                "id": mk.id,
                "tokens": list(mk.tokens),
                "reserves": [float(v) for v in mk.reserves],
                "gamma": float(mk.gamma),
                "gas": float(mk.gas),
                "bounds": [float(v) for v in mk.bounds],
                "phi": phi,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "n": instance.n,
        "markets": markets,
        "utility": {"pi": [float(v) for v in instance.utility.pi]},
    }


class InstanceParseError(ValueError):
    """Raised when an instance document is malformed."""


def _parse_phi(doc: dict, n_local: int, where: str) -> TradeFunction:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InstanceParseError(f"{where}: phi must be an object with a 'kind'")
    kind = doc["kind"]
    weights = doc.get("weights")
    try:
        if weights is not None:
            if kind == "weighted_geometric_mean":
                return TradeFunction.weighted_geometric_mean(weights)
            if kind == "weighted_sum":
                return TradeFunction.weighted_sum(weights)
            raise InstanceParseError(f"{where}: phi kind {kind!r} takes no weights")
        if kind == "geometric_mean":
            return TradeFunction.geometric_mean(n_local)
        if kind == "weighted_quasi_arithmetic":
            return TradeFunction.weighted_quasi_arithmetic(n_local)
        if kind == "weighted_sum":
            return TradeFunction.weighted_sum([1.0] * n_local)
        raise InstanceParseError(f"{where}: unknown phi kind {kind!r}")
    except ValueError as exc:
        raise InstanceParseError(f"{where}: {exc}") from exc


def instance_from_dict(doc: dict) -> RoutingInstance:
    """Parse an instance document; omitted bounds default to 2R/gamma."""
    if not isinstance(doc, dict):
        raise InstanceParseError("instance document must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceParseError(f"unsupported schema_version: {version!r}")
    try:
        n = int(doc["n"])
        market_docs = doc["markets"]
        pi = [float(v) for v in doc["utility"]["pi"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceParseError(f"missing or malformed field: {exc}") from exc
    if not isinstance(market_docs, list) or not market_docs:
        raise InstanceParseError("markets must be a nonempty list")
    markets = []
    for pos, mdoc in enumerate(market_docs):
        where = f"markets[{pos}]"
        if not isinstance(mdoc, dict):
            raise InstanceParseError(f"{where}: must be an object")
        try:
            tokens = [int(t) for t in mdoc["tokens"]]
            reserves = np.array([float(v) for v in mdoc["reserves"]])
            gamma = float(mdoc["gamma"])
            gas = float(mdoc["gas"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceParseError(f"{where}: missing or malformed field: {exc}") from exc
        if "bounds" in mdoc:
            bounds = np.array([float(v) for v in mdoc["bounds"]])
        else:
            if not 0.0 < gamma < 1.0:
                raise InstanceParseError(f"{where}: gamma outside (0, 1)")
            bounds = 2.0 * reserves / gamma
        phi = _parse_phi(mdoc.get("phi"), len(tokens), where)
        try:
            markets.append(
                Market(
                    id=int(mdoc.get("id", pos + 1)),
                    tokens=tuple(tokens),
                    reserves=reserves,
                    gamma=gamma,
                    gas=gas,
                    bounds=bounds,
                    trade_function=phi,
                )
            )
        except ValueError as exc:
            raise InstanceParseError(f"{where}: {exc}") from exc
    try:
        return RoutingInstance(n=n, markets=tuple(markets), utility=LinearUtility(np.array(pi)))
    except ValueError as exc:
        raise InstanceParseError(str(exc)) from exc
