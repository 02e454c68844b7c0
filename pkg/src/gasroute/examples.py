"""Built-in demonstration instances.

Two families, both with linear utility whose coefficients are tied to spot
prices so that the no-trade boundary can be steered by one or two scalars:

* ``example1-gm`` / ``example1-qm``: a single six-asset market (geometric
  mean or quasi-arithmetic invariant).  The utility is the spot price
  normalized by its last component, with the first two coefficients scaled
  by (t, s).  At (t, s) = (1, 1) the utility is proportional to the spot
  price and zero trade is optimal at any fee.

* ``example2``: five markets on three tokens (weighted geometric mean,
  three constant-product pools, one constant-sum pool).  The utility is
  market 1's spot price with the first coefficient scaled by t.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import LinearUtility, Market, RoutingInstance
from .tradefn import TradeFunction

EXAMPLE1_RESERVES = (1.0, 3.0, 2.0, 5.0, 7.0, 6.0)
EXAMPLE1_GAMMA = 0.9
EXAMPLE2_GAMMA = 0.9


def _market(
    mid: int,
    tokens: tuple[int, ...],
    reserves,
    gamma: float,
    gas: float,
    phi: TradeFunction,
) -> Market:
    reserves = np.asarray(reserves, dtype=float)
    return Market(
        id=mid,
        tokens=tokens,
        reserves=reserves,
        gamma=gamma,
        gas=gas,
        bounds=2.0 * reserves / gamma,
        trade_function=phi,
    )


def _example1(phi: TradeFunction, t: float, s: float, fee: float) -> RoutingInstance:
    market = _market(1, (1, 2, 3, 4, 5, 6), EXAMPLE1_RESERVES, EXAMPLE1_GAMMA, fee, phi)
    price = market.spot_price()
    pi = price / price[-1]
    pi = pi * np.array([t, s, 1.0, 1.0, 1.0, 1.0])
    return RoutingInstance(n=6, markets=(market,), utility=LinearUtility(pi))


def example1_gm(t: float, s: float = 1.0, fee: float = 0.0) -> RoutingInstance:
    """Single geometric-mean market over six assets."""
    return _example1(TradeFunction.geometric_mean(6), t, s, fee)


def example1_qm(t: float, s: float = 1.0, fee: float = 0.0) -> RoutingInstance:
    """Single quasi-arithmetic market over six assets."""
    return _example1(TradeFunction.weighted_quasi_arithmetic(6), t, s, fee)


def example2(
    t: float,
    fee: float = 0.01,
    fee_market4: float | None = None,
    gamma: float = EXAMPLE2_GAMMA,
) -> RoutingInstance:
    """Five markets on three tokens; ``fee_market4`` overrides market 4."""
    markets = (
        _market(
            1,
            (1, 2, 3),
            (3.0, 0.2, 1.0),
            gamma,
            fee,
            TradeFunction.weighted_geometric_mean((3.0, 2.0, 1.0)),
        ),
        _market(2, (1, 2), (10.0, 1.0), gamma, fee, TradeFunction.geometric_mean(2)),
        _market(3, (2, 3), (1.0, 10.0), gamma, fee, TradeFunction.geometric_mean(2)),
        _market(4, (1, 3), (20.0, 50.0), gamma, fee, TradeFunction.geometric_mean(2)),
        _market(5, (1, 3), (10.0, 10.0), gamma, fee, TradeFunction.weighted_sum((1.0, 1.0))),
    )
    if fee_market4 is not None:
        markets = markets[:3] + (replace(markets[3], gas=fee_market4),) + markets[4:]
    anchor = markets[0].spot_price()
    pi = np.array([t * anchor[0], anchor[1], anchor[2]])
    return RoutingInstance(n=3, markets=markets, utility=LinearUtility(pi))


BUILTIN_EXAMPLES = {
    "example1-gm": example1_gm,
    "example1-qm": example1_qm,
    "example2": example2,
}
