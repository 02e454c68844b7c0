"""Parameter sweeps over the built-in example families.

A sweep spec names a template instance, one or two linearly spaced axes,
and a list of gas fees.  Every grid point is evaluated independently:
``certificates`` mode computes the closed-form no-trade certificates only;
``full`` mode additionally solves the relaxed and integer problems and
records their objectives, the integer activation pattern, and no-trade
flags.  A second row family (``run_compare``) solves relaxed, rounded, and
exact problems per point and records the rounding-gap bound and the KKT
verdict.  Rows are written as CSV with floats rendered via repr-faithful
``%.17g`` so identical runs produce identical bytes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import no_trade_certificates, verify_epsilon
from .examples import BUILTIN_EXAMPLES
from .model import RoutingInstance
from .optimality import verify_kkt
from .solver import CONVERGED, SolveOptions, solve_exact_enumeration, solve_relaxed

SWEEP_SCHEMA_VERSION = 1

NO_TRADE_TOL = 1e-6

MODE_CERTIFICATES = "certificates"
MODE_FULL = "full"

_POINT_SEED_STRIDE = 1009


class SweepParseError(ValueError):
    """Raised when a sweep document is malformed."""


@dataclass(frozen=True)
class SweepAxis:
    """One linearly spaced parameter axis."""

    name: str
    start: float
    stop: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """Template name, axes, fees, per-market gas overrides, and mode."""

    template: str
    axes: tuple[SweepAxis, ...]
    fees: tuple[float, ...]
    gas_overrides: dict[int, float] = field(default_factory=dict)
    mode: str = MODE_FULL

    def __post_init__(self) -> None:
        if self.template not in BUILTIN_EXAMPLES:
            raise SweepParseError(f"unknown template {self.template!r}")
        if not 1 <= len(self.axes) <= 2:
            raise SweepParseError("sweep needs one or two axes")
        if not self.fees:
            raise SweepParseError("sweep needs at least one fee")
        if self.mode not in (MODE_CERTIFICATES, MODE_FULL):
            raise SweepParseError(f"unknown mode {self.mode!r}")
        for axis in self.axes:
            if axis.count < 1:
                raise SweepParseError(f"axis {axis.name!r} needs count >= 1")


def sweep_from_dict(doc: dict) -> SweepSpec:
    """Parse a sweep document (see the CSV/JSON formats in the README)."""
    if not isinstance(doc, dict):
        raise SweepParseError("sweep document must be an object")
    version = doc.get("schema_version")
    if version != SWEEP_SCHEMA_VERSION:
        raise SweepParseError(f"unsupported schema_version: {version!r}")
    try:
        template = doc["template"]
        axes_docs = doc["axes"]
        fees = tuple(float(q) for q in doc["fees"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SweepParseError(f"missing or malformed field: {exc}") from exc
    if not isinstance(axes_docs, list):
        raise SweepParseError("axes must be a list")
    axes = []
    for pos, adoc in enumerate(axes_docs):
        try:
            axes.append(
                SweepAxis(
                    name=str(adoc["name"]),
                    start=float(adoc["min"]),
                    stop=float(adoc["max"]),
                    count=int(adoc["count"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SweepParseError(f"axes[{pos}]: missing or malformed field: {exc}") from exc
    overrides_doc = doc.get("gas_overrides", {})
    if not isinstance(overrides_doc, dict):
        raise SweepParseError("gas_overrides must be an object")
    try:
        overrides = {int(k): float(v) for k, v in overrides_doc.items()}
    except (TypeError, ValueError) as exc:
        raise SweepParseError(f"gas_overrides: {exc}") from exc
    return SweepSpec(
        template=str(template),
        axes=tuple(axes),
        fees=fees,
        gas_overrides=overrides,
        mode=str(doc.get("mode", MODE_FULL)),
    )


def grid_points(spec: SweepSpec) -> list[tuple[float, ...]]:
    """Grid in row-major order: the first axis varies slowest."""
    if len(spec.axes) == 1:
        return [(float(v),) for v in spec.axes[0].values()]
    first, second = spec.axes
    return [
        (float(a), float(b)) for a in first.values() for b in second.values()
    ]


def build_instance(spec: SweepSpec, point: tuple[float, ...], fee: float) -> RoutingInstance:
    """Instantiate the template at one grid point with gas overrides applied."""
    kwargs = {axis.name: value for axis, value in zip(spec.axes, point)}
    try:
        instance = BUILTIN_EXAMPLES[spec.template](fee=fee, **kwargs)
    except TypeError as exc:
        raise SweepParseError(
            f"template {spec.template!r} rejects axes "
            f"{[axis.name for axis in spec.axes]}: {exc}"
        ) from exc
    if not spec.gas_overrides:
        return instance
    known = {mk.id for mk in instance.markets}
    missing = sorted(set(spec.gas_overrides) - known)
    if missing:
        raise SweepParseError(f"gas_overrides for unknown market ids {missing}")
    markets = tuple(
        replace(mk, gas=spec.gas_overrides.get(mk.id, mk.gas)) for mk in instance.markets
    )
    return replace(instance, markets=markets)


@dataclass
class SweepRow:
    """Result of one grid point at one fee."""

    point: tuple[float, ...]
    fee: float
    members: list[bool]
    min_gas: list[float]
    member_all: bool
    eta: list[float] | None = None
    objective_relaxed: float | None = None
    objective_integer: float | None = None
    no_trade_relaxed: bool | None = None
    no_trade: bool | None = None
    converged: bool = True


def evaluate_point(
    spec: SweepSpec,
    point: tuple[float, ...],
    fee: float,
    options: SolveOptions | None = None,
) -> SweepRow:
    """Certificates (always) plus relaxed/integer solves in full mode."""
    instance = build_instance(spec, point, fee)
    certs = no_trade_certificates(instance)
    row = SweepRow(
        point=point,
        fee=fee,
        members=[c.member for c in certs],
        min_gas=[c.min_gas for c in certs],
        member_all=all(c.member for c in certs),
    )
    if spec.mode != MODE_FULL:
        return row
    options = options or SolveOptions()
    relaxed = solve_relaxed(instance, options)
    integer = solve_exact_enumeration(instance, options)
    row.eta = [float(v) for v in integer.plan.eta]
    row.objective_relaxed = relaxed.objective
    row.objective_integer = integer.objective
    row.no_trade_relaxed = abs(relaxed.objective) <= NO_TRADE_TOL
    row.no_trade = abs(integer.objective) <= NO_TRADE_TOL
    row.converged = relaxed.status == CONVERGED and integer.status == CONVERGED
    return row


def _evaluate_task(task) -> SweepRow:
    spec, point, fee, options = task
    return evaluate_point(spec, point, fee, options)


def run_sweep(
    spec: SweepSpec,
    options: SolveOptions | None = None,
    threads: int = 1,
) -> list[SweepRow]:
    """Evaluate the whole grid, one row per (fee, point), in a fixed order.

    Each row gets its own seed derived from the base seed and the row index,
    so results do not depend on the number of worker processes.
    """
    base = options or SolveOptions()
    tasks = []
    index = 0
    for fee in spec.fees:
        for point in grid_points(spec):
            row_options = replace(base, seed=base.seed + _POINT_SEED_STRIDE * index)
            tasks.append((spec, point, fee, row_options))
            index += 1
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_evaluate_task, tasks))
    return [_evaluate_task(task) for task in tasks]


@dataclass
class CompareRow:
    """Relaxed / rounded / exact objectives at one grid point and fee."""

    point: tuple[float, ...]
    fee: float
    eta: list[float]
    h_relaxed: float
    h_rounded: float
    h_exact: float
    epsilon: float
    sandwich_ok: bool
    gap_ok: bool
    no_trade: bool
    kkt_passed: bool
    converged: bool


def evaluate_compare_point(
    spec: SweepSpec,
    point: tuple[float, ...],
    fee: float,
    options: SolveOptions | None = None,
) -> CompareRow:
    """Solve all three problem variants at one grid point."""
    instance = build_instance(spec, point, fee)
    report = verify_epsilon(instance, options)
    kkt = verify_kkt(instance, report.relaxed_plan)
    return CompareRow(
        point=point,
        fee=fee,
        eta=[float(v) for v in report.eta],
        h_relaxed=report.h_relaxed,
        h_rounded=report.h_rounded,
        h_exact=report.h_exact,
        epsilon=report.epsilon.value,
        sandwich_ok=report.sandwich_ok,
        gap_ok=report.gap_ok,
        no_trade=abs(report.h_exact) <= NO_TRADE_TOL,
        kkt_passed=kkt.passed,
        converged=all(status == CONVERGED for status in report.statuses),
    )


def _compare_task(task) -> CompareRow:
    spec, point, fee, options = task
    return evaluate_compare_point(spec, point, fee, options)


def run_compare(
    spec: SweepSpec,
    options: SolveOptions | None = None,
    threads: int = 1,
) -> list[CompareRow]:
    """Evaluate the compare sweep in the same fixed order as run_sweep."""
    base = options or SolveOptions()
    tasks = []
    index = 0
    for fee in spec.fees:
        for point in grid_points(spec):
            row_options = replace(base, seed=base.seed + _POINT_SEED_STRIDE * index)
            tasks.append((spec, point, fee, row_options))
            index += 1
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_compare_task, tasks))
    return [_compare_task(task) for task in tasks]


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def csv_header(spec: SweepSpec, n_markets: int) -> list[str]:
    columns = [axis.name for axis in spec.axes]
    columns.append("fee")
    columns.extend(f"member_{i + 1}" for i in range(n_markets))
    columns.extend(f"min_gas_{i + 1}" for i in range(n_markets))
    columns.append("member_all")
    if spec.mode == MODE_FULL:
        columns.extend(f"eta_{i + 1}" for i in range(n_markets))
        columns.extend(
            ["objective_relaxed", "objective_integer", "no_trade_relaxed", "no_trade", "converged"]
        )
    return columns


def rows_to_csv(spec: SweepSpec, rows: list[SweepRow]) -> str:
    """Render rows as deterministic CSV text (header + one line per row)."""
    if not rows:
        raise ValueError("no rows to write")
    n_markets = len(rows[0].members)
    lines = [",".join(csv_header(spec, n_markets))]
    for row in rows:
        cells = [_fmt(v) for v in row.point]
        cells.append(_fmt(row.fee))
        cells.extend(str(int(flag)) for flag in row.members)
        cells.extend(_fmt(v) for v in row.min_gas)
        cells.append(str(int(row.member_all)))
        if spec.mode == MODE_FULL:
            cells.extend(_fmt(v) for v in row.eta)
            cells.append(_fmt(row.objective_relaxed))
            cells.append(_fmt(row.objective_integer))
            cells.append(str(int(row.no_trade_relaxed)))
            cells.append(str(int(row.no_trade)))
            cells.append(str(int(row.converged)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(spec: SweepSpec, rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(rows_to_csv(spec, rows))


def compare_csv_header(spec: SweepSpec, n_markets: int) -> list[str]:
    columns = [axis.name for axis in spec.axes]
    columns.append("fee")
    columns.extend(f"eta_{i + 1}" for i in range(n_markets))
    columns.extend(
        [
            "objective_relaxed",
            "objective_rounded",
            "objective_integer",
            "epsilon",
            "sandwich_ok",
            "gap_ok",
            "no_trade",
            "kkt_passed",
            "converged",
        ]
    )
    return columns


def compare_rows_to_csv(spec: SweepSpec, rows: list[CompareRow]) -> str:
    """Render compare rows as deterministic CSV text."""
    if not rows:
        raise ValueError("no rows to write")
    n_markets = len(rows[0].eta)
    lines = [",".join(compare_csv_header(spec, n_markets))]
    for row in rows:
        cells = [_fmt(v) for v in row.point]
        cells.append(_fmt(row.fee))
        cells.extend(_fmt(v) for v in row.eta)
        cells.append(_fmt(row.h_relaxed))
        cells.append(_fmt(row.h_rounded))
        cells.append(_fmt(row.h_exact))
        cells.append(_fmt(row.epsilon))
        cells.append(str(int(row.sandwich_ok)))
        cells.append(str(int(row.gap_ok)))
        cells.append(str(int(row.no_trade)))
        cells.append(str(int(row.kkt_passed)))
        cells.append(str(int(row.converged)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_compare_csv(spec: SweepSpec, rows: list[CompareRow], path) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(compare_rows_to_csv(spec, rows))
