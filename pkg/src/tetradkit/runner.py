"""Check orchestration: seeded sampling, residual evaluation, reporting.

The registry below names every residual check the package can run against
a scenario, in the order reports list them.  Each check is a pure function
of (fields, matter, point) plus, for checks that need auxiliary random
objects, a dedicated generator seeded from (run seed, point index, check
name), so disabling one check never shifts another's random stream.

Residuals are reported relative to the largest field magnitude seen at the
point (floored at one), so tolerances survive regions where the fields or
their derivatives grow large.
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .exprkit import Chart
from .fieldeqs import (
    component_field_equation_residuals,
    curvature_equation_residual,
    torsion_equation_residual,
    torsion_equation_sides,
)
from .forms import MixedForm
from .geometry import (
    christoffel_jet,
    field_strength_jet,
    inverse_tetrad_jet,
    metric_jet,
    torsion_jet,
    torsion_tensor_jet,
)
from .identities import (
    commutator_residual,
    conservation_component_residuals,
    conservation_form_residuals,
    d_squared_residual,
    first_bianchi_residual,
    metric_compatibility_residual,
    rewritten_lhs_check,
    second_bianchi_residual,
)
from .jets import Jet
from .scenarios import Scenario

DIM = 4


class RunnerError(ValueError):
    """Bad run options: unknown check names or tolerance keys."""


class _CachingSource:
    """Memoizes jets of a field source per (point, order) for one run."""

    def __init__(self, source):
        self._source = source
        self._cache: dict[tuple, Jet] = {}

    def jet(self, point, order: int) -> Jet:
        key = (tuple(float(c) for c in point), order)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._source.jet(point, order)
            self._cache[key] = hit
        return hit


class CheckContext:
    """Everything a check evaluator may consume at one sample point."""

    def __init__(self, e, omega, matter, point, index: int, seed: int):
        self.e = e
        self.omega = omega
        self.matter = matter
        self.point = point
        self.index = index
        self.seed = seed
        self._magnitude = None

    def e_jet(self, order: int) -> Jet:
        return self.e.jet(self.point, order)

    def omega_jet(self, order: int) -> Jet:
        return self.omega.jet(self.point, order)

    def aux_rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(
            [int(self.seed), int(self.index), zlib.crc32(name.encode())]
        )

    def magnitude(self) -> float:
        """Largest field magnitude at the point, floored at one.

        Covers the tetrad and connection jets through second order and,
        when matter is present, the source jets through first order.  Also
        enforces the positive-orientation requirement on the tetrad.
        """
        if self._magnitude is None:
            ej = self.e_jet(2)
            if float(np.linalg.det(ej.value)) <= 0.0:
                raise RunnerError(
                    "tetrad determinant must be positive everywhere; "
                    f"found a non-positive value at {tuple(self.point)}"
                )
            parts = [1.0]
            for jet in (ej, self.omega_jet(2)):
                parts.extend(float(np.max(np.abs(d))) for d in jet.data)
            if self.matter.mode != "vacuum":
                for jet in (
                    self.matter.stress_jet(self.point, 1),
                    self.matter.spin_jet(self.point, 1),
                ):
                    parts.extend(float(np.max(np.abs(d))) for d in jet.data)
            self._magnitude = max(parts)
        return self._magnitude


def _random_jet(rng: np.random.Generator, shape: tuple[int, ...], order: int) -> Jet:
    """A random coherent jet: trailing derivative axes fully symmetric."""
    data = [rng.uniform(-1.0, 1.0, shape)]
    for k in range(1, order + 1):
        arr = rng.uniform(-1.0, 1.0, shape + (DIM,) * k)
        if k == 2:
            arr = 0.5 * (arr + arr.swapaxes(-1, -2))
        elif k == 3:
            total = np.zeros_like(arr)
            base = tuple(range(arr.ndim - 3))
            for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
                axes = base + tuple(arr.ndim - 3 + p for p in perm)
                total = total + np.transpose(arr, axes)
            arr = total / 6.0
        data.append(arr)
    return Jet(order, data)


def _jet_abs_max(jet: Jet) -> float:
    return max(float(np.max(np.abs(d))) for d in jet.data)


# -- check evaluators -------------------------------------------------------


def _check_metric_compatibility(ctx: CheckContext) -> float:
    return float(np.abs(metric_compatibility_residual(ctx.e, ctx.omega, ctx.point)).max())


def _check_torsion_consistency(ctx: CheckContext) -> float:
    ej = ctx.e_jet(1)
    wj = ctx.omega_jet(1)
    einv = inverse_tetrad_jet(ej)
    q_frame = torsion_tensor_jet(torsion_jet(ej, wj), einv).value
    gamma = christoffel_jet(ej, wj, einv).value
    q_gamma = np.transpose(gamma - gamma.transpose(0, 2, 1), (1, 2, 0))
    return float(np.abs(q_frame - q_gamma).max())


def _check_scalar_consistency(ctx: CheckContext) -> float:
    ej = ctx.e_jet(1)
    wj = ctx.omega_jet(1)
    einv = inverse_tetrad_jet(ej).value
    f = field_strength_jet(wj).value
    g = metric_jet(ej).value
    from .forms import ETA

    riemann = np.einsum("sa,abmn,bc,cw->mnws", einv, f, ETA, ej.value)
    ricci = np.einsum("msws->mw", riemann)
    direct = -float(np.einsum("ma,wb,abmw->", einv, einv, f))
    traced = float(np.einsum("mw,mw->", np.linalg.inv(g), ricci))
    return abs(direct - traced)


def _check_levi_civita_torsion(ctx: CheckContext) -> float:
    return float(np.abs(torsion_jet(ctx.e_jet(1), ctx.omega_jet(1)).value).max())


def _check_first_bianchi(ctx: CheckContext) -> float:
    return first_bianchi_residual(ctx.e, ctx.omega, ctx.point).max_abs()


def _check_second_bianchi(ctx: CheckContext) -> float:
    return second_bianchi_residual(ctx.omega, ctx.point).max_abs()


def _check_d_squared(ctx: CheckContext) -> float:
    rng = ctx.aux_rng("d2-law")
    wj = ctx.omega_jet(2)
    worst = 0.0
    for variances, shape in (
        ((1,), (DIM,)),
        ((-1,), (DIM,)),
        ((1, -1), (DIM, DIM)),
    ):
        alpha = MixedForm._wrap(0, len(variances), _random_jet(rng, shape, 2))
        worst = max(worst, d_squared_residual(wj, alpha, variances).max_abs())
    raw = _random_jet(rng, (DIM, DIM), 2)
    anti = Jet(raw.order, [0.5 * (d - d.swapaxes(0, 1)) for d in raw.data])
    worst = max(worst, d_squared_residual(wj, MixedForm._wrap(2, 0, anti), ()).max_abs())
    return worst


def _check_commutator(ctx: CheckContext) -> float:
    rng = ctx.aux_rng("commutator")
    vector = _random_jet(rng, (DIM,), 2)
    return _jet_abs_max(commutator_residual(ctx.omega_jet(2), vector))


def _check_nfe_leibniz(ctx: CheckContext) -> float:
    lhs, rhs = torsion_equation_sides(ctx.e, ctx.omega, ctx.point)
    return (lhs - rhs).max_abs()


def _check_rewritten_lhs(ctx: CheckContext) -> float:
    first, second = rewritten_lhs_check(ctx.e, ctx.omega, ctx.point)
    return max(first.max_abs(), second.max_abs())


def _check_curvature_equation(ctx: CheckContext) -> float:
    return curvature_equation_residual(ctx.e, ctx.omega, ctx.matter, ctx.point).max_abs()


def _check_torsion_equation(ctx: CheckContext) -> float:
    return torsion_equation_residual(ctx.e, ctx.omega, ctx.matter, ctx.point).max_abs()


def _check_component_field_equations(ctx: CheckContext) -> float:
    res = component_field_equation_residuals(ctx.e, ctx.omega, ctx.matter, ctx.point)
    return max(float(np.abs(res.stress).max()), float(np.abs(res.spin).max()))


def _check_conservation_form(ctx: CheckContext) -> float:
    res = conservation_form_residuals(ctx.e, ctx.omega, ctx.matter, ctx.point)
    return max(res.stress.max_abs(), res.spin.max_abs())


def _check_conservation_component(ctx: CheckContext) -> float:
    res = conservation_component_residuals(ctx.e, ctx.omega, ctx.matter, ctx.point)
    return max(float(np.abs(res.stress).max()), float(np.abs(res.spin).max()))


def _always(_scenario: Scenario) -> bool:
    return True


def _needs_levi_civita(scenario: Scenario) -> bool:
    return scenario.connection_mode == "levi-civita"


@dataclass(frozen=True)
class IdentityCheck:
    """A named residual check with its jet-depth need and tolerance."""

    name: str
    required_order: int
    tolerance: float
    evaluate: Callable[[CheckContext], float]
    applies: Callable[[Scenario], bool] = _always

    def __post_init__(self):
        if not 0 <= self.required_order <= 3:
            raise ValueError(f"check {self.name}: jet order {self.required_order} out of range")


CHECKS: tuple[IdentityCheck, ...] = (
    IdentityCheck("metric-compatibility", 2, 1e-10, _check_metric_compatibility),
    IdentityCheck("torsion-consistency", 1, 1e-12, _check_torsion_consistency),
    IdentityCheck("scalar-consistency", 1, 1e-10, _check_scalar_consistency),
    IdentityCheck(
        "levi-civita-torsion", 1, 1e-12, _check_levi_civita_torsion, _needs_levi_civita
    ),
    IdentityCheck("first-bianchi", 2, 1e-10, _check_first_bianchi),
    IdentityCheck("second-bianchi", 2, 1e-10, _check_second_bianchi),
    IdentityCheck("d2-law", 2, 1e-10, _check_d_squared),
    IdentityCheck("commutator", 2, 1e-8, _check_commutator),
    IdentityCheck("nfe-leibniz", 1, 1e-12, _check_nfe_leibniz),
    IdentityCheck("rewritten-lhs", 2, 1e-9, _check_rewritten_lhs),
    IdentityCheck("curvature-equation", 1, 1e-8, _check_curvature_equation),
    IdentityCheck("torsion-equation", 1, 1e-10, _check_torsion_equation),
    IdentityCheck("component-field-equations", 1, 1e-8, _check_component_field_equations),
    IdentityCheck("conservation-form", 2, 1e-7, _check_conservation_form),
    IdentityCheck("conservation-component", 2, 1e-7, _check_conservation_component),
)

CHECK_NAMES = tuple(check.name for check in CHECKS)
_CHECKS_BY_NAME = {check.name: check for check in CHECKS}


def sample_points(chart: Chart, count: int, seed: int) -> np.ndarray:
    """Uniform points in the chart box, shrunk by a one percent margin."""
    lo = np.array([b[0] for b in chart.bounds])
    hi = np.array([b[1] for b in chart.bounds])
    span = hi - lo
    rng = np.random.default_rng(seed)
    return lo + 0.01 * span + rng.random((count, DIM)) * 0.98 * span


@dataclass(frozen=True)
class CheckResult:
    name: str
    points: int
    max_residual: float | None
    mean_residual: float | None
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class CheckReport:
    scenario_name: str
    digest: str
    points: int
    seed: int
    max_order: int
    results: tuple[CheckResult, ...]
    errors: tuple[dict, ...]
    overall_pass: bool
    wall_time: float


def _validate_names(names, what: str):
    unknown = sorted(set(names) - set(CHECK_NAMES))
    if unknown:
        raise RunnerError(
            f"unknown {what}: {', '.join(unknown)}; known checks are "
            f"{', '.join(CHECK_NAMES)}"
        )


def run_checks(
    scenario: Scenario,
    *,
    points: int | None = None,
    seed: int | None = None,
    tolerances: Mapping[str, float] | None = None,
    checks: Sequence[str] | None = None,
    max_order: int = 3,
) -> CheckReport:
    """Evaluate every enabled check at seeded sample points.

    The report is fully determined by (scenario, seed, options) apart from
    the wall time.  Per-point evaluation errors are recorded with the point
    and the check name without stopping other points; a run with any
    recorded error never passes overall.
    """
    n = points if points is not None else scenario.points
    s = seed if seed is not None else scenario.seed
    if n <= 0:
        raise RunnerError(f"points must be positive, got {n}")

    tol_map = {check.name: check.tolerance for check in CHECKS}
    _validate_names(scenario.tolerances, "tolerance override")
    tol_map.update(scenario.tolerances)
    if tolerances:
        _validate_names(tolerances, "tolerance override")
        tol_map.update(tolerances)

    if checks is not None:
        _validate_names(checks, "check name")
        wanted = set(checks)
    else:
        wanted = set(CHECK_NAMES)
    enabled = [
        check
        for check in CHECKS
        if check.name in wanted
        and check.applies(scenario)
        and check.required_order <= max_order
    ]
    if not enabled:
        raise RunnerError(
            "no checks selected: the filter, the scenario, and the jet order "
            "cap left nothing to run"
        )

    e, omega = scenario.frames()
    e = _CachingSource(e)
    omega = _CachingSource(omega)
    matter = scenario.matter_model(e, omega)

    start = time.perf_counter()
    pts = sample_points(scenario.chart, n, s)
    residuals: dict[str, list[float]] = {check.name: [] for check in enabled}
    errors: list[dict] = []
    for index, point in enumerate(pts):
        ctx = CheckContext(e, omega, matter, point, index, s)
        for check in enabled:
            try:
                value = check.evaluate(ctx) / ctx.magnitude()
            except Exception as exc:
                errors.append(
                    {
                        "check": check.name,
                        "point": [float(c) for c in point],
                        "message": f"{type(exc).__name__}: {exc}",
                    }
                )
            else:
                residuals[check.name].append(float(value))

    errored = {entry["check"] for entry in errors}
    results = []
    for check in enabled:
        values = residuals[check.name]
        tol = tol_map[check.name]
        if values:
            mx = max(values)
            mean = sum(values) / len(values)
        else:
            mx = None
            mean = None
        passed = bool(values) and check.name not in errored and mx <= tol
        results.append(
            CheckResult(
                name=check.name,
                points=len(values),
                max_residual=mx,
                mean_residual=mean,
                tolerance=tol,
                passed=passed,
            )
        )
    overall = all(r.passed for r in results) and not errors
    wall = time.perf_counter() - start
    return CheckReport(
        scenario_name=scenario.name,
        digest=scenario.digest,
        points=n,
        seed=s,
        max_order=max_order,
        results=tuple(results),
        errors=tuple(errors),
        overall_pass=overall,
        wall_time=wall,
    )


# -- report output ----------------------------------------------------------


def report_document(report: CheckReport) -> dict:
    """The JSON document for a report, with a stable key order.

    Every field except ``wall_time_seconds`` is determined by the run
    inputs; numeric values round-trip exactly through JSON because Python
    prints shortest-round-trip floats.
    """
    return {
        "schema_version": "1",
        "scenario": {"name": report.scenario_name, "digest": report.digest},
        "options": {
            "points": report.points,
            "seed": report.seed,
            "max_order": report.max_order,
        },
        "checks": [
            {
                "name": r.name,
                "points": r.points,
                "max_residual": r.max_residual,
                "mean_residual": r.mean_residual,
                "tolerance": r.tolerance,
                "pass": r.passed,
            }
            for r in report.results
        ],
        "errors": [dict(entry) for entry in report.errors],
        "overall_pass": report.overall_pass,
        "wall_time_seconds": report.wall_time,
    }


def format_text(report: CheckReport) -> str:
    """Aligned text table, checks in declaration order."""
    headers = ("check", "points", "max", "mean", "tol", "status")
    rows = []
    for r in report.results:
        rows.append(
            (
                r.name,
                str(r.points),
                "-" if r.max_residual is None else f"{r.max_residual:.3e}",
                "-" if r.mean_residual is None else f"{r.mean_residual:.3e}",
                f"{r.tolerance:.1e}",
                "PASS" if r.passed else "FAIL",
            )
        )
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        f"scenario {report.scenario_name}  digest {report.digest}  "
        f"points {report.points}  seed {report.seed}"
    ]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    for entry in report.errors:
        point = ", ".join(f"{c:.6g}" for c in entry["point"])
        lines.append(f"error  {entry['check']}  at ({point}): {entry['message']}")
    verdict = "PASS" if report.overall_pass else "FAIL"
    lines.append(f"overall: {verdict}  ({report.wall_time:.2f} s)")
    return "\n".join(lines) + "\n"


def emit_report(report: CheckReport, fmt: str = "text", path=None):
    """Write a report as text or JSON, to a file or standard output."""
    if fmt == "json":
        payload = json.dumps(report_document(report), indent=2) + "\n"
    elif fmt == "text":
        payload = format_text(report)
    else:
        raise RunnerError(f"unknown report format {fmt!r}")
    if path is None:
        print(payload, end="")
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(payload)
