"""Action density, field-equation residuals, and matter sources.

Everything here is a pure function of jets produced by the frame fields in
``geometry``.  Two normalization facts thread through the module:

* ``internal_wedge`` alternates over whole index blocks with unit weight, so
  relative to a product of individually labeled factors each epsilon
  contraction below carries a fixed integer multiple.  The ``_MULT_*``
  constants divide those multiples out, keeping every residual in the same
  normalization as the labeled component equations; brute-force expansion
  tests pin each constant.
* A rank-2 stress tensor and a frame-valued 3-form are two encodings of the
  same source.  ``dual_component_projection`` maps the 3-form encoding back
  to rank-2 components; applied to the matter-free curvature-equation left
  side it lands on ``CURVATURE_DUAL_FACTOR`` times the Einstein tensor.
  That factor was measured once on random fields and is frozen here; a
  property test asserts it stays put across scenarios.

Index conventions follow ``geometry``: stress components t[mu, nu]; spin
source s[mu, nu, sigma], antisymmetric in (mu, nu); curvature residual
E[a, mu, nu, rho] with the internal index first; torsion residual
C[a, b, mu, nu, rho] with the antisymmetric internal pair first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exprkit import Chart, eval_jet_grid
from .forms import (
    EPSILON,
    ETA,
    MixedForm,
    covariant_exterior_derivative,
    epsilon_trace,
    internal_wedge,
)
from .geometry import (
    FrameSource,
    SingularTetradError,
    _PairField,
    _parse_grid,
    field_strength_jet,
    inverse_tetrad_jet,
    metric_jet,
    torsion_jet,
    torsion_tensor_jet,
)
from .jets import (
    DIM,
    Jet,
    _perm_sign,
    jet_einsum,
    jet_map,
    jet_matrix_inverse,
    jet_reciprocal,
)

EIGHT_PI = 8.0 * math.pi
SIXTEEN_PI = 16.0 * math.pi

# Ratio between the rank-2 projection of the matter-free curvature residual
# and the Einstein tensor.  Measured once on random frame data, identical on
# every scenario since; tests assert constancy rather than re-deriving it.
CURVATURE_DUAL_FACTOR = -2.0

# Form-level coupling that makes the form equations and the component
# equations (stress side 8 pi, spin side -16 pi) two views of the same
# statement.  Scenarios may override.
DEFAULT_KAPPA = EIGHT_PI * CURVATURE_DUAL_FACTOR

# Block-alternation multiples of ``internal_wedge`` contractions relative to
# the labeled-factor expressions they implement, fixed by the shuffle
# normalization of the wedge.  Verified against literal permutation sums in
# the tests; do not fold them into other constants.
_MULT_E_F = 3.0  # eps_abcd wedge(e, F) vs eps_abcd e^b ^ F^cd
_MULT_E_E_E = -6.0  # eps_abcd wedge(wedge(e, e), e) vs eps_abcd e^b ^ e^c ^ e^d
_MULT_E_E = -2.0  # wedge(e, e) vs e^c ^ e^d
_MULT_PAIR_E = -2.0  # eps_abcd wedge(beta, e) vs eps_abcd beta^c ^ e^d
_MULT_EEF_TRACE = -12.0  # eps contraction of wedge(wedge(e, e), F) vs labeled
_MULT_E4_TRACE = 24.0  # eps contraction of wedge(wedge(e, e), wedge(e, e))


class FieldEquationError(ValueError):
    """Inconsistent matter data or a broken structural postcondition."""


def _jet_max_abs(jet: Jet) -> float:
    return max(float(np.max(np.abs(d))) if d.size else 0.0 for d in jet.data)


def determinant_jet(e_jet: Jet) -> Jet:
    """Determinant of the 4x4 component block, carried to the jet's order."""
    comps = [
        [jet_map(lambda arr, a=a, m=m: arr[a, m], e_jet) for m in range(DIM)]
        for a in range(DIM)
    ]
    total = None
    for perm in itertools.permutations(range(DIM)):
        term = comps[0][perm[0]]
        for a in range(1, DIM):
            term = term * comps[a][perm[a]]
        term = term.scaled(float(_perm_sign(perm)))
        total = term if total is None else total + term
    return total


def riemann_jet(e_jet: Jet, omega_jet: Jet) -> Jet:
    """Riemann components r[mu, nu, omega, sigma], last index up.

    The result order is one less than the connection jet's, since the field
    strength consumes a derivative.
    """
    f = field_strength_jet(omega_jet)
    einv = inverse_tetrad_jet(e_jet)
    mixed = jet_einsum("sa,abmn->sbmn", einv, f)
    lowered = jet_map(lambda arr: np.einsum("sbmn...,bc->scmn...", arr, ETA), mixed)
    return jet_einsum("scmn,cw->mnws", lowered, e_jet)


def einstein_jet(e_jet: Jet, omega_jet: Jet) -> Jet:
    """Einstein tensor components [mu, nu] with derivatives.

    The result order is one less than the connection jet's, like
    ``riemann_jet`` which supplies the contraction.
    """
    f = field_strength_jet(omega_jet)
    einv = inverse_tetrad_jet(e_jet)
    g = metric_jet(e_jet)
    riemann = riemann_jet(e_jet, omega_jet)
    ricci = jet_map(lambda arr: np.einsum("msws...->mw...", arr), riemann)
    half = jet_einsum("ma,abmw->bw", einv, f)
    scalar = jet_einsum("wb,bw->", einv, half).scaled(-1.0)
    return ricci - jet_einsum("mw,->mw", g, scalar).scaled(0.5)


def torsion_q_jet(e_jet: Jet, omega_jet: Jet) -> Jet:
    """Torsion components q[mu, nu, sigma] with derivatives."""
    theta = torsion_jet(e_jet, omega_jet)
    return torsion_tensor_jet(theta, inverse_tetrad_jet(e_jet))


def dual_component_projection(form: MixedForm, e_jet: Jet) -> Jet:
    """Rank-2 components [mu, nu] of an internal-vector 3-form.

    Contracts the spacetime slots with the alternating symbol, maps the
    internal index through the tetrad, lowers the free slot with the metric,
    and removes the tetrad determinant.  Exact inverse of
    ``stress_tensor_to_form`` at unit scale.
    """
    if form.k != 3 or form.p != 1:
        raise FieldEquationError(
            f"expected an internal-vector 3-form, got (k={form.k}, p={form.p})"
        )
    det = determinant_jet(e_jet)
    if abs(float(det.value)) <= 1e-10:
        raise SingularTetradError("tetrad determinant vanishes at this point")
    dvec = jet_map(
        lambda arr: np.einsum("mnrs,amnr...->as...", EPSILON, arr) / 6.0, form.jet
    )
    g = metric_jet(e_jet)
    out = jet_einsum("am,as->ms", e_jet, dvec)
    out = jet_einsum("ms,sn->mn", out, g)
    return jet_einsum("mn,->mn", out, jet_reciprocal(det))


def stress_tensor_to_form(t_jet: Jet, e_jet: Jet, kappa: float) -> MixedForm:
    """Frame-valued 3-form encoding of rank-2 stress components.

    Scaled so that ``kappa`` times the result projects back (through
    ``dual_component_projection``) onto ``CURVATURE_DUAL_FACTOR * 8 pi``
    times the component tensor, matching the stress side of the component
    equations.
    """
    einv = inverse_tetrad_jet(e_jet)
    ginv = jet_matrix_inverse(metric_jet(e_jet))
    det = determinant_jet(e_jet)
    d = jet_einsum("ma,mn->an", einv, t_jet)
    d = jet_einsum("an,ns->as", d, ginv)
    d = jet_einsum("as,->as", d, det)
    v = jet_map(lambda arr: np.einsum("mnrs,as...->amnr...", EPSILON, arr), d)
    return MixedForm(3, 1, v.scaled(EIGHT_PI * CURVATURE_DUAL_FACTOR / kappa))


def spin_tensor_to_form(s_jet: Jet, e_jet: Jet, kappa: float) -> MixedForm:
    """Internal-pair 3-form encoding of the spin source s[mu, nu, sigma].

    Scaled so that ``kappa`` times the result equals the torsion-equation
    left side whenever the component relation between torsion and spin
    holds, matching the spin side of the component equations.
    """
    sig2 = jet_einsum("cs,mns->cmn", e_jet, s_jet)
    w = internal_wedge(MixedForm(2, 1, sig2), MixedForm(1, 1, e_jet))
    raw = jet_map(
        lambda arr: np.einsum("abcd,cdmnr...->abmnr...", EPSILON, arr), w.jet
    )
    return MixedForm(3, 2, raw.scaled(-SIXTEEN_PI / (kappa * _MULT_PAIR_E)))


class SpinSourceField(_PairField):
    """Spin source s[mu, nu, sigma] from pair-keyed component expressions.

    Keys name the antisymmetric (mu, nu) pair like '01'; each entry lists
    the four sigma components.
    """


class MatterModel:
    """Source terms for the field equations.

    Three modes: ``vacuum`` (no sources), ``explicit`` (component
    expressions over a chart), and ``manufactured`` (sources computed from
    a bound frame so every residual cancels identically).  ``kappa`` is the
    form-level coupling, ``lam`` the cosmological constant.  Construct via
    the classmethods or :func:`manufacture_matter`.
    """

    def __init__(
        self,
        mode: str,
        *,
        kappa: float | None = None,
        lam: float = 0.0,
        stress=None,
        spin=None,
        frame=None,
        totally_antisymmetric: bool = False,
    ):
        if mode not in ("vacuum", "explicit", "manufactured"):
            raise FieldEquationError(f"unknown matter mode {mode!r}")
        self.mode = mode
        self.kappa = DEFAULT_KAPPA if kappa is None else float(kappa)
        if self.kappa == 0.0:
            raise FieldEquationError("coupling kappa must be nonzero")
        self.lam = float(lam)
        self.totally_antisymmetric = bool(totally_antisymmetric)
        self._stress = stress
        self._spin = spin
        self._frame = frame
        if mode == "manufactured" and frame is None:
            raise FieldEquationError("manufactured matter needs a bound frame")

    @classmethod
    def vacuum(cls, *, kappa: float | None = None, lam: float = 0.0) -> "MatterModel":
        return cls("vacuum", kappa=kappa, lam=lam)

    @classmethod
    def explicit(
        cls,
        stress_texts: Sequence[Sequence[str]],
        spin_entries: Mapping[str, Sequence[str]] | None,
        chart: Chart,
        params: Mapping[str, float] | None = None,
        *,
        kappa: float | None = None,
        lam: float = 0.0,
        totally_antisymmetric: bool = False,
    ) -> "MatterModel":
        stress = _parse_grid(stress_texts, chart, params)
        spin = SpinSourceField(spin_entries or {}, chart, params)
        return cls(
            "explicit",
            kappa=kappa,
            lam=lam,
            stress=stress,
            spin=spin,
            totally_antisymmetric=totally_antisymmetric,
        )

    def attached_to(self, e: FrameSource, omega: FrameSource) -> bool:
        """Whether this model may be evaluated against the given frame."""
        if self.mode != "manufactured":
            return True
        return self._frame[0] is e and self._frame[1] is omega

    def stress_jet(self, point: Sequence[float], order: int) -> Jet:
        """Stress components t[mu, nu] at a point, with derivatives."""
        if self.mode == "vacuum":
            return Jet.zeros((DIM, DIM), order)
        if self.mode == "explicit":
            return eval_jet_grid(self._stress, point, order)
        e, omega = self._frame
        ej = e.jet(point, order)
        wj = omega.jet(point, order + 1)
        return einstein_jet(ej, wj).scaled(1.0 / EIGHT_PI)

    def spin_jet(self, point: Sequence[float], order: int) -> Jet:
        """Spin components s[mu, nu, sigma] at a point, with derivatives."""
        if self.mode == "vacuum":
            return Jet.zeros((DIM, DIM, DIM), order)
        if self.mode == "explicit":
            return self._spin.jet(point, order)
        e, omega = self._frame
        ej = e.jet(point, order + 1)
        wj = omega.jet(point, order)
        return torsion_q_jet(ej, wj).scaled(-1.0 / SIXTEEN_PI)

    def stress_form(self, point: Sequence[float], order: int, e_jet: Jet) -> MixedForm:
        if self.mode == "vacuum":
            return MixedForm.zero(3, 1, order)
        return stress_tensor_to_form(self.stress_jet(point, order), e_jet, self.kappa)

    def spin_form(self, point: Sequence[float], order: int, e_jet: Jet) -> MixedForm:
        if self.mode == "vacuum":
            return MixedForm.zero(3, 2, order)
        return spin_tensor_to_form(self.spin_jet(point, order), e_jet, self.kappa)


def manufacture_matter(
    e: FrameSource,
    omega: FrameSource,
    *,
    kappa: float | None = None,
    lam: float = 0.0,
) -> MatterModel:
    """Matter whose sources cancel the component equations identically.

    Stress is the Einstein tensor over 8 pi, spin is the torsion over
    -16 pi, both exposed as jet evaluators so identities can differentiate
    them.  Evaluation raises ``SingularTetradError`` where the frame
    degenerates.
    """
    return MatterModel("manufactured", kappa=kappa, lam=lam, frame=(e, omega))


def _require_attached(matter: MatterModel, e: FrameSource, omega: FrameSource):
    if not matter.attached_to(e, omega):
        raise FieldEquationError("manufactured matter is bound to a different frame")


def _eps_vector(form: MixedForm) -> MixedForm:
    """Contract three internal slots with the alternating symbol."""
    jet = jet_map(
        lambda arr: np.einsum("abcd,bcd...->a...", EPSILON, arr), form.jet
    )
    return MixedForm._wrap(form.k, 1, jet)


def _eps_pair(form: MixedForm) -> MixedForm:
    """Contract two internal slots with the alternating symbol."""
    jet = jet_map(
        lambda arr: np.einsum("abcd,cd...->ab...", EPSILON, arr), form.jet
    )
    return MixedForm._wrap(form.k, 2, jet)


def curvature_three_form(e_jet: Jet, f_jet: Jet) -> MixedForm:
    """Geometric side of the curvature equation: an internal-vector 3-form.

    Epsilon contraction of the coframe wedged with the field strength,
    normalized so components match the single-labeling reading of the
    wedge (the block-alternation multiple is divided out).
    """
    w = internal_wedge(MixedForm(1, 1, e_jet), MixedForm(2, 2, f_jet))
    return _eps_vector(w).scaled(1.0 / _MULT_E_F)


def torsion_three_form(theta_jet: Jet, e_jet: Jet) -> MixedForm:
    """Geometric side of the torsion equation: an internal-pair 3-form.

    Epsilon contraction of the torsion 2-form wedged with the coframe,
    normalized the same way as ``curvature_three_form``.
    """
    w = internal_wedge(MixedForm(2, 1, theta_jet), MixedForm(1, 1, e_jet))
    return _eps_pair(w).scaled(1.0 / _MULT_PAIR_E)


def pc_action_density(
    e: FrameSource, omega: FrameSource, lam: float, point: Sequence[float]
) -> float:
    """Coefficient of the coordinate volume form in the action integrand.

    Geometric part plus the cosmological term; for a torsion-free
    connection the geometric part is a fixed multiple of the curvature
    scalar times the tetrad determinant.
    """
    ej = e.jet(point, 0)
    det = float(np.linalg.det(ej.value))
    if abs(det) <= 1e-10:
        raise SingularTetradError("tetrad determinant vanishes at this point")
    wj = omega.jet(point, 1)
    ef = MixedForm(1, 1, ej)
    ee = internal_wedge(ef, ef)
    eef = internal_wedge(ee, MixedForm(2, 2, field_strength_jet(wj)))
    geo = 0.5 * 24.0 * epsilon_trace(eef).values[0, 1, 2, 3] / _MULT_EEF_TRACE
    vol = 24.0 * epsilon_trace(internal_wedge(ee, ee)).values[0, 1, 2, 3]
    return float(geo + (lam / 24.0) * vol / _MULT_E4_TRACE)


def curvature_equation_residual(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
    order: int = 0,
) -> MixedForm:
    """Residual E[a] of the curvature equation as an internal-vector 3-form.

    Curvature term plus the cosmological term minus ``kappa`` times the
    stress 3-form.  Zero (to tolerance) exactly on solutions.
    """
    _require_attached(matter, e, omega)
    ej = e.jet(point, order)
    wj = omega.jet(point, order + 1)
    ef = MixedForm(1, 1, ej)
    resid = curvature_three_form(ej, field_strength_jet(wj))
    if matter.lam != 0.0:
        ee = internal_wedge(ef, ef)
        vol3 = _eps_vector(internal_wedge(ee, ef)).scaled(1.0 / _MULT_E_E_E)
        resid = resid + vol3.scaled(matter.lam / 6.0)
    if matter.mode != "vacuum":
        resid = resid - matter.stress_form(point, order, ej).scaled(matter.kappa)
    return resid


def torsion_equation_sides(
    e: FrameSource,
    omega: FrameSource,
    point: Sequence[float],
    order: int = 0,
) -> tuple[MixedForm, MixedForm]:
    """Both routes to the torsion-equation left side, as internal-pair 3-forms.

    The derivative route applies the twisted exterior derivative to the
    frame-pair 2-form; the algebraic route contracts the torsion 2-form
    against the frame.  A product-rule fact makes them agree identically,
    so their gap doubles as a structural residual check.
    """
    ej = e.jet(point, order + 1)
    wj = omega.jet(point, order)
    ef = MixedForm(1, 1, ej)
    ee = internal_wedge(ef, ef)
    lhs = _eps_pair(covariant_exterior_derivative(wj, ee, (1, 1))).scaled(
        0.5 / _MULT_E_E
    )
    rhs = torsion_three_form(torsion_jet(ej, wj), ej)
    return lhs, rhs


def torsion_equation_residual(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
    order: int = 0,
    *,
    product_rule_tol: float = 1e-12,
) -> MixedForm:
    """Residual C[a, b] of the torsion equation as an internal-pair 3-form.

    The left side is computed twice via ``torsion_equation_sides``; the two
    routes must agree to ``product_rule_tol`` (a structural identity), else
    ``FieldEquationError``.  The residual subtracts ``kappa`` times the
    spin 3-form from the derivative route.
    """
    _require_attached(matter, e, omega)
    lhs, rhs = torsion_equation_sides(e, omega, point, order)
    gap = _jet_max_abs((lhs - rhs).jet)
    scale = max(1.0, _jet_max_abs(lhs.jet), _jet_max_abs(rhs.jet))
    if gap > product_rule_tol * scale:
        raise FieldEquationError(
            f"product-rule identity violated: gap {gap:.3e} at scale {scale:.3e}"
        )
    resid = lhs
    if matter.mode != "vacuum":
        ej = e.jet(point, order + 1)
        resid = resid - matter.spin_form(point, order, ej).scaled(matter.kappa)
    return resid


@dataclass(frozen=True)
class ComponentResiduals:
    """Component-language residuals: stress side and spin side."""

    stress: np.ndarray  # [mu, nu]
    spin: np.ndarray  # [mu, nu, sigma]


def component_field_equation_residuals(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
) -> ComponentResiduals:
    """Einstein-tensor and torsion residuals against the component sources."""
    _require_attached(matter, e, omega)
    ej = e.jet(point, 1)
    wj = omega.jet(point, 1)
    stress = einstein_jet(ej, wj).value - EIGHT_PI * matter.stress_jet(point, 0).value
    spin = torsion_q_jet(ej, wj).value + SIXTEEN_PI * matter.spin_jet(point, 0).value
    return ComponentResiduals(stress=stress, spin=spin)


def validate_spin_antisymmetry(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
    tol: float = 1e-10,
):
    """Assert total antisymmetry of the spin source and of the torsion.

    Both tensors are lowered with the metric first; violation raises
    ``FieldEquationError``.  Meant for matter models carrying the
    ``totally_antisymmetric`` flag.
    """
    ej = e.jet(point, 1)
    wj = omega.jet(point, 1)
    g = metric_jet(ej).value
    checks = (
        ("spin source", np.einsum("mns,sr->mnr", matter.spin_jet(point, 0).value, g)),
        ("torsion", np.einsum("mns,sr->mnr", torsion_q_jet(ej, wj).value, g)),
    )
    for name, arr in checks:
        scale = max(1.0, float(np.abs(arr).max()))
        for ax in ((0, 1), (1, 2)):
            sym = arr + np.swapaxes(arr, *ax)
            if float(np.abs(sym).max()) > tol * scale:
                raise FieldEquationError(
                    f"{name} is not totally antisymmetric: "
                    f"symmetric part {np.abs(sym).max():.3e} in axes {ax}"
                )
