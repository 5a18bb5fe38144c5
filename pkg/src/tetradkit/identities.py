"""Structural identity residuals for frame geometries and matter sources.

Each function returns a residual that vanishes identically, to rounding,
whenever its inputs are coherent jets of smooth fields: the derivative
tensors must actually be derivatives of the values.  A corrupted field
breaks that coherence and shows up as a finite residual, which is what
makes these useful as checks.  The conservation residuals are the one
exception: they vanish exactly on solutions of the field equations and
report a finite defect off solutions.

Two transcription facts thread through the module:

* The derivative identities are computed on block-alternating wedge
  components (see ``forms``).  Where a single-labeling identity acquires a
  fixed sign in that representation, the code carries the measured sign and
  a test pins it.  The one instance is the second half of
  ``rewritten_lhs_check``.
* The component conservation laws are the volume duals of the form laws.
  Dualizing puts the divergence on the second stress slot, brings in a
  torsion-trace coupling, and packages the spin source with its vector
  trace (``spin_potential_tensor``).  Every index placement is recorded in
  docs/conventions.md, and tests verify the component residuals equal the
  dualized form residuals to rounding, off solutions as well as on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fieldeqs import (
    MatterModel,
    _require_attached,
    curvature_three_form,
    determinant_jet,
    riemann_jet,
    torsion_q_jet,
    torsion_three_form,
)
from .forms import (
    ETA,
    DegreeError,
    MixedForm,
    _alt_blocks,
    covariant_D,
    covariant_exterior_derivative,
)
from .geometry import (
    FrameSource,
    christoffel_jet,
    field_strength_jet,
    inverse_tetrad_jet,
    metric_jet,
    torsion_jet,
)
from .jets import Jet, jet_einsum, jet_map, jet_matrix_inverse

__all__ = [
    "ConservationComponentResiduals",
    "ConservationFormResiduals",
    "commutator_residual",
    "conservation_component_residuals",
    "conservation_form_residuals",
    "curvature_wedge_action",
    "d_squared_residual",
    "first_bianchi_residual",
    "metric_compatibility_residual",
    "rewritten_lhs_check",
    "second_bianchi_residual",
    "spin_potential_tensor",
]


def second_bianchi_residual(
    omega: FrameSource, point: Sequence[float], order: int = 0
) -> MixedForm:
    """Twisted exterior derivative of the field strength.

    Identically zero for any connection; returns the internal-pair 3-form
    so callers can inspect where coherence fails.  Needs connection jets of
    order ``order + 2``.
    """
    wj = omega.jet(point, order + 2)
    f = MixedForm(2, 2, field_strength_jet(wj))
    return covariant_exterior_derivative(wj, f, (1, 1))


def first_bianchi_residual(
    e: FrameSource, omega: FrameSource, point: Sequence[float], order: int = 0
) -> MixedForm:
    """Twisted derivative of torsion minus the curvature-coframe wedge.

    The subtracted term contracts the field strength's second internal slot
    into the coframe through the frame metric before the spacetime wedge,
    so no block-alternation multiple appears.  Internal-vector 3-form, zero
    for every frame and connection.
    """
    ej = e.jet(point, order + 2)
    wj = omega.jet(point, order + 1)
    theta = MixedForm(2, 1, torsion_jet(ej, wj))
    lhs = covariant_exterior_derivative(wj, theta, (1,))
    fl = jet_map(
        lambda arr: np.einsum("abmn...,bc->acmn...", arr, ETA),
        field_strength_jet(wj),
    )
    raw = jet_einsum("acmn,cr->amnr", fl, ej)
    rhs = _alt_blocks(raw, 1, 2, 1)
    return lhs - MixedForm._wrap(3, 1, rhs.truncated(lhs.order))


def _frame_interior(einv: Jet, form: MixedForm) -> Jet:
    """Contract the first spacetime slot with the frame vector fields.

    Adds a new leading lower internal axis; returns the raw jet with axes
    [new, old internals..., remaining spacetime slots...].
    """
    if form.k == 0:
        raise DegreeError("interior contraction needs spacetime degree >= 1")
    ints = "bcde"[: form.p]
    sts = "mnrs"[: form.k]
    spec = f"{sts[0]}a,{ints}{sts}->a{ints}{sts[1:]}"
    return jet_einsum(spec, einv, form.jet)


def _lowered_coframe(e_jet: Jet) -> Jet:
    return jet_map(lambda arr: np.einsum("cm...,cb->bm...", arr, ETA), e_jet)


def _interior_pairings(
    einv: Jet, theta: Jet, f: Jet, vec3: MixedForm, pair3: MixedForm
) -> Jet:
    """The two interior-product couplings shared by the derivative checks.

    Contracts torsion against an internal-vector 3-form and the field
    strength against an internal-pair 3-form, wedging the leftover 1-form
    slot in; returns the summed raw [a, mu, nu, rho, sigma] jet.
    """
    ith = _frame_interior(einv, MixedForm(2, 1, theta))
    t1 = _alt_blocks(jet_einsum("abx,bmnr->axmnr", ith, vec3.jet), 1, 1, 3)
    ifs = _frame_interior(einv, MixedForm(2, 2, f))
    t2 = _alt_blocks(jet_einsum("abcx,bcmnr->axmnr", ifs, pair3.jet), 1, 1, 3)
    return t1 + t2


def _stress_coframe_wedge(t3: MixedForm, e_jet: Jet) -> Jet:
    """Antisymmetrized wedge of an internal-vector 3-form with the lowered
    coframe, raw [a, b, mu, nu, rho, sigma] jet."""
    raw = jet_einsum("amnr,bs->abmnrs", t3.jet, _lowered_coframe(e_jet))
    wedged = _alt_blocks(raw, 2, 3, 1)
    swapped = jet_map(lambda arr: np.swapaxes(arr, 0, 1), wedged)
    return wedged - swapped


def rewritten_lhs_check(
    e: FrameSource, omega: FrameSource, point: Sequence[float], order: int = 0
) -> tuple[MixedForm, MixedForm]:
    """Derivative expansions of the two geometric equation sides.

    First residual: the twisted derivative of the curvature 3-form minus
    the interior-product pairing of torsion with the curvature 3-form and
    of the field strength with the torsion 3-form.  Second residual: the
    twisted derivative of the torsion 3-form minus half the antisymmetrized
    curvature-coframe wedge; the half enters with the sign that closes the
    identity under the torsion conventions used here (measured once, pinned
    by a test).  Both residuals are 4-forms and vanish for every frame and
    connection with coherent jets.
    """
    ej = e.jet(point, order + 2)
    wj = omega.jet(point, order + 2)
    einv = inverse_tetrad_jet(ej)
    f = field_strength_jet(wj)
    theta = torsion_jet(ej, wj)
    p3 = curvature_three_form(ej, f)
    s3 = torsion_three_form(theta, ej)
    dp = covariant_exterior_derivative(wj, p3, (-1,))
    pair = _interior_pairings(einv, theta, f, p3, s3)
    first = dp - MixedForm._wrap(4, 1, pair.truncated(dp.order))
    ds = covariant_exterior_derivative(wj, s3, (-1, -1))
    pe = _stress_coframe_wedge(p3, ej).scaled(0.5)
    second = ds - MixedForm._wrap(4, 2, pe.truncated(ds.order))
    return first, second


@dataclass(frozen=True)
class ConservationFormResiduals:
    """Form-language conservation defects of the matter sources."""

    stress: MixedForm  # internal-vector 4-form
    spin: MixedForm  # internal-pair 4-form


def conservation_form_residuals(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
    order: int = 0,
) -> ConservationFormResiduals:
    """Covariant-exterior-derivative conservation defects of the sources.

    The stress defect subtracts the interior-product couplings of torsion
    to the stress 3-form and of the field strength to the spin 3-form from
    the twisted derivative of the stress 3-form.  The spin defect subtracts
    half the antisymmetrized stress-coframe wedge from the twisted
    derivative of the spin 3-form.  Both vanish on solutions of the field
    equations; for vacuum matter they are identically zero.
    """
    _require_attached(matter, e, omega)
    ej = e.jet(point, order + 2)
    wj = omega.jet(point, order + 2)
    tf = matter.stress_form(point, order + 1, ej)
    sf = matter.spin_form(point, order + 1, ej)
    einv = inverse_tetrad_jet(ej)
    theta = torsion_jet(ej, wj)
    f = field_strength_jet(wj)
    dt = covariant_exterior_derivative(wj, tf, (-1,))
    pair = _interior_pairings(einv, theta, f, tf, sf)
    stress = dt - MixedForm._wrap(4, 1, pair.truncated(dt.order))
    ds = covariant_exterior_derivative(wj, sf, (-1, -1))
    te = _stress_coframe_wedge(tf, ej).scaled(0.5)
    spin = ds - MixedForm._wrap(4, 2, te.truncated(ds.order))
    return ConservationFormResiduals(stress=stress, spin=spin)


def spin_potential_tensor(spin_jet: Jet) -> Jet:
    """Spin source packed with its vector trace, components y[mu, nu, sigma].

    This combination is the volume dual of the spin 3-form, and its full
    covariant divergence is what the component conservation law
    differentiates.  For a traceless spin source it reduces to the negated
    source itself.
    """
    tau = jet_map(lambda arr: np.einsum("mll...->m...", arr), spin_jet)
    delta = np.eye(4)
    up = jet_map(lambda arr: np.einsum("sm,n...->mns...", delta, arr), tau)
    down = jet_map(lambda arr: np.einsum("sn,m...->mns...", delta, arr), tau)
    return (spin_jet + up - down).scaled(-1.0)


@dataclass(frozen=True)
class ConservationComponentResiduals:
    """Tensor-language conservation defects of the matter sources."""

    stress: np.ndarray  # [nu], free index raised
    spin: np.ndarray  # [mu, nu]


def conservation_component_residuals(
    e: FrameSource,
    omega: FrameSource,
    matter: MatterModel,
    point: Sequence[float],
) -> ConservationComponentResiduals:
    """Conservation defects built from the full coordinate connection.

    Stress law: divergence of the mixed stress tensor on its second slot,
    plus the torsion-trace coupling, minus the torsion-stress coupling,
    minus the curvature coupling to the spin potential; reported with the
    free index raised.  Spin law: divergence of the spin potential plus its
    torsion-trace coupling plus the antisymmetric part of the stress
    tensor.  Both vanish on solutions and agree with the volume duals of
    ``conservation_form_residuals`` even off solutions; index placements
    are spelled out in docs/conventions.md.
    """
    _require_attached(matter, e, omega)
    ej = e.jet(point, 2)
    wj = omega.jet(point, 2)
    gin = jet_matrix_inverse(metric_jet(ej))
    gamma = christoffel_jet(ej, wj).value
    q = torsion_q_jet(ej, wj).value
    trg = np.einsum("ssl->l", gamma)
    qtr = np.einsum("sll->s", q)

    tj = matter.stress_jet(point, 1)
    tmix = jet_einsum("mr,rs->ms", tj, gin)
    div_t = (
        np.einsum("mss->m", tmix.data[1])
        + np.einsum("l,ml->m", trg, tmix.value)
        - np.einsum("lsm,ls->m", gamma, tmix.value)
    )
    yj = spin_potential_tensor(matter.spin_jet(point, 1))
    riem = riemann_jet(ej, wj).value
    curv = np.einsum("msxa,xb,abs->m", riem, gin.value, yj.value)
    stress_low = (
        div_t
        + np.einsum("s,ms->m", qtr, tmix.value)
        - np.einsum("msr,rs->m", q, tmix.value)
        - curv
    )
    div_y = (
        np.einsum("mnss->mn", yj.data[1])
        + np.einsum("l,mnl->mn", trg, yj.value)
        - np.einsum("lsm,lns->mn", gamma, yj.value)
        - np.einsum("lsn,mls->mn", gamma, yj.value)
    )
    spin_law = (
        div_y
        + np.einsum("s,mns->mn", qtr, yj.value)
        + 0.5 * (tj.value - tj.value.T)
    )
    return ConservationComponentResiduals(
        stress=gin.value @ stress_low, spin=spin_law
    )


def metric_compatibility_residual(
    e: FrameSource, omega: FrameSource, point: Sequence[float]
) -> np.ndarray:
    """Full-connection covariant derivative of the metric, [sigma, mu, nu].

    Zero for every frame paired with an antisymmetric connection; breaking
    either the frame metric or the connection's antisymmetry shows up here
    first.
    """
    ej = e.jet(point, 1)
    wj = omega.jet(point, 1)
    g = metric_jet(ej)
    gamma = christoffel_jet(ej, wj).value
    dg = np.transpose(g.data[1], (2, 0, 1))
    corr = np.einsum("lsm,ln->smn", gamma, g.value) + np.einsum(
        "lsn,ml->smn", gamma, g.value
    )
    return dg - corr


def commutator_residual(omega_jet: Jet, vector_jet: Jet) -> Jet:
    """Frame-derivative commutator minus the field-strength action.

    ``vector_jet`` holds an internal vector field v[a]; the result has
    components [mu, nu] trailing the internal axis, [a, mu, nu].  Zero to
    rounding whenever both jets are coherent.
    """
    once = covariant_D(omega_jet, vector_jet, (+1,))
    twice = covariant_D(omega_jet, once, (+1,))
    anti = twice - jet_map(lambda arr: np.swapaxes(arr, 1, 2), twice)
    fmat = jet_map(
        lambda arr: np.einsum("abmn...,bc->acmn...", arr, ETA),
        field_strength_jet(omega_jet),
    )
    action = jet_einsum("acmn,c->amn", fmat, vector_jet)
    return anti - action.truncated(anti.order)


def curvature_wedge_action(
    f_jet: Jet, alpha: MixedForm, variances: tuple[int, ...]
) -> MixedForm:
    """Field-strength wedge acting on each internal slot, signed by variance.

    This is the right side of the squared-derivative law: applying the
    twisted derivative twice multiplies by the field strength instead of
    vanishing.  Upper slots couple positively, lower slots negatively.
    """
    if len(variances) != alpha.p:
        raise DegreeError(
            f"{len(variances)} variances for internal rank {alpha.p}"
        )
    if alpha.p == 0:
        return MixedForm.zero(alpha.k + 2, 0, order=max(alpha.order - 2, 0))
    fmat = jet_map(
        lambda arr: np.einsum("abuv...,bc->acuv...", arr, ETA), f_jet
    )
    ints = "abcd"[: alpha.p]
    sts = "mnrs"[: alpha.k]
    total = None
    for slot, variance in enumerate(variances):
        xi_in = ints[:slot] + "q" + ints[slot + 1 :]
        xi_out = ints[:slot] + "p" + ints[slot + 1 :]
        wspec = "pquv" if variance > 0 else "qpuv"
        term = jet_einsum(
            f"{wspec},{xi_in}{sts}->{xi_out}uv{sts}", fmat, alpha.jet
        )
        signed = term if variance > 0 else term.scaled(-1.0)
        total = signed if total is None else total + signed
    wedged = _alt_blocks(total, alpha.p, 2, alpha.k)
    return MixedForm._wrap(alpha.k + 2, alpha.p, wedged)


def d_squared_residual(
    omega_jet: Jet, alpha: MixedForm, variances: tuple[int, ...]
) -> MixedForm:
    """Twice-applied twisted derivative minus the field-strength action.

    Zero to rounding for coherent jets; for a field strength that
    identically vanishes the twice-applied derivative is zero on its own.
    ``alpha`` needs jets of order at least 2 and the connection order at
    least 1.
    """
    once = covariant_exterior_derivative(omega_jet, alpha, variances)
    twice = covariant_exterior_derivative(omega_jet, once, variances)
    action = curvature_wedge_action(
        field_strength_jet(omega_jet), alpha, variances
    )
    return twice - action.truncated(twice.order)
