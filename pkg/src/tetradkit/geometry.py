"""Frame fields and the quantities a point inherits from them.

Field objects hold expressions over a chart and evaluate to jets at a
point; everything downstream (metric, Christoffel symbols, field strength,
curvature tensors, torsion) is a pure function of those jets.  Index
conventions, fixed here once:

* tetrad components e[a, mu] with the internal (frame) index first;
* inverse tetrad components einv[mu, a];
* connection components omega[a, b, mu], antisymmetric in (a, b), both
  internal indices up;
* Christoffel symbols gamma[sigma, mu, nu] with mu the derivative
  direction, so covariant derivatives read
  del_mu X^sigma = d_mu X^sigma + gamma[sigma, mu, nu] X^nu;
* curvature F[a, b, mu, nu] and Riemann riemann[mu, nu, om, sig] with the
  frame-valued pair mapped through the tetrad, Ricci ricci[mu, om]
  contracting the second and fourth Riemann slots (not symmetric when
  torsion is present);
* torsion form theta[a, mu, nu] and tensor q[mu, nu, sigma], each
  antisymmetric in (mu, nu).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .exprkit import Chart, Expression, eval_jet_grid, parse_expression
from .forms import ETA, covariant_D
from .jets import (
    DIM,
    MAX_ORDER,
    _DLAB,
    Jet,
    JetDomainError,
    _dist_perms,
    jet_einsum,
    jet_map,
    jet_matrix_inverse,
    jet_partial,
    jet_transpose,
)

PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class GeometryError(ValueError):
    """Inconsistent frame data or an operation outside its domain."""


class SingularTetradError(GeometryError):
    """Tetrad determinant too small to invert."""


class LorentzError(GeometryError):
    """A frame-rotation field failed the metric-preservation check."""


class FrameSource(Protocol):
    """Anything that evaluates frame components to a jet at a point."""

    def jet(self, point: Sequence[float], order: int) -> Jet: ...


def _parse_grid(texts, chart: Chart, params) -> list:
    return [[parse_expression(t, chart, params) for t in row] for row in texts]


class TetradField:
    """Coframe e^a = e[a, mu] dx^mu given as a 4x4 grid of expressions."""

    def __init__(self, texts: Sequence[Sequence[str]], chart: Chart, params: Mapping[str, float] | None = None):
        if len(texts) != DIM or any(len(row) != DIM for row in texts):
            raise GeometryError("tetrad needs a 4x4 grid of component expressions")
        self.chart = chart
        self.exprs = _parse_grid(texts, chart, params)

    def jet(self, point: Sequence[float], order: int) -> Jet:
        return eval_jet_grid(self.exprs, point, order)


class _PairField:
    """Internal-pair-indexed one-form components, stored only for a < b."""

    def __init__(self, entries: Mapping[str, Sequence[str]], chart: Chart, params: Mapping[str, float] | None = None):
        self.chart = chart
        self.exprs = {}
        for key, comps in entries.items():
            pair = self._parse_key(key)
            if len(comps) != DIM:
                raise GeometryError(f"entry {key!r} needs {DIM} component expressions")
            self.exprs[pair] = [parse_expression(t, chart, params) for t in comps]

    @staticmethod
    def _parse_key(key) -> tuple[int, int]:
        if isinstance(key, str):
            if len(key) != 2 or not key.isdigit():
                raise GeometryError(f"bad internal-pair key {key!r}; use two digits like '01'")
            pair = (int(key[0]), int(key[1]))
        else:
            pair = (int(key[0]), int(key[1]))
        a, b = pair
        if not (0 <= a < DIM and 0 <= b < DIM) or a >= b:
            raise GeometryError(
                f"internal pair {pair} must satisfy 0 <= a < b <= {DIM - 1}; "
                "the (b, a) component is fixed by antisymmetry"
            )
        return pair

    def jet(self, point: Sequence[float], order: int) -> Jet:
        out = Jet.zeros((DIM, DIM, DIM), order)
        for (a, b), comps in self.exprs.items():
            row = eval_jet_grid(comps, point, order)
            for k in range(order + 1):
                out.data[k][a, b] = row.data[k]
                out.data[k][b, a] = -row.data[k]
        return out


class SpinConnectionField(_PairField):
    """Connection one-form omega[a, b, mu], antisymmetric internal pair."""


class ContorsionField(_PairField):
    """Difference of two frame connections; same symmetry as the connection."""


class ConstantConnection:
    """Connection-shaped source with constant components (zero derivatives)."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, float)
        if values.shape != (DIM, DIM, DIM):
            raise GeometryError(f"expected components [a, b, mu], got shape {values.shape}")
        if np.max(np.abs(values + values.transpose(1, 0, 2))) > 1e-12 * max(1.0, np.max(np.abs(values))):
            raise GeometryError("connection components must be antisymmetric in the internal pair")
        self.values = values

    def jet(self, point: Sequence[float], order: int) -> Jet:
        return Jet.constant(self.values, order)


class ZeroConnection:
    """The flat frame connection."""

    def jet(self, point: Sequence[float], order: int) -> Jet:
        return Jet.zeros((DIM, DIM, DIM), order)


# -- jet-level pipeline ----------------------------------------------------


def metric_jet(e: Jet) -> Jet:
    el = jet_map(lambda arr: np.einsum("am...,ab->bm...", arr, ETA), e)
    return jet_einsum("am,an->mn", el, e)


def inverse_tetrad_jet(e: Jet, threshold: float = 1e-10) -> Jet:
    det = np.linalg.det(e.value)
    if abs(det) < threshold:
        raise SingularTetradError(f"tetrad determinant {det:.3e} below threshold {threshold:.1e}")
    try:
        return jet_matrix_inverse(e)
    except JetDomainError as exc:
        raise SingularTetradError(str(exc)) from exc


def tetrad_covariant_jet(e: Jet, omega: Jet) -> Jet:
    """Frame-covariant derivative of the coframe, components [a, mu, nu]."""
    return covariant_D(omega, e, (+1,))


def christoffel_jet(e: Jet, omega: Jet, einv: Jet | None = None) -> Jet:
    if einv is None:
        einv = inverse_tetrad_jet(e)
    return jet_einsum("sa,amn->smn", einv, tetrad_covariant_jet(e, omega))


def field_strength_jet(omega: Jet) -> Jet:
    dw = jet_transpose(jet_partial(omega), (0, 1, 3, 2))  # [a, b, mu, nu] = d_mu omega_nu
    lin = dw - jet_transpose(dw, (0, 1, 3, 2))
    wmat = jet_map(lambda arr: np.einsum("adm...,de->aem...", arr, ETA), omega)
    quad = jet_einsum("aem,ebn->abmn", wmat, omega)
    quad = quad - jet_transpose(quad, (0, 1, 3, 2))
    return lin + quad


def torsion_jet(e: Jet, omega: Jet) -> Jet:
    de = tetrad_covariant_jet(e, omega)
    return de - jet_transpose(de, (0, 2, 1))


def torsion_tensor_jet(theta: Jet, einv: Jet) -> Jet:
    return jet_einsum("sa,amn->mns", einv, theta)


# -- field-level operations ------------------------------------------------


@dataclass(frozen=True)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    det_e: float


@dataclass(frozen=True)
class CurvatureData:
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    einstein: np.ndarray


@dataclass(frozen=True)
class TorsionData:
    theta: np.ndarray
    q: np.ndarray


def metric_from_tetrad(e: FrameSource, point, threshold: float = 1e-10) -> MetricData:
    ej = e.jet(point, 0)
    det = float(np.linalg.det(ej.value))
    if abs(det) < threshold:
        raise SingularTetradError(f"tetrad determinant {det:.3e} below threshold {threshold:.1e}")
    g = metric_jet(ej).value
    return MetricData(g=g, g_inv=np.linalg.inv(g), det_e=det)


def inverse_tetrad(e: FrameSource, point, threshold: float = 1e-10) -> np.ndarray:
    return inverse_tetrad_jet(e.jet(point, 0), threshold).value


def christoffel(e: FrameSource, omega: FrameSource, point) -> np.ndarray:
    ej = e.jet(point, 1)
    return christoffel_jet(ej, omega.jet(point, 0)).value


def curvature_field_strength(omega: FrameSource, point) -> np.ndarray:
    return field_strength_jet(omega.jet(point, 1)).value


def curvature_tensors(e: FrameSource, omega: FrameSource, point) -> CurvatureData:
    ej = e.jet(point, 0)
    f = field_strength_jet(omega.jet(point, 1)).value
    einv = inverse_tetrad_jet(ej).value
    return _curvature_from_values(ej.value, einv, metric_jet(ej).value, f)


def _curvature_from_values(e, einv, g, f) -> CurvatureData:
    riemann = np.einsum("sa,abmn,bc,cw->mnws", einv, f, ETA, e)
    ricci = np.einsum("msws->mw", riemann)
    scalar = -float(np.einsum("ma,wb,abmw->", einv, einv, f))
    check = float(np.einsum("mw,mw->", np.linalg.inv(g), ricci))
    if abs(scalar - check) > 1e-10 * max(1.0, abs(scalar)):
        raise GeometryError(
            f"curvature scalar routes disagree: {scalar!r} vs {check!r}"
        )
    einstein = ricci - 0.5 * g * scalar
    return CurvatureData(riemann=riemann, ricci=ricci, scalar=scalar, einstein=einstein)


def torsion(e: FrameSource, omega: FrameSource, point) -> TorsionData:
    ej = e.jet(point, 1)
    theta = torsion_jet(ej, omega.jet(point, 0))
    q = torsion_tensor_jet(theta, inverse_tetrad_jet(ej))
    return TorsionData(theta=theta.value, q=q.value)


# -- Levi-Civita solve -----------------------------------------------------

_ROWS = [(a, mn) for a in range(DIM) for mn in PAIRS]


def _torsion_matrix(e_arr: np.ndarray) -> np.ndarray:
    """Coefficients of the torsion equations in the connection unknowns.

    ``e_arr`` is a tetrad component array [a, nu, extra...]; the result has
    shape (24, 24, extra...) mapping unknowns w[(p, q), rho] (pairs p < q)
    to equations indexed by (a, mu < nu).
    """
    le = np.einsum("cn...,cb->bn...", e_arr, ETA)  # eta_{bc} e^c_nu
    extra = e_arr.shape[2:]
    mat = np.zeros((24, 24) + extra)
    for i, (a, (mu, nu)) in enumerate(_ROWS):
        for j, (p, q) in enumerate(PAIRS):
            for rho in range(DIM):
                col = 4 * j + rho
                acc = 0.0
                if rho == mu:
                    if a == p:
                        acc = acc + le[q, nu]
                    if a == q:
                        acc = acc - le[p, nu]
                if rho == nu:
                    if a == p:
                        acc = acc - le[q, mu]
                    if a == q:
                        acc = acc + le[p, mu]
                mat[i, col] = acc
    return mat


def _torsion_rhs(de_arr: np.ndarray) -> np.ndarray:
    """Antisymmetrized coordinate-derivative part, rows matching _ROWS.

    ``de_arr`` holds [a, mu, nu, extra...] = d_mu e^a_nu data, derivative
    direction in the middle slot.
    """
    extra = de_arr.shape[3:]
    out = np.zeros((24,) + extra)
    for i, (a, (mu, nu)) in enumerate(_ROWS):
        out[i] = de_arr[a, mu, nu] - de_arr[a, nu, mu]
    return out


def _expand_pairs(w: np.ndarray) -> np.ndarray:
    """Unfold flat pair-major unknowns (24, extra) to [a, b, mu, extra]."""
    extra = w.shape[1:]
    out = np.zeros((DIM, DIM, DIM) + extra)
    for j, (p, q) in enumerate(PAIRS):
        block = w[4 * j : 4 * j + 4]
        out[p, q] = block
        out[q, p] = -block
    return out


class LeviCivitaConnection:
    """Torsion-free frame connection of a tetrad, as a jet evaluator.

    Solves the 24 linear torsion-vanishing equations for the 24 independent
    connection components at the point, order by order in the derivative
    data, so the connection's own derivatives stay exact.
    """

    def __init__(self, e: FrameSource):
        self.e = e

    def jet(self, point: Sequence[float], order: int) -> Jet:
        if order >= MAX_ORDER:
            raise GeometryError(
                f"connection jets stop at order {MAX_ORDER - 1}; "
                f"the solve needs tetrad data one order higher"
            )
        ej = self.e.jet(point, order + 1)
        det = np.linalg.det(ej.value)
        if abs(det) < 1e-10:
            raise SingularTetradError(f"tetrad determinant {det:.3e} below threshold 1e-10")
        mats = [_torsion_matrix(ej.data[k]) for k in range(order + 1)]
        rhs0 = [
            _torsion_rhs(np.moveaxis(ej.data[k + 1], 2, 1)) for k in range(order + 1)
        ]
        try:
            lu = np.linalg.inv(mats[0])
        except np.linalg.LinAlgError as exc:
            raise SingularTetradError(f"torsion system singular: {exc}") from exc
        sols = []
        for k in range(order + 1):
            rhs = rhs0[k].copy()
            for i in range(1, k + 1):
                d1, d2 = _DLAB[:i], _DLAB[i:k]
                prod = np.einsum(f"rc{d1},c{d2}->r{d1}{d2}", mats[i], sols[k - i])
                # distribute the k derivative slots over the two factors
                for perm in _dist_perms(k, i):
                    axes = [0] + [1 + s for s in perm]
                    rhs += prod if axes == list(range(1 + k)) else np.transpose(prod, axes)
            w = -np.einsum("rc,c...->r...", lu, rhs)
            sols.append(w)
        return Jet(order, [_expand_pairs(w) for w in sols])


def levi_civita_connection(e: FrameSource) -> LeviCivitaConnection:
    return LeviCivitaConnection(e)


class SummedConnection:
    """Pointwise sum of a base connection and a contorsion source."""

    def __init__(self, base: FrameSource, extra: FrameSource):
        self.base = base
        self.extra = extra

    def jet(self, point: Sequence[float], order: int) -> Jet:
        return self.base.jet(point, order) + self.extra.jet(point, order)


def apply_contorsion(base: FrameSource, contorsion: FrameSource) -> SummedConnection:
    return SummedConnection(base, contorsion)


# -- local frame rotations -------------------------------------------------


class LorentzField:
    """Pointwise internal-frame rotation Lambda[a, b] from expressions.

    Every evaluation checks that the value preserves the internal metric
    (Lambda^T eta Lambda = eta to 1e-10) and fails loudly otherwise.
    """

    def __init__(self, texts: Sequence[Sequence[str]], chart: Chart, params: Mapping[str, float] | None = None):
        if len(texts) != DIM or any(len(row) != DIM for row in texts):
            raise GeometryError("frame rotation needs a 4x4 grid of component expressions")
        self.chart = chart
        self.exprs = _parse_grid(texts, chart, params)

    def jet(self, point: Sequence[float], order: int) -> Jet:
        lam = eval_jet_grid(self.exprs, point, order)
        defect = lam.value.T @ ETA @ lam.value - ETA
        if np.max(np.abs(defect)) > 1e-10:
            raise LorentzError(
                f"frame rotation at {tuple(point)} distorts the internal metric "
                f"by {np.max(np.abs(defect)):.3e}"
            )
        return lam


class TransformedTetrad:
    """Tetrad seen from a rotated frame: e'[a, mu] = Lambda[a, b] e[b, mu]."""

    def __init__(self, e: FrameSource, lam: FrameSource):
        self.e = e
        self.lam = lam

    def jet(self, point: Sequence[float], order: int) -> Jet:
        return jet_einsum("ab,bm->am", self.lam.jet(point, order), self.e.jet(point, order))


class TransformedConnection:
    """Gauge-transformed connection with the inhomogeneous derivative term.

    In matrix form W^a_b = omega^{ac} eta_{cb} the rule is
    W' = Lambda W Lambda^{-1} - dLambda Lambda^{-1}; the result is converted
    back to both-indices-up components and antisymmetrized, after checking
    that the asymmetry introduced by roundoff stays small.
    """

    def __init__(self, omega: FrameSource, lam: FrameSource):
        self.omega = omega
        self.lam = lam

    def jet(self, point: Sequence[float], order: int) -> Jet:
        if order >= MAX_ORDER:
            raise GeometryError(
                f"transformed connection jets stop at order {MAX_ORDER - 1}; "
                "the derivative term needs rotation data one order higher"
            )
        lam = self.lam.jet(point, order + 1)
        lam_inv = jet_matrix_inverse(lam)
        w = self.omega.jet(point, order)
        wmat = jet_map(lambda arr: np.einsum("acm...,cb->abm...", arr, ETA), w)
        conj = jet_einsum("acm,cb->abm", jet_einsum("ac,cbm->abm", lam, wmat), lam_inv)
        dlam = jet_partial(lam)  # [a, b, mu]
        inhom = jet_einsum("abm,bc->acm", dlam, lam_inv)
        wprime = jet_map(
            lambda arr: np.einsum("abm...,bc->acm...", arr, ETA), conj - inhom
        )  # eta^{cb} = eta
        skew = wprime.value + wprime.value.transpose(1, 0, 2)
        if np.max(np.abs(skew)) > 1e-8 * max(1.0, np.max(np.abs(wprime.value))):
            raise LorentzError("transformed connection lost internal antisymmetry")
        return Jet(
            wprime.order,
            [0.5 * (d - d.transpose((1, 0) + tuple(range(2, d.ndim)))) for d in wprime.data],
        )


def lorentz_transform(
    e: FrameSource, omega: FrameSource, lam: FrameSource
) -> tuple[TransformedTetrad, TransformedConnection]:
    return TransformedTetrad(e, lam), TransformedConnection(omega, lam)


# -- assembled point data --------------------------------------------------


@dataclass(frozen=True)
class PointGeometry:
    """Everything the pipeline produces from (e, omega) at one point."""

    point: tuple[float, ...]
    e_jet: Jet
    omega_jet: Jet
    einv_jet: Jet
    g: np.ndarray
    g_inv: np.ndarray
    det_e: float
    einv: np.ndarray
    gamma: np.ndarray
    f: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    einstein: np.ndarray
    theta: np.ndarray
    q: np.ndarray


def point_geometry(e: FrameSource, omega: FrameSource, point, order: int = 2) -> PointGeometry:
    """Evaluate the full local pipeline at one point.

    ``order`` sets the jet depth kept for e and omega (at least 1); the
    numeric tensors come from the same jets, so a single evaluation serves
    both the values and any derivative-hungry consumer.
    """
    if order < 1:
        raise GeometryError("point geometry needs jets of order >= 1")
    ej = e.jet(point, order)
    wj = omega.jet(point, order)
    det = float(np.linalg.det(ej.value))
    if abs(det) < 1e-10:
        raise SingularTetradError(f"tetrad determinant {det:.3e} below threshold 1e-10")
    scale = max(1.0, float(np.max(np.abs(wj.value))))
    if np.max(np.abs(wj.value + wj.value.transpose(1, 0, 2))) > 1e-12 * scale:
        raise GeometryError("connection components must be antisymmetric in the internal pair")
    einv_j = inverse_tetrad_jet(ej)
    g = metric_jet(ej).value
    g_inv = np.linalg.inv(g)
    if np.max(np.abs(g @ g_inv - np.eye(DIM))) > 1e-12 * max(1.0, np.max(np.abs(g))):
        raise GeometryError("metric inverse check failed")
    gamma = christoffel_jet(ej, wj, einv_j).value
    f = field_strength_jet(wj).value
    curv = _curvature_from_values(ej.value, einv_j.value, g, f)
    theta = torsion_jet(ej, wj)
    q = torsion_tensor_jet(theta, einv_j).value
    gamma_skew = gamma - gamma.transpose(0, 2, 1)
    if np.max(np.abs(gamma_skew.transpose(1, 2, 0) - q)) > 1e-12 * max(1.0, np.max(np.abs(gamma))):
        raise GeometryError("torsion tensor disagrees with the Christoffel antisymmetry")
    return PointGeometry(
        point=tuple(float(c) for c in point),
        e_jet=ej,
        omega_jet=wj,
        einv_jet=einv_j,
        g=g,
        g_inv=g_inv,
        det_e=det,
        einv=einv_j.value,
        gamma=gamma,
        f=f,
        riemann=curv.riemann,
        ricci=curv.ricci,
        scalar=curv.scalar,
        einstein=curv.einstein,
        theta=theta.value,
        q=q,
    )
