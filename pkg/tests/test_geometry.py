"""Frame-field pipeline: metric, connection solve, curvature, torsion."""

import numpy as np
import numpy.testing as npt
import pytest

from helpers import UNIT_CHART, random_polynomial_text
from tetradkit.exprkit import Chart, eval_jet_grid, parse_expression
from tetradkit.forms import ETA, covariant_D
from tetradkit.geometry import (
    ConstantConnection,
    ContorsionField,
    GeometryError,
    LorentzError,
    LorentzField,
    SingularTetradError,
    SpinConnectionField,
    TetradField,
    ZeroConnection,
    apply_contorsion,
    christoffel,
    christoffel_jet,
    curvature_field_strength,
    curvature_tensors,
    field_strength_jet,
    inverse_tetrad,
    inverse_tetrad_jet,
    levi_civita_connection,
    lorentz_transform,
    metric_from_tetrad,
    metric_jet,
    point_geometry,
    torsion,
    torsion_jet,
)
from tetradkit.jets import Jet, jet_einsum, jet_partial

POLAR = Chart(("r", "th", "z", "t"), ((0.5, 4.0), (0.1, 3.0), (-1.0, 1.0), (-1.0, 1.0)))
SCHW = Chart(("r", "th", "ph", "t"), ((2.5, 12.0), (0.3, 2.8), (0.0, 6.28), (-1.0, 1.0)))
FLRW = Chart(("x", "y", "z", "t"), ((-1.0, 1.0),) * 4)


def identity_tetrad(chart=UNIT_CHART):
    return TetradField(
        [["1" if a == m else "0" for m in range(4)] for a in range(4)], chart
    )


def polar_tetrad():
    # flat space in cylindrical coordinates: frame rows dz, dr, r dth, dt
    return TetradField(
        [
            ["0", "0", "1", "0"],
            ["1", "0", "0", "0"],
            ["0", "r", "0", "0"],
            ["0", "0", "0", "1"],
        ],
        POLAR,
    )


def schwarzschild_tetrad(mass=1.0):
    return TetradField(
        [
            ["1/sqrt(1 - 2*M/r)", "0", "0", "0"],
            ["0", "r", "0", "0"],
            ["0", "0", "r*sin(th)", "0"],
            ["0", "0", "0", "sqrt(1 - 2*M/r)"],
        ],
        SCHW,
        params={"M": mass},
    )


def exponential_scale_tetrad(hubble=0.3):
    a = "exp(H*t)"
    return TetradField(
        [
            [a, "0", "0", "0"],
            ["0", a, "0", "0"],
            ["0", "0", a, "0"],
            ["0", "0", "0", "1"],
        ],
        FLRW,
        params={"H": hubble},
    )


def random_tetrad(rng, scale=0.12):
    texts = []
    for a in range(4):
        row = []
        for m in range(4):
            base = "1" if a == m else "0"
            row.append(f"{base} + {random_polynomial_text(rng, UNIT_CHART, scale=scale)}")
        texts.append(row)
    return TetradField(texts, UNIT_CHART)


def random_connection(rng, scale=0.3):
    entries = {}
    for key in ("01", "02", "03", "12", "13", "23"):
        entries[key] = [random_polynomial_text(rng, UNIT_CHART, scale=scale) for _ in range(4)]
    return SpinConnectionField(entries, UNIT_CHART)


class TestMetric:
    def test_identity_tetrad_gives_internal_metric(self):
        data = metric_from_tetrad(identity_tetrad(), (0.1, 0.2, 0.3, 0.4))
        npt.assert_allclose(data.g, ETA, atol=1e-15)
        assert data.det_e == pytest.approx(1.0)

    def test_schwarzschild_values(self):
        data = metric_from_tetrad(schwarzschild_tetrad(), (4.0, np.pi / 3, 1.0, 0.2))
        npt.assert_allclose(
            np.diag(data.g), [2.0, 16.0, 12.0, -0.5], atol=1e-12,
            err_msg="diagonal metric entries at r=4, th=pi/3, M=1",
        )
        off = data.g - np.diag(np.diag(data.g))
        npt.assert_allclose(off, 0.0, atol=1e-14)

    def test_inverse_is_exact(self):
        rng = np.random.default_rng(101)
        e = random_tetrad(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        data = metric_from_tetrad(e, x)
        npt.assert_allclose(data.g @ data.g_inv, np.eye(4), atol=1e-12)

    def test_zero_row_is_singular(self):
        texts = [["1", "0", "0", "0"], ["0", "0", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "1"]]
        e = TetradField(texts, UNIT_CHART)
        with pytest.raises(SingularTetradError):
            metric_from_tetrad(e, (0.0, 0.0, 0.0, 0.0))

    def test_det_sign_preserved(self):
        texts = [["-2", "0", "0", "0"], ["0", "1", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "1"]]
        data = metric_from_tetrad(TetradField(texts, UNIT_CHART), (0.0,) * 4)
        assert data.det_e == pytest.approx(-2.0)


class TestInverseTetrad:
    def test_identity(self):
        npt.assert_allclose(inverse_tetrad(identity_tetrad(), (0.0,) * 4), np.eye(4), atol=1e-15)

    def test_diagonal(self):
        texts = [["2", "0", "0", "0"], ["0", "4", "0", "0"], ["0", "0", "0.5", "0"], ["0", "0", "0", "1"]]
        out = inverse_tetrad(TetradField(texts, UNIT_CHART), (0.0,) * 4)
        npt.assert_allclose(out, np.diag([0.5, 0.25, 2.0, 1.0]), atol=1e-14)

    def test_both_contractions(self):
        rng = np.random.default_rng(102)
        e = random_tetrad(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        ej = e.jet(x, 0)
        einv = inverse_tetrad(e, x)
        npt.assert_allclose(np.einsum("am,mb->ab", ej.value, einv), np.eye(4), atol=1e-12)
        npt.assert_allclose(np.einsum("ma,an->mn", einv, ej.value), np.eye(4), atol=1e-12)


class TestCovariantD:
    def test_flat_connection_reduces_to_partial(self):
        rng = np.random.default_rng(103)
        x = rng.uniform(-0.5, 0.5, 4)
        exprs = [parse_expression(random_polynomial_text(rng, UNIT_CHART), UNIT_CHART) for _ in range(4)]
        alpha = eval_jet_grid(exprs, x, 2)
        omega = Jet.zeros((4, 4, 4), 2)
        out = covariant_D(omega, alpha, (+1,))
        npt.assert_allclose(out.value, alpha.data[1], atol=1e-15)

    def test_internal_metric_parallel(self):
        rng = np.random.default_rng(104)
        arr = rng.uniform(-1, 1, (4, 4, 4))
        omega = Jet.constant(arr - arr.transpose(1, 0, 2), 1)
        eta_jet = Jet.constant(ETA, 1)
        out = covariant_D(omega, eta_jet, (-1, -1))
        npt.assert_allclose(out.value, 0.0, atol=1e-14)

    def test_constant_data_hand_contraction(self):
        rng = np.random.default_rng(105)
        arr = rng.uniform(-1, 1, (4, 4, 4))
        w = arr - arr.transpose(1, 0, 2)
        alpha = rng.uniform(-1, 1, 4)
        out = covariant_D(Jet.constant(w, 1), Jet.constant(alpha, 1), (+1,))
        expect = np.einsum("acm,cb,b->am", w, ETA, alpha)
        npt.assert_allclose(out.value, expect, atol=1e-14)


class TestChristoffel:
    def test_flat_identity_vanishes(self):
        out = christoffel(identity_tetrad(), ZeroConnection(), (0.1, 0.2, 0.3, 0.4))
        npt.assert_allclose(out, 0.0, atol=1e-15)

    def test_flat_polar_values(self):
        e = polar_tetrad()
        lc = levi_civita_connection(e)
        x = (1.7, 0.8, 0.3, 0.2)
        gamma = christoffel(e, lc, x)
        assert gamma[0, 1, 1] == pytest.approx(-1.7, abs=1e-12)
        assert gamma[1, 0, 1] == pytest.approx(1.0 / 1.7, abs=1e-12)
        assert gamma[1, 1, 0] == pytest.approx(1.0 / 1.7, abs=1e-12)
        mask = np.ones((4, 4, 4), bool)
        mask[0, 1, 1] = mask[1, 0, 1] = mask[1, 1, 0] = False
        npt.assert_allclose(gamma[mask], 0.0, atol=1e-12)

    def test_metric_compatibility(self):
        rng = np.random.default_rng(106)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        ej = e.jet(x, 1)
        gamma = christoffel_jet(ej, omega.jet(x, 1)).value
        dg = jet_partial(metric_jet(ej)).value  # [m, n, s]
        grad = (
            np.einsum("mns->smn", dg)
            - np.einsum("rsm,rn->smn", gamma, metric_jet(ej).value)
            - np.einsum("rsn,mr->smn", gamma, metric_jet(ej).value)
        )
        scale = max(1.0, np.max(np.abs(gamma)))
        npt.assert_allclose(grad, 0.0, atol=1e-10 * scale,
                            err_msg="connection fails to preserve the metric")

    def test_antisymmetric_part_matches_torsion(self):
        rng = np.random.default_rng(107)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        gamma = christoffel(e, omega, x)
        q = torsion(e, omega, x).q
        npt.assert_allclose(
            (gamma - gamma.transpose(0, 2, 1)).transpose(1, 2, 0), q, atol=1e-12
        )


class TestFieldStrength:
    def test_single_constant_generator_is_flat(self):
        w = np.zeros((4, 4, 4))
        w[0, 1, 0], w[1, 0, 0] = 1.3, -1.3
        out = curvature_field_strength(ConstantConnection(w), (0.0,) * 4)
        npt.assert_allclose(out, 0.0, atol=1e-14)

    def test_coordinate_dependent_single_pair(self):
        entries = {"01": ["0", "0", "0", "sin(x0)"]}
        omega = SpinConnectionField(entries, UNIT_CHART)
        x = (0.4, 0.0, 0.0, 0.0)
        out = curvature_field_strength(omega, x)
        expect = np.zeros((4, 4, 4, 4))
        c = np.cos(0.4)
        expect[0, 1, 0, 3], expect[0, 1, 3, 0] = c, -c
        expect[1, 0, 0, 3], expect[1, 0, 3, 0] = -c, c
        npt.assert_allclose(out, expect, atol=1e-14)

    def test_constant_blocks_leave_commutator(self):
        rng = np.random.default_rng(108)
        arr = rng.uniform(-1, 1, (4, 4, 4))
        w = arr - arr.transpose(1, 0, 2)
        out = curvature_field_strength(ConstantConnection(w), (0.0,) * 4)
        comm = np.einsum("adm,de,ebn->abmn", w, ETA, w)
        expect = comm - comm.transpose(0, 1, 3, 2)
        npt.assert_allclose(out, expect, atol=1e-13)

    def test_antisymmetries_exact(self):
        rng = np.random.default_rng(109)
        omega = random_connection(rng)
        out = curvature_field_strength(omega, rng.uniform(-0.5, 0.5, 4))
        npt.assert_allclose(out + out.transpose(1, 0, 2, 3), 0.0, atol=1e-14)
        npt.assert_allclose(out + out.transpose(0, 1, 3, 2), 0.0, atol=1e-14)


class TestTorsion:
    def test_levi_civita_torsion_free(self):
        for e in (polar_tetrad(), schwarzschild_tetrad()):
            lc = levi_civita_connection(e)
            rng = np.random.default_rng(110)
            for _ in range(5):
                x = [rng.uniform(lo + 0.1, hi - 0.1) for lo, hi in e.chart.bounds]
                out = torsion(e, lc, x)
                npt.assert_allclose(out.theta, 0.0, atol=1e-12)

    def test_constant_connection_brute_force(self):
        c = 0.7
        w = np.zeros((4, 4, 4))
        w[0, 1, 2], w[1, 0, 2] = c, -c
        e = identity_tetrad()
        x = (0.0,) * 4
        out = torsion(e, ConstantConnection(w), x)
        expect = np.einsum("abm,bc,cn->amn", w, ETA, np.eye(4))
        expect = expect - expect.transpose(0, 2, 1)
        npt.assert_allclose(out.theta, expect, atol=1e-14)
        npt.assert_allclose(out.q, np.einsum("sa,amn->mns", np.eye(4), expect), atol=1e-14)

    def test_antisymmetry_exact(self):
        rng = np.random.default_rng(111)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        out = torsion(e, omega, rng.uniform(-0.5, 0.5, 4))
        npt.assert_allclose(out.theta + out.theta.transpose(0, 2, 1), 0.0, atol=1e-16)
        npt.assert_allclose(out.q + out.q.transpose(1, 0, 2), 0.0, atol=1e-16)


class TestLeviCivita:
    def test_identity_tetrad_gives_zero(self):
        lc = levi_civita_connection(identity_tetrad())
        npt.assert_allclose(lc.jet((0.2, 0.1, -0.3, 0.0), 2).value, 0.0, atol=1e-14)

    def test_flat_polar_single_component(self):
        lc = levi_civita_connection(polar_tetrad())
        w = lc.jet((1.7, 0.8, 0.3, 0.2), 0).value
        expect = np.zeros((4, 4, 4))
        expect[1, 2, 1], expect[2, 1, 1] = -1.0, 1.0
        npt.assert_allclose(w, expect, atol=1e-13,
                            err_msg="planar rotation connection of the polar frame")

    def test_schwarzschild_residual_many_points(self):
        e = schwarzschild_tetrad()
        lc = levi_civita_connection(e)
        rng = np.random.default_rng(112)
        for _ in range(10):
            x = (rng.uniform(3.0, 10.0), rng.uniform(0.5, 2.6), rng.uniform(0.5, 5.5), rng.uniform(-0.5, 0.5))
            out = torsion(e, lc, x)
            npt.assert_allclose(out.theta, 0.0, atol=1e-12)

    def test_derivatives_match_finite_differences(self):
        e = schwarzschild_tetrad()
        lc = levi_civita_connection(e)
        x = np.array([4.5, 1.1, 2.0, 0.1])
        jet = lc.jet(x, 2)
        h = 1e-5
        for direction in range(2):  # the frame only varies in r and th
            step = np.zeros(4)
            step[direction] = h
            plus = lc.jet(x + step, 1)
            minus = lc.jet(x - step, 1)
            fd1 = (plus.value - minus.value) / (2 * h)
            npt.assert_allclose(jet.data[1][..., direction], fd1, atol=1e-8)
            fd2 = (plus.data[1] - minus.data[1]) / (2 * h)
            npt.assert_allclose(jet.data[2][..., direction], fd2, atol=1e-8)

    def test_random_tetrad_unique_and_torsion_free(self):
        rng = np.random.default_rng(113)
        e = random_tetrad(rng)
        lc = levi_civita_connection(e)
        x = rng.uniform(-0.5, 0.5, 4)
        w = lc.jet(x, 0)
        npt.assert_allclose(torsion_jet(e.jet(x, 1), w).value, 0.0, atol=1e-13)
        # the defining linear system is square and nonsingular, so any
        # antisymmetric perturbation must re-introduce torsion
        bump = np.zeros((4, 4, 4))
        bump[0, 2, 1], bump[2, 0, 1] = 1e-3, -1e-3
        perturbed = Jet(0, [w.value + bump])
        assert np.max(np.abs(torsion_jet(e.jet(x, 1), perturbed).value)) > 1e-5

    def test_order_cap(self):
        lc = levi_civita_connection(identity_tetrad())
        with pytest.raises(GeometryError):
            lc.jet((0.0,) * 4, 3)


class TestCurvatureTensors:
    def test_flat_zero(self):
        out = curvature_tensors(identity_tetrad(), ZeroConnection(), (0.0,) * 4)
        npt.assert_allclose(out.riemann, 0.0, atol=1e-15)
        assert out.scalar == 0.0

    def test_schwarzschild_vacuum(self):
        e = schwarzschild_tetrad()
        lc = levi_civita_connection(e)
        rng = np.random.default_rng(114)
        for _ in range(5):
            x = (rng.uniform(3.0, 10.0), rng.uniform(0.5, 2.6), 1.0, 0.0)
            out = curvature_tensors(e, lc, x)
            assert np.max(np.abs(out.ricci)) < 1e-8, f"vacuum violated at {x}"

    def test_schwarzschild_quadratic_invariant(self):
        e = schwarzschild_tetrad()
        lc = levi_civita_connection(e)
        rng = np.random.default_rng(115)
        for _ in range(5):
            x = (rng.uniform(3.0, 10.0), rng.uniform(0.5, 2.6), 1.0, 0.0)
            pg = point_geometry(e, lc, x, order=1)
            rlow = np.einsum("mnws,sl->mnwl", pg.riemann, pg.g)
            rup = np.einsum(
                "ma,nb,wc,ld,abcd->mnwl", pg.g_inv, pg.g_inv, pg.g_inv, pg.g_inv, rlow
            )
            invariant = np.einsum("mnwl,mnwl->", rlow, rup)
            expect = 48.0 / x[0] ** 6
            npt.assert_allclose(invariant, expect, rtol=1e-6,
                                err_msg="curvature-squared invariant off the closed form")

    def test_constant_curvature_background(self):
        # exponential scale factor: with this sign convention the scalar is
        # -12 H^2, the Ricci tensor -3 H^2 g, the einstein tensor +3 H^2 g
        hubble = 0.3
        e = exponential_scale_tetrad(hubble)
        lc = levi_civita_connection(e)
        out = curvature_tensors(e, lc, (0.2, -0.3, 0.1, 0.4))
        g = metric_from_tetrad(e, (0.2, -0.3, 0.1, 0.4)).g
        npt.assert_allclose(out.scalar, -12.0 * hubble**2, rtol=1e-10)
        npt.assert_allclose(out.ricci, -3.0 * hubble**2 * g, atol=1e-12)
        npt.assert_allclose(out.einstein, 3.0 * hubble**2 * g, atol=1e-12)

    def test_scalar_routes_consistent(self):
        rng = np.random.default_rng(116)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        out = curvature_tensors(e, omega, x)
        pg = point_geometry(e, omega, x, order=1)
        check = float(np.einsum("mw,mw->", pg.g_inv, out.ricci))
        assert out.scalar == pytest.approx(check, abs=1e-10 * max(1.0, abs(out.scalar)))


class TestContorsion:
    def test_zero_contorsion_is_identity(self):
        rng = np.random.default_rng(117)
        omega = random_connection(rng)
        summed = apply_contorsion(omega, ZeroConnection())
        x = rng.uniform(-0.5, 0.5, 4)
        npt.assert_allclose(summed.jet(x, 1).value, omega.jet(x, 1).value, atol=1e-16)

    def test_torsion_shift_is_linear(self):
        rng = np.random.default_rng(118)
        e = random_tetrad(rng)
        lc = levi_civita_connection(e)
        arr = rng.uniform(-1, 1, (4, 4, 4))
        kappa_term = arr - arr.transpose(1, 0, 2)
        summed = apply_contorsion(lc, ConstantConnection(kappa_term))
        x = rng.uniform(-0.5, 0.5, 4)
        out = torsion(e, summed, x)
        contrib = np.einsum("abm,bc,cn->amn", kappa_term, ETA, e.jet(x, 0).value)
        expect = contrib - contrib.transpose(0, 2, 1)
        npt.assert_allclose(out.theta, expect, atol=1e-12,
                            err_msg="torsion should shift by exactly the contorsion wedge")

    def test_successive_contorsions_add(self):
        rng = np.random.default_rng(119)
        base = random_connection(rng)
        k1 = ContorsionField({"01": ["0.3", "0", "x1", "0"]}, UNIT_CHART)
        k2 = ContorsionField({"12": ["0", "x0", "0", "0.5"]}, UNIT_CHART)
        x = rng.uniform(-0.5, 0.5, 4)
        ab = apply_contorsion(apply_contorsion(base, k1), k2)
        ba = apply_contorsion(apply_contorsion(base, k2), k1)
        npt.assert_allclose(ab.jet(x, 1).value, ba.jet(x, 1).value, atol=1e-16)


def rotation_field(angle_text):
    return LorentzField(
        [
            ["1", "0", "0", "0"],
            ["0", f"cos({angle_text})", f"sin({angle_text})", "0"],
            ["0", f"0 - sin({angle_text})", f"cos({angle_text})", "0"],
            ["0", "0", "0", "1"],
        ],
        UNIT_CHART,
    )


def boost_field(rapidity_text):
    ch = f"0.5*(exp({rapidity_text}) + exp(0 - ({rapidity_text})))"
    sh = f"0.5*(exp({rapidity_text}) - exp(0 - ({rapidity_text})))"
    return LorentzField(
        [
            [ch, "0", "0", sh],
            ["0", "1", "0", "0"],
            ["0", "0", "1", "0"],
            [sh, "0", "0", ch],
        ],
        UNIT_CHART,
    )


class TestLorentzTransform:
    def test_identity_rotation_is_noop(self):
        rng = np.random.default_rng(120)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        lam = rotation_field("0")
        e2, w2 = lorentz_transform(e, omega, lam)
        x = rng.uniform(-0.5, 0.5, 4)
        npt.assert_allclose(e2.jet(x, 1).value, e.jet(x, 1).value, atol=1e-14)
        npt.assert_allclose(w2.jet(x, 1).value, omega.jet(x, 1).value, atol=1e-13)

    def test_constant_boost_conjugates_connection(self):
        rng = np.random.default_rng(121)
        omega = random_connection(rng)
        lam = boost_field("0.4")
        _, w2 = lorentz_transform(identity_tetrad(), omega, lam)
        x = rng.uniform(-0.5, 0.5, 4)
        lam_val = lam.jet(x, 0).value
        expect = np.einsum("ac,bd,cdm->abm", lam_val, lam_val, omega.jet(x, 0).value)
        npt.assert_allclose(w2.jet(x, 0).value, expect, atol=1e-12)

    def test_pure_gauge_connection_is_flat(self):
        lam = rotation_field("0.4*x0 + 0.2*x3")
        _, w2 = lorentz_transform(identity_tetrad(), ZeroConnection(), lam)
        rng = np.random.default_rng(122)
        for _ in range(3):
            x = rng.uniform(-0.5, 0.5, 4)
            f = curvature_field_strength(w2, x)
            npt.assert_allclose(f, 0.0, atol=1e-10,
                                err_msg="derivative-term connection must carry no curvature")

    def test_metric_and_det_invariant(self):
        rng = np.random.default_rng(123)
        e = random_tetrad(rng)
        lam = rotation_field("0.3*x1")
        e2, _ = lorentz_transform(e, ZeroConnection(), lam)
        x = rng.uniform(-0.5, 0.5, 4)
        d1 = metric_from_tetrad(e, x)
        d2 = metric_from_tetrad(e2, x)
        npt.assert_allclose(d2.g, d1.g, atol=1e-10)
        assert d2.det_e == pytest.approx(d1.det_e, rel=1e-10)

    def test_field_strength_transforms_tensorially(self):
        rng = np.random.default_rng(124)
        omega = random_connection(rng)
        lam = rotation_field("0.5*x0")
        _, w2 = lorentz_transform(identity_tetrad(), omega, lam)
        x = rng.uniform(-0.5, 0.5, 4)
        f2 = curvature_field_strength(w2, x)
        lam_val = lam.jet(x, 0).value
        expect = np.einsum("ac,bd,cdmn->abmn", lam_val, lam_val, curvature_field_strength(omega, x))
        npt.assert_allclose(f2, expect, atol=1e-10)

    def test_scalar_curvature_invariant(self):
        e = schwarzschild_tetrad()
        lc = levi_civita_connection(e)
        lam = LorentzField(
            [
                ["1", "0", "0", "0"],
                ["0", "cos(0.2*r)", "sin(0.2*r)", "0"],
                ["0", "0 - sin(0.2*r)", "cos(0.2*r)", "0"],
                ["0", "0", "0", "1"],
            ],
            SCHW,
        )
        e2, w2 = lorentz_transform(e, lc, lam)
        x = (4.5, 1.2, 2.0, 0.1)
        out1 = curvature_tensors(e, lc, x)
        out2 = curvature_tensors(e2, w2, x)
        assert out2.scalar == pytest.approx(out1.scalar, abs=1e-10)

    def test_torsion_norm_invariant(self):
        rng = np.random.default_rng(125)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        lam = rotation_field("0.4*x2")
        e2, w2 = lorentz_transform(e, omega, lam)
        x = rng.uniform(-0.5, 0.5, 4)

        def torsion_square(ef, wf):
            pg = point_geometry(ef, wf, x, order=1)
            return float(
                np.einsum(
                    "amn,brs,ab,mr,ns->",
                    pg.theta, pg.theta, ETA, pg.g_inv, pg.g_inv,
                )
            )

        assert torsion_square(e2, w2) == pytest.approx(torsion_square(e, omega), abs=1e-10)

    def test_rejects_non_orthogonal_field(self):
        lam = LorentzField(
            [
                ["1", "0.2", "0", "0"],
                ["0", "1", "0", "0"],
                ["0", "0", "1", "0"],
                ["0", "0", "0", "1"],
            ],
            UNIT_CHART,
        )
        with pytest.raises(LorentzError):
            lam.jet((0.0,) * 4, 1)


class TestPointGeometry:
    def test_assembles_and_validates(self):
        rng = np.random.default_rng(126)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        x = rng.uniform(-0.5, 0.5, 4)
        pg = point_geometry(e, omega, x, order=2)
        assert pg.e_jet.order == 2 and pg.omega_jet.order == 2
        npt.assert_allclose(pg.g, pg.g.T, atol=1e-14)
        npt.assert_allclose(pg.f + pg.f.transpose(1, 0, 2, 3), 0.0, atol=1e-13)
        npt.assert_allclose(pg.riemann + pg.riemann.transpose(1, 0, 2, 3), 0.0, atol=1e-12)
        assert pg.det_e != 0.0

    def test_rejects_symmetric_connection_junk(self):
        class Bad:
            def jet(self, point, order):
                return Jet.constant(np.ones((4, 4, 4)), order)

        with pytest.raises(GeometryError):
            point_geometry(identity_tetrad(), Bad(), (0.0,) * 4)

    def test_commutator_identity_with_torsion(self):
        rng = np.random.default_rng(127)
        e = random_tetrad(rng)
        omega = random_connection(rng)
        vec_exprs = [
            parse_expression(random_polynomial_text(rng, UNIT_CHART, scale=0.4), UNIT_CHART)
            for _ in range(4)
        ]
        for _ in range(3):
            x = rng.uniform(-0.5, 0.5, 4)
            pg = point_geometry(e, omega, x, order=2)
            gamma1 = christoffel_jet(pg.e_jet, pg.omega_jet, pg.einv_jet)
            vec = eval_jet_grid(vec_exprs, x, 2)
            # first covariant derivative as a jet, components [s, n]
            grad = jet_partial(vec) + jet_einsum("snr,r->sn", gamma1, vec.truncated(1))
            dgrad = jet_partial(grad).value  # [s, n, m]
            second = (
                np.einsum("snm->smn", dgrad)
                + np.einsum("smr,rn->smn", pg.gamma, grad.value)
                - np.einsum("lmn,sl->smn", pg.gamma, grad.value)
            )
            lhs = second - second.transpose(0, 2, 1)
            rhs = np.einsum("mnws,w->smn", pg.riemann, vec.value) - np.einsum(
                "mnl,sl->smn", pg.q, grad.value
            )
            scale = max(1.0, np.max(np.abs(second)))
            npt.assert_allclose(lhs, rhs, atol=1e-8 * scale,
                                err_msg="curvature-torsion commutator relation violated")
