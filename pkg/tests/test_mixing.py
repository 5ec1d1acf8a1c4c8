import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_domain
from qubit_bss import mixing
from qubit_bss.errors import (
    DomainError,
    InconsistentObservation,
    InvalidObservation,
    NearSingularPhase,
    SingularMixture,
)
from qubit_bss.mixing import ObservationVector, SourceVector

R2 = 2.0**-0.5
S_REF = SourceVector(0.5, R2, 0.0)
X_REF = ObservationVector(0.125, 0.375, 0.215)

sources = st.builds(
    SourceVector,
    r1=st.floats(0.05, 0.45),
    r2=st.floats(0.55, 0.95),
    delta=st.floats(-1.4, 1.4),
)
couplings = st.floats(0.05, 0.95)


class TestForward:
    def test_reference_point(self):
        np.testing.assert_allclose(mixing.forward(S_REF, 0.6), X_REF, rtol=1e-14, atol=1e-15)

    def test_amplitudes_near_one(self):
        s = SourceVector(1 - 2e-8, 1 - 1e-8, 0.7)
        p1, p2, p3 = mixing.forward(s, 0.3)
        assert p1 == pytest.approx(1.0, abs=1e-7)
        assert p2 == pytest.approx(0.0, abs=1e-14)
        assert p3 == pytest.approx(0.0, abs=1e-7)

    def test_zero_phase_drops_cross_term(self):
        r1, r2, v = 0.3, 0.8, 0.45
        p3 = mixing.forward(SourceVector(r1, r2, 0.0), v).p3
        assert p3 == pytest.approx(r1**2 * (1 - r2**2) * (1 - v**2) + (1 - r1**2) * r2**2 * v**2, rel=1e-15)

    def test_supplementary_phase_same_p3(self):
        # pi - delta leaves the canonical branch but has the same sine
        s = SourceVector(0.3, 0.8, 0.4)
        flipped = SourceVector(0.3, 0.8, math.pi - 0.4)
        assert mixing.forward(flipped, 0.5, check=False).p3 == pytest.approx(mixing.forward(s, 0.5).p3, abs=1e-15)

    @pytest.mark.parametrize(
        "s, v, field",
        [
            (SourceVector(0.0, 0.5, 0.1), 0.5, "r1"),
            (SourceVector(0.3, 1.0, 0.1), 0.5, "r2"),
            (SourceVector(0.6, 0.5, 0.1), 0.5, "r2"),
            (SourceVector(0.3, 0.5, math.pi / 2), 0.5, "delta"),
            (SourceVector(0.3, 0.5, -math.pi / 2), 0.5, "delta"),
            (SourceVector(0.3, 0.5, 0.1), 0.0, "v"),
            (SourceVector(0.3, 0.5, 0.1), 1.0, "v"),
        ],
    )
    def test_boundary_inputs_rejected(self, s, v, field):
        with pytest.raises(DomainError) as info:
            mixing.forward(s, v)
        assert info.value.field == field

    def test_batch_error_reports_indices(self):
        s = SourceVector(np.array([0.2, 0.7, 0.3]), np.array([0.5, 0.6, 0.5]), np.zeros(3))
        with pytest.raises(DomainError) as info:
            mixing.forward(s, 0.5)
        assert info.value.index.tolist() == [1]


class TestJacobian:
    def test_reference_point(self):
        assert mixing.jacobian(S_REF, 0.6) == pytest.approx(0.0734847, abs=5e-8)
        assert mixing.jacobian(S_REF, 0.6) == pytest.approx(oracles.jacobian(0.5, R2, 0.0, 0.6), rel=1e-14)

    def test_equal_amplitudes_vanish(self):
        assert mixing.jacobian(SourceVector(0.4, 0.4, 0.3), 0.5, check=False) == 0.0

    def test_phase_at_quarter_turn_vanishes(self):
        assert abs(mixing.jacobian(SourceVector(0.3, 0.6, math.pi / 2 - 1e-12), 0.5)) < 1e-12

    @given(sources, couplings)
    def test_positive_and_matches_symbolic_det(self, s, v):
        jg = mixing.jacobian(s, v)
        assert jg > 0
        assert jg == pytest.approx(oracles.jacobian(*s, v), rel=1e-12)


class TestInversion:
    def test_amplitudes_reference(self):
        r1, r2 = mixing.invert_amplitudes(X_REF)
        assert r1 == pytest.approx(0.5, abs=1e-15)
        assert r2 == pytest.approx(0.70710678, abs=1e-8)

    def test_double_root_is_singular(self):
        with pytest.raises(SingularMixture):
            mixing.invert_amplitudes(ObservationVector(0.25, 0.25, 0.3))

    def test_roots_above_one_invalid(self):
        # t1 = 2, t2 = 3 gives p1 = 6, p2 = 2
        with pytest.raises(InvalidObservation):
            mixing.invert_amplitudes(ObservationVector(6.0, 2.0, 0.5))

    def test_nonpositive_p1_invalid(self):
        with pytest.raises(InvalidObservation) as info:
            mixing.invert_amplitudes(ObservationVector(0.0, 0.3, 0.5))
        assert info.value.field == "p1"

    def test_phase_reference(self):
        r1, r2 = mixing.invert_amplitudes(X_REF)
        assert mixing.invert_phase(X_REF, r1, r2, 0.6) == pytest.approx(0.0, abs=1e-14)

    def test_phase_at_branch_edge_is_flagged(self):
        s = SourceVector(0.3, 0.7, math.pi / 2)
        x = mixing.forward(s, 0.4, check=False)
        with pytest.warns(mixing.NearSingularPhaseWarning):
            delta = mixing.invert_phase(x, 0.3, 0.7, 0.4)
        assert delta == pytest.approx(math.pi / 2, abs=1e-7)

    def test_small_overshoot_is_clamped(self):
        r1, r2, v = 0.3, 0.7, 0.4
        den = 2 * r1 * r2 * math.sqrt((1 - r1**2) * (1 - r2**2)) * math.sqrt(1 - v**2) * v
        base = r1**2 * (1 - r2**2) * (1 - v**2) + (1 - r1**2) * r2**2 * v**2
        x = ObservationVector(r1**2 * r2**2, (1 - r1**2) * (1 - r2**2), base - (1 + 5e-10) * den)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", mixing.NearSingularPhaseWarning)
            assert mixing.invert_phase(x, r1, r2, v) == math.pi / 2

    def test_unreachable_p3(self):
        # reachable only for v in about (0.052, 0.623)
        x = mixing.forward(SourceVector(0.3, 0.7, 1.2), 0.6)
        with pytest.raises(InconsistentObservation) as info:
            mixing.invert(x, 0.8)
        assert info.value.field == "p3"

    @settings(max_examples=200)
    @given(sources, couplings)
    def test_round_trip(self, s, v):
        back = mixing.invert(mixing.forward(s, v), v)
        np.testing.assert_allclose(back, s, atol=1e-10, rtol=0)

    def test_forward_of_inverse(self):
        s, v = random_domain(2000, 3)
        x = mixing.forward(s, v[0])
        np.testing.assert_allclose(mixing.forward(mixing.invert(x, v[0]), v[0]), x, atol=1e-12, rtol=0)

    def test_amplitudes_do_not_depend_on_coupling(self):
        s, _ = random_domain(500, 4)
        x = mixing.forward(s, 0.6)
        a = mixing.invert(x, 0.6)
        b = mixing.invert(x, 0.6000001)
        assert np.array_equal(a.r1, b.r1) and np.array_equal(a.r2, b.r2)


class TestConstraint:
    def test_inverted_sources_satisfy_constraint(self):
        s, _ = random_domain(200, 5)
        x = mixing.forward(s, 0.55)
        back = mixing.invert(x, 0.55)
        res = mixing.constraint_residual(back.delta, 0.55, back.r1, back.r2, x.p3)
        assert np.max(np.abs(res)) < 1e-15

    def test_dF_ds3_at_zero_phase(self):
        r1, r2, v = 0.3, 0.8, 0.45
        expected = -2 * r1 * r2 * math.sqrt(1 - r1**2) * math.sqrt(1 - r2**2) * math.sqrt(1 - v**2) * v
        assert mixing.dF_ds3(0.0, v, r1, r2) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("s3, v", [(0.0, 0.3), (0.7, 0.5), (-1.1, 0.85)])
    def test_partials_match_central_differences(self, s3, v):
        r1, r2, p3 = 0.25, 0.65, 0.1
        h = 1e-5
        fd_s = (mixing.constraint_residual(s3 + h, v, r1, r2, p3) - mixing.constraint_residual(s3 - h, v, r1, r2, p3)) / (2 * h)
        fd_v = (mixing.constraint_residual(s3, v + h, r1, r2, p3) - mixing.constraint_residual(s3, v - h, r1, r2, p3)) / (2 * h)
        assert mixing.dF_ds3(s3, v, r1, r2) == pytest.approx(fd_s, rel=1e-8)
        assert mixing.dF_dv(s3, v, r1, r2) == pytest.approx(fd_v, rel=1e-8)


class TestPhaseDerivative:
    def test_zero_phase(self):
        r1, r2, v = 0.3, 0.8, 0.45
        expected = (r2**2 - r1**2) / (r1 * r2 * math.sqrt(1 - r1**2) * math.sqrt(1 - r2**2) * math.sqrt(1 - v**2))
        assert mixing.ds3_dv(SourceVector(r1, r2, 0.0), v) == pytest.approx(expected, rel=1e-15)

    def test_vanishes_for_equal_amplitudes_at_critical_coupling(self):
        assert mixing.ds3_dv(SourceVector(0.4, 0.4, 0.9), R2, check=False) == pytest.approx(0.0, abs=1e-14)

    def test_near_singular_phase_rejected(self):
        with pytest.raises(NearSingularPhase):
            mixing.ds3_dv(SourceVector(0.3, 0.7, math.pi / 2 - 1e-9), 0.5)

    def test_matches_inversion_finite_difference(self):
        from qubit_bss.validation import fd_phase_derivative

        s, v = random_domain(300, 6)
        for i in range(300):
            si = SourceVector(s.r1[i], s.r2[i], s.delta[i])
            x = mixing.forward(si, v[i])
            # the reachable interval shrinks like cos(delta)**2 near the branch edge
            h = 1e-4 * min(1.0, math.cos(si.delta) ** 2)
            assert mixing.ds3_dv(si, v[i]) == pytest.approx(fd_phase_derivative(x, v[i], h), rel=1e-6)

    def test_matches_symbolic_implicit_derivative(self):
        s, v = random_domain(1000, 7)
        x = mixing.forward(s, 0.4)
        back = mixing.invert(x, 0.4)
        np.testing.assert_allclose(
            mixing.ds3_dv(back, 0.4), oracles.dphase_dv(back.r1, back.r2, x.p3, 0.4), rtol=1e-9
        )

    def test_implicit_function_identity(self):
        s, v = random_domain(1000, 8)
        resid = mixing.dF_ds3(s.delta, v, s.r1, s.r2) * mixing.ds3_dv(s, v) + mixing.dF_dv(s.delta, v, s.r1, s.r2)
        assert np.max(np.abs(resid)) < 1e-10


class TestJacobianDerivatives:
    def test_partial_vanishes_at_critical_coupling(self):
        assert mixing.djg_dv_partial(SourceVector(0.3, 0.7, 0.4), R2) == pytest.approx(0.0, abs=1e-16)

    def test_partial_reference(self):
        # exact value 8 * (1/8) * (1/4) * sqrt(0.375) * 0.28 / 0.8
        assert mixing.djg_dv_partial(S_REF, 0.6) == pytest.approx(0.0875 * math.sqrt(0.375), rel=1e-13)
        assert mixing.djg_dv_partial(S_REF, 0.6) == pytest.approx(0.0535828, abs=5e-7)

    def test_phase_partial_zero_at_zero_phase(self):
        assert mixing.djg_ds3(SourceVector(0.3, 0.7, 0.0), 0.4) == 0.0

    @given(sources, couplings)
    def test_phase_partial_sign(self, s, v):
        val = mixing.djg_ds3(s, v)
        if s.delta > 0:
            assert val < 0
        elif s.delta < 0:
            assert val > 0

    def test_partials_match_symbolic(self):
        s, v = random_domain(1000, 9)
        np.testing.assert_allclose(mixing.djg_dv_partial(s, v), oracles.djac_dv_fixed(*s, v), rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(mixing.djg_ds3(s, v), oracles.djac_dd(*s, v), rtol=1e-10, atol=1e-14)

    @pytest.mark.parametrize("which, i", [("djg_dv_partial", 3), ("djg_ds3", 2)])
    def test_partials_match_central_differences(self, which, i):
        s, v = random_domain(200, 10)
        h = 1e-6
        point = np.array([s.r1, s.r2, s.delta, v])
        up, dn = point.copy(), point.copy()
        up[i] += h
        dn[i] -= h
        fd = (mixing.jacobian(SourceVector(*up[:3]), up[3], check=False)
              - mixing.jacobian(SourceVector(*dn[:3]), dn[3], check=False)) / (2 * h)
        np.testing.assert_allclose(getattr(mixing, which)(s, v), fd, rtol=1e-6, atol=1e-10)

    def test_total_at_zero_phase(self):
        r1, r2, v = 0.3, 0.8, 0.45
        expected = 8 * r1**2 * r2**2 * (r2**2 - r1**2) * math.sqrt(1 - r1**2) * math.sqrt(1 - r2**2) * (1 - 2 * v**2) / math.sqrt(1 - v**2)
        assert mixing.djg_dv_total(SourceVector(r1, r2, 0.0), v) == pytest.approx(expected, rel=1e-14)

    def test_total_matches_symbolic_path_derivative(self):
        s, _ = random_domain(1000, 11)
        x = mixing.forward(s, 0.35)
        back = mixing.invert(x, 0.35)
        np.testing.assert_allclose(
            mixing.djg_dv_total(back, 0.35), oracles.djac_dv_path(back.r1, back.r2, x.p3, 0.35), rtol=1e-9
        )

    def test_total_matches_path_finite_difference(self):
        from qubit_bss.validation import fd_jacobian_path_derivative

        s, v = random_domain(200, 12)
        for i in range(200):
            si = SourceVector(s.r1[i], s.r2[i], s.delta[i])
            x = mixing.forward(si, v[i])
            h = 1e-4 * min(1.0, math.cos(si.delta) ** 2)
            fd = fd_jacobian_path_derivative(x, v[i], h)
            assert mixing.djg_dv_total(si, v[i]) == pytest.approx(fd, rel=1e-6, abs=1e-12)


class TestFeasibleInterval:
    def test_matches_brute_force_scan(self):
        s, _ = random_domain(50, 13)
        x = mixing.forward(s, 0.6)
        lo, hi = mixing.feasible_coupling_interval(x)
        grid = np.linspace(0.001, 0.999, 4000)
        r1, r2 = mixing.invert_amplitudes(x)
        for i in range(50):
            xi = ObservationVector(x.p1[i], x.p2[i], x.p3[i])
            q = np.array([mixing.phase_argument(xi, r1[i], r2[i], g) for g in grid])
            inside = (grid > lo[i] + 1e-9) & (grid < hi[i] - 1e-9)
            outside = (grid < lo[i] - 1e-9) | (grid > hi[i] + 1e-9)
            assert np.all(np.abs(q[inside]) <= 1 + 1e-12)
            assert np.all(np.abs(q[outside]) > 1)

    def test_edges_are_singular(self):
        s, _ = random_domain(20, 14)
        x = mixing.forward(s, 0.6)
        lo, hi = mixing.feasible_coupling_interval(x)
        r1, r2 = mixing.invert_amplitudes(x)
        for edge in (lo, hi):
            q = np.array([mixing.phase_argument(ObservationVector(x.p1[i], x.p2[i], x.p3[i]), r1[i], r2[i], edge[i])
                          for i in range(20) if edge[i] < 1 - 1e-12])
            np.testing.assert_allclose(np.abs(q), 1.0, atol=1e-9)
