"""Gaussian-state engine against the dense Fock oracle, closed-form entropy
changes against two-branch evaluation, and purification scaling behavior."""

import numpy as np
import pytest

from purisim import RngStream
from purisim.fermion import (
    LOG2,
    FermionOutcome,
    MajoranaState,
    ModeState,
    apply_mode_unitary,
    apply_rotation,
    delta_s_proxy_conserving,
    delta_s_proxy_general,
    embed_mode_state,
    embed_mode_unitary,
    mc_delta_s_pairing,
    measure_mode_conserving,
    measure_mode_general,
    renyi2,
    run_purification,
    s_proxy,
    williamson,
)
from purisim.fock import (
    dense_state,
    extract_majorana_matrix,
    extract_mode_matrix,
    fock_measure,
    fock_rotation_from_orthogonal,
    state_from_occupation_signs,
)
from purisim.randmat import haar_special_orthogonal, haar_unitary


def random_mode_state(n, gen) -> ModeState:
    eta = gen.uniform(-1, 1, size=n)
    u = haar_unitary(n, gen)
    return apply_mode_unitary(ModeState.from_occupations(eta), u)


def random_majorana_state(n, gen) -> MajoranaState:
    lam = gen.uniform(-1, 1, size=n)
    o = haar_special_orthogonal(2 * n, gen)
    return apply_rotation(MajoranaState.from_williamson(lam), o)


class TestEntropies:
    def test_s_proxy_maximally_mixed(self):
        assert abs(s_proxy(MajoranaState.maximally_mixed(5)) - 5 * LOG2) < 1e-12
        assert abs(s_proxy(ModeState.maximally_mixed(5)) - 5 * LOG2) < 1e-12

    def test_s_proxy_pure(self):
        st = MajoranaState.from_williamson(np.ones(4))
        assert abs(s_proxy(st)) < 1e-12
        assert abs(renyi2(st)) < 1e-12

    def test_s_proxy_single_mode(self):
        lam = 0.37
        st = MajoranaState.from_williamson(np.array([lam]))
        assert abs(s_proxy(st) - LOG2 * (1 - lam**2)) < 1e-12

    def test_renyi2_values(self):
        st = MajoranaState.from_williamson(np.array([0.5]))
        assert abs(renyi2(st) - (LOG2 - np.log(1.25))) < 1e-12
        assert abs(renyi2(MajoranaState.maximally_mixed(3)) - 3 * LOG2) < 1e-12

    def test_proxy_renyi_agree_at_extremes(self):
        mm = MajoranaState.maximally_mixed(4)
        assert abs(s_proxy(mm) - renyi2(mm)) < 1e-12
        pure = MajoranaState.from_williamson(np.ones(4))
        assert abs(s_proxy(pure) - renyi2(pure)) < 1e-12

    def test_mode_majorana_consistency(self):
        gen = RngStream(80).generator()
        for _ in range(20):
            st = random_mode_state(4, gen)
            emb = embed_mode_state(st)
            assert abs(s_proxy(st) - s_proxy(emb)) < 1e-10
            assert abs(renyi2(st) - renyi2(emb)) < 1e-10


class TestWilliamson:
    def test_single_block(self):
        st = MajoranaState(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert np.allclose(williamson(st), [1.0])

    def test_zero(self):
        assert np.allclose(williamson(MajoranaState.maximally_mixed(3)), 0.0)

    def test_rotation_invariance(self):
        gen = RngStream(81).generator()
        lam0 = np.sort(gen.uniform(0, 1, size=4))[::-1]
        base = MajoranaState.from_williamson(lam0)
        for _ in range(10):
            o = haar_special_orthogonal(8, gen)
            vals = williamson(apply_rotation(base, o))
            assert np.max(np.abs(vals - lam0)) < 1e-10

    def test_asymmetric_rejected(self):
        # mutate past the constructor to hit williamson's own tolerance check
        st = MajoranaState(np.zeros((2, 2)))
        st.matrix = np.array([[0.0, 1.0], [-0.5, 0.0]])
        with pytest.raises(ValueError):
            williamson(st)


class TestEmbeddings:
    def test_identity(self):
        assert np.allclose(embed_mode_unitary(np.eye(3)), np.eye(6))

    def test_phase_i_is_quarter_turn(self):
        o = embed_mode_unitary(np.array([[1j]]))
        assert np.allclose(o, [[0.0, -1.0], [1.0, 0.0]])

    def test_determinant_one(self):
        gen = RngStream(82).generator()
        for _ in range(200):
            u = haar_unitary(3, gen)
            o = embed_mode_unitary(u)
            assert np.max(np.abs(o.T @ o - np.eye(6))) < 1e-12
            assert abs(np.linalg.det(o) - 1.0) < 1e-9

    def test_nonunitary_rejected(self):
        with pytest.raises(ValueError):
            embed_mode_unitary(np.ones((2, 2)))

    def test_rotation_commutes_with_embedding(self):
        gen = RngStream(83).generator()
        st = random_mode_state(3, gen)
        u = haar_unitary(3, gen)
        left = embed_mode_state(apply_mode_unitary(st, u))
        right = apply_rotation(embed_mode_state(st), embed_mode_unitary(u))
        assert np.max(np.abs(left.matrix - right.matrix)) < 1e-10

    def test_s_proxy_invariant_under_conjugation(self):
        gen = RngStream(84).generator()
        st = random_majorana_state(4, gen)
        o = haar_special_orthogonal(8, gen)
        assert abs(s_proxy(apply_rotation(st, o)) - s_proxy(st)) < 1e-10


class TestConservingMeasurement:
    def test_maximally_mixed(self):
        st = ModeState.maximally_mixed(4)
        out, res = measure_mode_conserving(st, 0, RngStream(85))
        assert abs(res.probability - 0.5) < 1e-12
        expect = np.zeros((4, 4))
        expect[0, 0] = 1.0 if res.branch == "empty" else -1.0
        assert np.allclose(out.matrix, expect, atol=1e-12)

    def test_pure_mode_unchanged(self):
        mc = np.diag([1.0, 0.3, -0.2]).astype(complex)
        st = ModeState(mc)
        out, res = measure_mode_conserving(st, 0, RngStream(86))
        assert res.branch == "empty"
        assert abs(res.probability - 1.0) < 1e-12
        assert np.allclose(out.matrix, mc, atol=1e-12)

    def test_measured_mode_pure_after(self):
        gen = RngStream(87).generator()
        for _ in range(20):
            st = random_mode_state(4, gen)
            out, _ = measure_mode_conserving(st, 1, gen)
            assert abs(abs(out.matrix[1, 1]) - 1.0) < 1e-10
            out.validate()

    def test_delta_s_proxy_closed_form(self):
        # equals the direct two-branch average, every state
        gen = RngStream(88).generator()
        for _ in range(200):
            n = int(gen.integers(2, 6))
            st = random_mode_state(n, gen)
            j = int(gen.integers(0, n))
            eta = float(np.real(st.matrix[j, j]))
            p_plus = 0.5 * (1 + eta)
            plus, _ = _force_conserving(st, j, empty=True)
            minus, _ = _force_conserving(st, j, empty=False)
            direct = p_plus * s_proxy(plus) + (1 - p_plus) * s_proxy(minus) - s_proxy(st)
            closed = delta_s_proxy_conserving(st, j)
            assert abs(direct - closed) < 1e-10
            assert closed <= 1e-15

    def test_delta_maximally_mixed_full_bit(self):
        st = ModeState.maximally_mixed(4)
        assert abs(delta_s_proxy_conserving(st, 0) + LOG2) < 1e-12

    def test_delta_pure_zero(self):
        st = ModeState.from_occupations(np.array([1.0, -1.0, 1.0]))
        assert delta_s_proxy_conserving(st, 0) == 0.0


def _force_conserving(st, j, empty):
    class _Fixed:
        def uniform(self):
            return 0.0 if empty else 1.0

    return measure_mode_conserving(st, j, _Fixed())


def _force_general(st, j, empty):
    class _Fixed:
        def uniform(self):
            return 0.0 if empty else 1.0

    return measure_mode_general(st, j, _Fixed())


class TestGeneralMeasurement:
    def test_maximally_mixed(self):
        st = MajoranaState.maximally_mixed(3)
        out, res = measure_mode_general(st, 0, RngStream(89))
        assert abs(res.probability - 0.5) < 1e-12
        sign = 1.0 if res.branch == "empty" else -1.0
        expect = np.zeros((6, 6))
        expect[0, 1] = sign
        expect[1, 0] = -sign
        assert np.allclose(out.matrix, expect, atol=1e-12)

    def test_pure_mode_certain_branch(self):
        st = MajoranaState.from_williamson(np.array([1.0, 0.4]))
        out, res = measure_mode_general(st, 0, RngStream(90))
        assert res.branch == "empty" and abs(res.probability - 1.0) < 1e-12
        assert np.allclose(out.matrix, st.matrix, atol=1e-12)

    def test_measured_mode_williamson_one(self):
        gen = RngStream(91).generator()
        for _ in range(20):
            st = random_majorana_state(4, gen)
            out, _ = measure_mode_general(st, 2, gen)
            vals = williamson(out)
            assert abs(vals.max() - 1.0) < 1e-10
            out.validate()

    def test_delta_s_proxy_closed_form(self):
        gen = RngStream(92).generator()
        for _ in range(200):
            n = int(gen.integers(2, 9))
            st = random_majorana_state(n, gen)
            j = int(gen.integers(0, n))
            alpha = float(st.matrix[2 * j, 2 * j + 1])
            p_plus = 0.5 * (1 + alpha)
            plus, _ = _force_general(st, j, empty=True)
            minus, _ = _force_general(st, j, empty=False)
            direct = p_plus * s_proxy(plus) + (1 - p_plus) * s_proxy(minus) - s_proxy(st)
            closed = delta_s_proxy_general(st, j)
            assert abs(direct - closed) < 1e-10
            assert closed <= 1e-15

    def test_delta_maximally_mixed(self):
        assert abs(delta_s_proxy_general(MajoranaState.maximally_mixed(3), 0) + LOG2) < 1e-12

    def test_single_mode_fully_purifies(self):
        lam = 0.6
        st = MajoranaState.from_williamson(np.array([lam]))
        assert abs(delta_s_proxy_general(st, 0) + LOG2 * (1 - lam**2)) < 1e-12

    def test_conserving_consistency_via_embedding(self):
        # general update on a zero-pairing embedding = embedding of the
        # conserving update, same branch
        gen = RngStream(93).generator()
        for _ in range(30):
            st = random_mode_state(3, gen)
            j = int(gen.integers(0, 3))
            for empty in (True, False):
                mode_out, _ = _force_conserving(st, j, empty)
                maj_out, _ = _force_general(embed_mode_state(st), j, empty)
                expect = embed_mode_state(mode_out)
                assert np.max(np.abs(maj_out.matrix - expect.matrix)) < 1e-10

    def test_outcome_averaged_monotonicity(self):
        gen = RngStream(94).generator()
        for _ in range(100):
            st = random_majorana_state(3, gen)
            j = int(gen.integers(0, 3))
            alpha = float(st.matrix[2 * j, 2 * j + 1])
            p_plus = 0.5 * (1 + alpha)
            plus, _ = _force_general(st, j, True)
            minus, _ = _force_general(st, j, False)
            avg = p_plus * s_proxy(plus) + (1 - p_plus) * s_proxy(minus)
            assert avg <= s_proxy(st) + 1e-12


class TestFockOracle:
    def test_occupation_state_extraction(self):
        lam = np.array([0.3, -0.8, 1.0])
        rho = state_from_occupation_signs(lam)
        assert abs(np.trace(rho).real - 1.0) < 1e-12
        mc = extract_mode_matrix(rho, 3)
        assert np.allclose(mc, np.diag(lam), atol=1e-10)
        m = extract_majorana_matrix(rho, 3)
        assert np.allclose(m, MajoranaState.from_williamson(lam).matrix, atol=1e-10)

    def test_maximally_mixed_dense(self):
        rho = dense_state(ModeState.maximally_mixed(2))
        assert np.allclose(rho, np.eye(4) / 4, atol=1e-12)

    def test_rotation_conjugation_matches(self):
        gen = RngStream(95).generator()
        lam = gen.uniform(-1, 1, size=3)
        o = haar_special_orthogonal(6, gen)
        base = MajoranaState.from_williamson(lam)
        rho0 = state_from_occupation_signs(lam)
        rot = fock_rotation_from_orthogonal(o)
        rho = rot @ rho0 @ rot.conj().T
        extracted = extract_majorana_matrix(rho, 3)
        expect = apply_rotation(base, o).matrix
        assert np.max(np.abs(extracted - expect)) < 1e-10

    def test_dense_state_round_trip(self):
        gen = RngStream(96).generator()
        for _ in range(10):
            st = random_majorana_state(3, gen)
            rho = dense_state(st)
            assert abs(np.trace(rho).real - 1.0) < 1e-10
            assert np.max(np.abs(extract_majorana_matrix(rho, 3) - st.matrix)) < 1e-9
            stm = random_mode_state(3, gen)
            rhom = dense_state(stm)
            assert np.max(np.abs(extract_mode_matrix(rhom, 3) - stm.matrix)) < 1e-9

    def test_measurement_probabilities_mixed(self):
        meas = fock_measure(ModeState.maximally_mixed(2), 0)
        assert abs(meas.p_empty - 0.5) < 1e-12
        assert abs(meas.p_filled - 0.5) < 1e-12

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_conserving_update_vs_oracle(self, n):
        gen = RngStream(97 + n).generator()
        for _ in range(8):
            st = random_mode_state(n, gen)
            j = int(gen.integers(0, n))
            oracle = fock_measure(st, j)
            plus, res_p = _force_conserving(st, j, True)
            minus, _ = _force_conserving(st, j, False)
            assert abs(res_p.probability - oracle.p_empty) < 1e-10
            if oracle.p_empty > 1e-9:
                assert np.max(np.abs(plus.matrix - oracle.corr_empty)) < 1e-10
            if oracle.p_filled > 1e-9:
                assert np.max(np.abs(minus.matrix - oracle.corr_filled)) < 1e-10

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_general_update_vs_oracle(self, n):
        gen = RngStream(107 + n).generator()
        for _ in range(8):
            st = random_majorana_state(n, gen)
            j = int(gen.integers(0, n))
            oracle = fock_measure(st, j)
            plus, res_p = _force_general(st, j, True)
            minus, _ = _force_general(st, j, False)
            assert abs(res_p.probability - oracle.p_empty) < 1e-10
            if oracle.p_empty > 1e-9:
                assert np.max(np.abs(plus.matrix - oracle.corr_empty)) < 1e-10
            if oracle.p_filled > 1e-9:
                assert np.max(np.abs(minus.matrix - oracle.corr_filled)) < 1e-10

    def test_size_limit(self):
        with pytest.raises(ValueError):
            dense_state(ModeState.maximally_mixed(6))

    def test_log_branch_nudge(self):
        # rotation with an eigenvalue at -1 (pi rotation) goes through the nudge
        o = np.diag([-1.0, -1.0, 1.0, 1.0])
        rot = fock_rotation_from_orthogonal(o)
        assert np.max(np.abs(rot @ rot.conj().T - np.eye(4))) < 1e-6


class TestPurification:
    def test_initial_density_one(self):
        ens = run_purification(8, 5, "conserving", 30, seed=120)
        assert abs(ens.mean_density[0] - 1.0) < 1e-12

    def test_bound_holds_conserving(self):
        ens = run_purification(16, 200, "conserving", 100, seed=121, stop_at_order1=False)
        assert ens.bound_violations == 0

    def test_bound_holds_general(self):
        ens = run_purification(12, 150, "general", 100, seed=122, stop_at_order1=False)
        assert ens.bound_violations == 0

    def test_times_scale_with_n(self):
        t_half, t_one = {}, {}
        for n in (8, 16):
            ens = run_purification(n, 4 * n * n, "conserving", 100, seed=123)
            t_half[n], t_one[n] = ens.half_entropy_time, ens.order1_purity_time
        assert t_half[16] / t_half[8] > 1.4  # ~linear in n
        assert t_one[16] / t_one[8] > 2.6  # ~quadratic in n

    def test_deterministic(self):
        a = run_purification(8, 30, "general", 20, seed=124, stop_at_order1=False)
        b = run_purification(8, 30, "general", 20, seed=124, stop_at_order1=False)
        assert np.array_equal(a.mean_density, b.mean_density)


class TestPairingMeanDecrease:
    def test_maximally_mixed_exact(self):
        # every sample gives exactly log 2; leading-order formula is
        # log2 (1 - 1/2n)
        rep = mc_delta_s_pairing(8, 200, RngStream(125))
        assert abs(rep["mc_mean_abs_delta"] - LOG2) < 1e-10
        assert abs(rep["predicted_leading"] - LOG2 * (1 - 1 / 16)) < 1e-12
        assert rep["relative_error"] < 0.10

    def test_pure_state_zero(self):
        st = MajoranaState.from_williamson(np.ones(8))
        rep = mc_delta_s_pairing(8, 200, RngStream(126), base_state=st)
        assert abs(rep["mc_mean_abs_delta"]) < 1e-10
        assert abs(rep["predicted_leading"]) < 1e-12

    def test_half_mixed_within_tolerance(self):
        st = MajoranaState.from_williamson(np.full(16, 0.5))
        rep = mc_delta_s_pairing(16, 3000, RngStream(127), base_state=st)
        assert rep["relative_error"] < 0.10, rep
        assert rep["lower_bound_ok"]
