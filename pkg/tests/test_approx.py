import numpy as np
import pytest
import scipy.linalg as sla
from numpy.testing import assert_allclose

from ebhess import (
    FactorizedOperator,
    FunctionSpec,
    GallerySpec,
    build_T,
    ebha_run,
    exact_dense,
    exp_error_bound,
    gallery,
    initial_block_angle,
    laurent_apply,
    mf_eba,
    mf_ebh,
    reference_matfun,
)
from ebhess.errors import AssumptionViolated, DimensionMismatch
from _util import dissipative_operator, random_block, random_sparse_operator

FIVE = [FunctionSpec.from_name(t) for t in ("exp", "sqrt", "expnegsqrt", "log", "expinvx")]


class TestMfEbh:
    def test_first_power_is_exact(self):
        A = random_sparse_operator(60, 0)
        V = random_block(60, 2, 0)
        res = mf_ebh(A, V, 2, FunctionSpec.laurent({1: 1.0}))
        want = A.apply(V)
        assert np.linalg.norm(res.approximation - want) <= 1e-8 * np.linalg.norm(want)

    def test_resolvent_at_zero_is_solve(self):
        A = random_sparse_operator(60, 1)
        V = random_block(60, 2, 1)
        res = mf_ebh(A, V, 2, FunctionSpec.resolvent(0.0))
        want = A.solve(V)
        assert np.linalg.norm(res.approximation - want) <= 1e-8 * np.linalg.norm(want)

    @pytest.mark.parametrize("seed", range(4))
    def test_laurent_window_exactness(self, seed):
        n, p, m = 80, 2, 3
        A = random_sparse_operator(n, 40 + seed)
        V = random_block(n, p, seed)
        rng = np.random.default_rng(seed)
        coeffs = {int(j): float(rng.standard_normal()) for j in range(-m, m)}
        res = mf_ebh(A, V, m, FunctionSpec.laurent(coeffs))
        want = laurent_apply(coeffs, A, V)
        assert np.linalg.norm(res.approximation - want) <= 1e-8 * np.linalg.norm(want)

    def test_relative_error_and_time_filled(self):
        A = gallery(GallerySpec("rot2_blockdiag", size=60))
        V = random_block(60, 2, 3)
        spec = FunctionSpec.exp()
        ref = reference_matfun(A, V, spec)
        res = mf_ebh(A, V, 4, spec, reference=ref)
        assert res.relative_error is not None and res.relative_error >= 0.0
        assert res.wall_time > 0.0
        assert res.m == 4

    def test_joint_start_agrees(self):
        A = random_sparse_operator(60, 2)
        V = random_block(60, 2, 2)
        spec = FunctionSpec.exp()
        a = mf_ebh(A, V, 3, spec).approximation
        b = mf_ebh(A, V, 3, spec, joint_start=True).approximation
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(a)

    def test_initial_block_angle_small(self):
        A = random_sparse_operator(50, 3)
        assert initial_block_angle(A, random_block(50, 2, 3)) <= 1e-10


class TestCrossMethod:
    @pytest.mark.parametrize("spec", FIVE, ids=lambda s: s.tag)
    def test_agreement_on_well_conditioned(self, spec):
        A = gallery(GallerySpec("toeplitz_inv_dist", size=60))
        V = random_block(60, 2, 5)
        a = mf_ebh(A, V, 8, spec).approximation
        b = mf_eba(A, V, 8, spec).approximation
        assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(b)

    def test_mirror_examples_for_eba(self):
        A = random_sparse_operator(60, 4)
        V = random_block(60, 2, 4)
        res = mf_eba(A, V, 2, FunctionSpec.laurent({1: 1.0}))
        want = A.apply(V)
        assert np.linalg.norm(res.approximation - want) <= 1e-8 * np.linalg.norm(want)
        res = mf_eba(A, V, 2, FunctionSpec.resolvent(0.0))
        want = A.solve(V)
        assert np.linalg.norm(res.approximation - want) <= 1e-8 * np.linalg.norm(want)


class TestExactDense:
    def test_sqrt_diag(self):
        got = exact_dense(np.diag([1.0, 4.0]), np.eye(2), FunctionSpec.sqrt())
        assert_allclose(got, np.diag([1.0, 2.0]))

    def test_nilpotent_exp(self):
        N = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        got = exact_dense(N, np.eye(3), FunctionSpec.exp())
        want = np.eye(3) + N + N @ N / 2.0
        assert_allclose(got, want, atol=1e-14)

    def test_spd_log_against_eigen_oracle(self):
        rng = np.random.default_rng(7)
        B = rng.standard_normal((50, 50))
        M = B @ B.T / 50 + 2 * np.eye(50)
        V = rng.standard_normal((50, 3))
        got = exact_dense(M, V, FunctionSpec.log())
        w, Q = np.linalg.eigh(M)
        want = (Q * np.log(w)) @ Q.T @ V
        assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)

    def test_size_guard(self):
        with pytest.raises(DimensionMismatch):
            exact_dense(np.eye(10), np.ones((10, 1)), FunctionSpec.exp(), small_dim_limit=5)

    def test_rot2_reference_matches_dense(self):
        A = gallery(GallerySpec("rot2_blockdiag", size=40))
        V = random_block(40, 2, 8)
        for spec in FIVE:
            fast = reference_matfun(A, V, spec)
            slow = exact_dense(A.to_dense(), V, spec)
            assert np.linalg.norm(fast - slow) <= 1e-9 * np.linalg.norm(slow)


class TestExpErrorBound:
    def test_zero_coupling_gives_zero_bound(self):
        A = dissipative_operator(30, 0)
        basis = ebha_run(A, random_block(30, 1, 0), 3)
        proj = build_T(basis)
        proj.tau[:] = 0.0
        bound, coupling, _ = exp_error_bound(A, basis, proj)
        assert bound == 0.0 and coupling == 0.0

    def test_formula_arithmetic_at_mu_minus_one(self):
        A = dissipative_operator(30, 1, margin=1.0)
        basis = ebha_run(A, random_block(30, 1, 1), 3)
        proj = build_T(basis)
        bound, coupling, mu = exp_error_bound(A, basis, proj)
        assert mu == pytest.approx(-1.0, abs=1e-10)
        assert bound == pytest.approx(coupling * (1.0 - np.exp(-1.0)), rel=1e-9)

    def test_bound_holds_for_negative_diag(self):
        Ad = -np.diag(np.arange(1.0, 41.0))
        A = FactorizedOperator.from_dense(Ad)
        V = random_block(40, 2, 2)
        basis = ebha_run(A, V, 4)
        proj = build_T(basis)
        bound, _, _ = exp_error_bound(A, basis, proj)
        res = mf_ebh(A, V, 4, FunctionSpec.exp())
        err = np.linalg.norm(sla.expm(Ad) @ V - res.approximation, 2)
        assert err <= bound

    def test_assumption_violated_for_spd(self):
        A = gallery(GallerySpec("toeplitz_inv_dist", size=40))
        basis = ebha_run(A, random_block(40, 1, 3), 3)
        with pytest.raises(AssumptionViolated):
            exp_error_bound(A, basis, build_T(basis))

    def test_mf_ebh_fills_bound(self):
        A = dissipative_operator(40, 5)
        res = mf_ebh(A, random_block(40, 1, 5), 3, FunctionSpec.exp(), compute_bound=True)
        assert res.bound is not None and res.bound >= 0.0


class TestMonotoneImprovement:
    @pytest.mark.parametrize("gname", ["toeplitz_inv_dist", "rot2_blockdiag"])
    def test_error_drops_from_m10_to_m15(self, gname):
        A = gallery(GallerySpec(gname, size=240))
        V = random_block(240, 3, 17)
        for spec in FIVE:
            ref = reference_matfun(A, V, spec)
            e10 = mf_ebh(A, V, 10, spec, reference=ref).relative_error
            e15 = mf_ebh(A, V, 15, spec, reference=ref).relative_error
            assert e15 <= e10, f"{gname}/{spec.tag}: {e15} > {e10}"
