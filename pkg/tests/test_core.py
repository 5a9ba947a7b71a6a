import numpy as np
import pytest

from bseig.core import (
    BSHProblem,
    PhiBlockMatrix,
    bsh_problem_new,
    c_gram,
    c_matrix,
    estimate_omega_norm,
    j_matrix,
    omega_apply,
    omega_apply_dense,
    omega_assemble,
    omega_gram,
    phi_adjoint,
    phi_assemble,
    phi_concat,
    phi_product,
)

from conftest import rand_complex, rand_phi


class TestPhiAssemble:
    def test_identity(self):
        u = PhiBlockMatrix(np.eye(1), np.zeros((1, 1)))
        assert np.array_equal(phi_assemble(u), np.eye(2))

    def test_direct_definition(self):
        u = PhiBlockMatrix([[2.0]], [[1.0]])
        assert np.array_equal(phi_assemble(u), [[2.0, 1.0], [1.0, 2.0]])

    def test_conjugation(self):
        u = PhiBlockMatrix([[1j]], [[0.0]])
        assert np.array_equal(phi_assemble(u), [[1j, 0.0], [0.0, -1j]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PhiBlockMatrix(np.zeros((2, 1)), np.zeros((3, 1)))


class TestBSHProblem:
    def test_identity_problem_spectrum(self):
        p = bsh_problem_new(np.eye(2), np.zeros((2, 2)))
        h = c_matrix(2) @ omega_assemble(p)
        lam = np.sort(np.linalg.eigvals(h).real)
        assert np.allclose(lam, [-1, -1, 1, 1], atol=1e-14)

    def test_one_dim_pair(self):
        p = bsh_problem_new([[2.5]], [[-1.5]])
        h = c_matrix(1) @ omega_assemble(p)
        lam = np.sort(np.linalg.eigvals(h).real)
        assert np.allclose(lam, [-2.0, 2.0], atol=1e-14)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            bsh_problem_new(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))

    def test_non_symmetric_b_rejected(self):
        b = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            bsh_problem_new(np.eye(2), b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            bsh_problem_new(np.eye(2), np.zeros((3, 3)))

    def test_validation_skipped_when_disabled(self):
        p = bsh_problem_new(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)),
                            validate=False)
        assert p.n == 2


class TestOmegaApply:
    def test_identity_omega(self):
        rng = np.random.default_rng(0)
        p = bsh_problem_new(np.eye(3), np.zeros((3, 3)))
        u = rand_phi(rng, 3, 2)
        v = omega_apply(p, u)
        assert np.allclose(v.x_block, u.x_block)
        assert np.allclose(v.y_block, u.y_block)

    def test_hand_example(self):
        p = bsh_problem_new([[2.5]], [[-1.5]])
        v = omega_apply(p, PhiBlockMatrix([[1.0]], [[0.0]]))
        assert np.allclose(v.x_block, [[2.5]])
        assert np.allclose(v.y_block, [[-1.5]])

    def test_matches_dense_product(self):
        rng = np.random.default_rng(1)
        a = rand_complex(rng, (4, 4))
        a = 0.5 * (a + a.conj().T)
        b = rand_complex(rng, (4, 4))
        b = 0.5 * (b + b.T)
        p = bsh_problem_new(a, b)
        u = rand_phi(rng, 4, 2)
        got = phi_assemble(omega_apply(p, u))
        want = omega_assemble(p) @ phi_assemble(u)
        assert np.max(np.abs(got - want)) <= 1e-14 * np.max(np.abs(want))

    def test_dimension_mismatch(self):
        p = bsh_problem_new(np.eye(3), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            omega_apply(p, PhiBlockMatrix(np.eye(2), np.zeros((2, 2))))


class TestCGram:
    def test_identity_gram(self):
        u = PhiBlockMatrix(np.eye(2), np.zeros((2, 2)))
        g = c_gram(u, u)
        assert np.allclose(g.assemble(), c_matrix(2))

    def test_hand_example(self):
        u = PhiBlockMatrix([[2.0]], [[1.0]])
        g = c_gram(u, u)
        assert np.allclose(g.g1, [[3.0]])
        assert np.allclose(g.g2, [[0.0]])

    def test_matches_dense_triple_product(self):
        rng = np.random.default_rng(2)
        u = rand_phi(rng, 3, 2)
        v = rand_phi(rng, 3, 2)
        got = c_gram(u, v).assemble()
        want = phi_assemble(u).conj().T @ c_matrix(3) @ phi_assemble(v)
        assert np.max(np.abs(got - want)) <= 1e-14 * np.max(np.abs(want))

    def test_self_gram_symmetries(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            u = rand_phi(rng, 8, 3)
            g = c_gram(u, u)
            scale = 1e-13 * np.linalg.norm(phi_assemble(u), 2) ** 2
            assert np.max(np.abs(g.g1 - g.g1.conj().T)) <= scale
            assert np.max(np.abs(g.g2 + g.g2.T)) <= scale


class TestOmegaGram:
    def _random_problem(self, rng, n):
        a = rand_complex(rng, (n, n))
        a = 0.5 * (a + a.conj().T) + 3 * n * np.eye(n)
        b = rand_complex(rng, (n, n))
        return bsh_problem_new(a, 0.5 * (b + b.T))

    def test_identity_block_projection(self):
        rng = np.random.default_rng(4)
        p = self._random_problem(rng, 3)
        eye = PhiBlockMatrix(np.eye(3), np.zeros((3, 3)))
        assert np.allclose(omega_gram(p, eye, eye).assemble(), omega_assemble(p))

    def test_identity_omega_formula(self):
        rng = np.random.default_rng(5)
        p = bsh_problem_new(np.eye(4), np.zeros((4, 4)))
        u = rand_phi(rng, 4, 2)
        g = omega_gram(p, u, u)
        k1_want = u.x_block.conj().T @ u.x_block + u.y_block.conj().T @ u.y_block
        assert np.allclose(g.k1, k1_want)
        want = phi_assemble(u).conj().T @ phi_assemble(u)
        assert np.max(np.abs(g.assemble() - want)) <= 1e-13 * np.max(np.abs(want))

    def test_matches_dense_and_symmetries(self):
        rng = np.random.default_rng(6)
        p = self._random_problem(rng, 6)
        u = rand_phi(rng, 6, 2)
        g = omega_gram(p, u, u)
        want = phi_assemble(u).conj().T @ omega_assemble(p) @ phi_assemble(u)
        assert np.max(np.abs(g.assemble() - want)) <= 1e-13 * np.max(np.abs(want))
        scale = 1e-13 * np.max(np.abs(want))
        assert np.max(np.abs(g.k1 - g.k1.conj().T)) <= scale
        assert np.max(np.abs(g.k2 - g.k2.T)) <= scale

    def test_eigenvector_projection_diagonalizes(self):
        from bseig.dense import dense_bse_solve

        p = bsh_problem_new([[2.5, 0.0], [0.0, 3.0]], [[-1.5, 0.0], [0.0, 0.5]])
        spec = dense_bse_solve(p)
        g = omega_gram(p, spec.eigvecs, spec.eigvecs)
        assert np.allclose(np.diag(g.k1).real, spec.lambda_plus, atol=1e-12)
        assert np.max(np.abs(g.k1 - np.diag(np.diag(g.k1)))) <= 1e-12
        assert np.max(np.abs(g.k2)) <= 1e-12


class TestPhiProduct:
    def test_identity_factor(self):
        rng = np.random.default_rng(7)
        u = rand_phi(rng, 4, 2)
        v = PhiBlockMatrix(np.eye(2), np.zeros((2, 2)))
        w = phi_product(u, v)
        assert np.allclose(w.x_block, u.x_block)
        assert np.allclose(w.y_block, u.y_block)

    def test_hand_example(self):
        u = PhiBlockMatrix([[2.0]], [[1.0]])
        v = PhiBlockMatrix([[1.0]], [[-1.0]])
        w = phi_product(u, v)
        assert np.allclose(w.x_block, [[1.0]])
        assert np.allclose(w.y_block, [[-1.0]])

    def test_matches_dense_chain(self):
        rng = np.random.default_rng(8)
        u = rand_phi(rng, 5, 3)
        v = rand_phi(rng, 3, 2)
        w = rand_phi(rng, 2, 2)
        got = phi_assemble(phi_product(phi_product(u, v), w))
        want = phi_assemble(u) @ phi_assemble(v) @ phi_assemble(w)
        assert np.max(np.abs(got - want)) <= 1e-13 * np.max(np.abs(want))

    def test_inner_dimension_mismatch(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            phi_product(rand_phi(rng, 4, 2), rand_phi(rng, 3, 2))

    def test_adjoint_is_structured_transpose(self):
        rng = np.random.default_rng(10)
        u = rand_phi(rng, 4, 2)
        assert np.array_equal(phi_assemble(phi_adjoint(u)),
                              phi_assemble(u).conj().T)

    def test_concat_matches_dense_stack(self):
        rng = np.random.default_rng(11)
        u, v = rand_phi(rng, 4, 2), rand_phi(rng, 4, 1)
        got = phi_assemble(phi_concat(u, v))
        ua, va = phi_assemble(u), phi_assemble(v)
        want = np.block([[ua[:, :2], va[:, :1], ua[:, 2:], va[:, 1:]]])
        assert np.array_equal(got, want)


class TestEstimateOmegaNorm:
    def test_identity_exact(self):
        p = bsh_problem_new(np.eye(5), np.zeros((5, 5)))
        assert estimate_omega_norm(p, 3, seed=7) == 1.0

    def test_scaled_identity(self):
        p = bsh_problem_new(3.0 * np.eye(5), np.zeros((5, 5)))
        assert estimate_omega_norm(p, 3, seed=7) == pytest.approx(3.0, abs=5e-15)

    def test_random_problem_bracket(self):
        from bseig.problems import gen_random_definite_bsh

        p = gen_random_definite_bsh(8, seed=1).problem
        exact = np.linalg.norm(omega_assemble(p), 2)
        est = estimate_omega_norm(p, 4, seed=3)
        assert exact / np.sqrt(2 * 8) * (1 - 1e-12) <= est <= exact * (1 + 1e-12)

    def test_cache_and_determinism(self):
        p = bsh_problem_new(np.eye(4), np.zeros((4, 4)))
        first = estimate_omega_norm(p, 2, seed=5)
        assert estimate_omega_norm(p, 2, seed=5) == first
        assert (2, 5) in p._norm_cache

    def test_concurrent_fill_consistent(self):
        from concurrent.futures import ThreadPoolExecutor

        from bseig.problems import gen_random_definite_bsh

        p = gen_random_definite_bsh(6, seed=2).problem
        with ThreadPoolExecutor(8) as pool:
            vals = list(pool.map(lambda _: estimate_omega_norm(p, 3, seed=9),
                                 range(32)))
        assert len(set(vals)) == 1


class TestStructureClosure:
    def test_random_closure_sweep(self):
        rng = np.random.default_rng(12)
        for n in (4, 16, 64):
            a = rand_complex(rng, (n, n))
            a = 0.5 * (a + a.conj().T) + 4 * n * np.eye(n)
            b = rand_complex(rng, (n, n))
            p = bsh_problem_new(a, 0.5 * (b + b.T))
            u = rand_phi(rng, n, 3)
            v = rand_phi(rng, n, 3)
            om = omega_assemble(p)
            cn = c_matrix(n)
            ua, va = phi_assemble(u), phi_assemble(v)
            checks = [
                (phi_assemble(omega_apply(p, u)), om @ ua),
                (c_gram(u, v).assemble(), ua.conj().T @ cn @ va),
                (omega_gram(p, u, v).assemble(), ua.conj().T @ om @ va),
            ]
            small = rand_phi(rng, 3, 2)
            checks.append(
                (phi_assemble(phi_product(u, small)), ua @ phi_assemble(small))
            )
            for got, want in checks:
                denom = max(np.max(np.abs(want)), 1e-300)
                assert np.max(np.abs(got - want)) <= 1e-13 * denom

    def test_eigenvalue_pairing(self):
        from bseig.problems import gen_random_definite_bsh

        for seed in range(5):
            p = gen_random_definite_bsh(12, seed=seed).problem
            h = c_matrix(12) @ omega_assemble(p)
            lam = np.sort(np.linalg.eigvals(h).real)
            assert np.max(np.abs(lam + lam[::-1])) <= 1e-12 * np.max(np.abs(lam))

    def test_omega_apply_dense_matches_assembly(self):
        rng = np.random.default_rng(13)
        from bseig.problems import gen_random_definite_bsh

        p = gen_random_definite_bsh(5, seed=3).problem
        g = rand_complex(rng, (10, 3))
        want = omega_assemble(p) @ g
        assert np.allclose(omega_apply_dense(p, g), want, atol=1e-13 * np.max(np.abs(want)))
