import numpy as np
import pytest

from bseig.core import (
    NeutralBreakdownError,
    PhiBlockMatrix,
    RankDeficientBasisError,
    UNIT_ROUNDOFF,
    bsh_problem_new,
    c_gram,
    c_matrix,
    omega_assemble,
    phi_assemble,
    phi_concat,
)
from bseig.ortho import (
    c_normalize_block,
    c_orthonormalize_cgs,
    c_project_against,
    omega_orthonormalize,
    orthogonality_loss,
    svqb_indefinite,
)

from conftest import rand_complex, rand_phi, rand_c_orthonormal


def c_loss_dense(u):
    g = c_gram(u, u).assemble()
    return np.max(np.abs(g - c_matrix(u.block_cols)))


class TestNormalizeBlock:
    def test_positive_gamma(self):
        out = c_normalize_block(PhiBlockMatrix([[2.0]], [[1.0]]))
        assert np.allclose(out.x_block, [[2 / np.sqrt(3)]])
        assert np.allclose(out.y_block, [[1 / np.sqrt(3)]])
        g = c_gram(out, out)
        assert abs(g.g1[0, 0] - 1.0) <= 1e-15

    def test_neutral_breakdown(self):
        with pytest.raises(NeutralBreakdownError):
            c_normalize_block(PhiBlockMatrix([[1.0]], [[1.0]]))

    def test_negative_gamma_swaps(self):
        out = c_normalize_block(PhiBlockMatrix([[1.0]], [[2.0]]))
        assert np.allclose(out.x_block, [[2 / np.sqrt(3)]])
        assert np.allclose(out.y_block, [[1 / np.sqrt(3)]])

    def test_swap_correctness_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rand_complex(rng, (5, 1), 0.5)
            y = rand_complex(rng, (5, 1))  # gamma usually negative
            block = PhiBlockMatrix(x, y)
            try:
                out = c_normalize_block(block)
            except NeutralBreakdownError:
                continue
            gamma = np.real(np.vdot(out.x_block, out.x_block)
                            - np.vdot(out.y_block, out.y_block))
            assert gamma == pytest.approx(1.0, abs=1e-12)


class TestProjectAgainst:
    def test_in_span_annihilated(self):
        rng = np.random.default_rng(1)
        basis = rand_c_orthonormal(rng, 6, 2)
        coeff = rand_phi(rng, 2, 1)
        from bseig.core import phi_product

        u = phi_product(basis, coeff)
        out = c_project_against(u, basis)
        scale = np.max(np.abs(phi_assemble(u)))
        assert np.max(np.abs(phi_assemble(out))) <= 1e-13 * scale

    def test_disjoint_support_unchanged(self):
        e1 = np.zeros((3, 1)); e1[0] = 1.0
        e2 = np.zeros((3, 1)); e2[1] = 1.0
        basis = PhiBlockMatrix(e1, np.zeros((3, 1)))
        u = PhiBlockMatrix(e2, np.zeros((3, 1)))
        out = c_project_against(u, basis)
        assert np.array_equal(phi_assemble(out), phi_assemble(u))

    def test_random_projection_orthogonal(self):
        rng = np.random.default_rng(2)
        basis = rand_c_orthonormal(rng, 4, 1)
        u = rand_phi(rng, 4, 2)
        out = c_project_against(u, basis)
        cross = c_gram(basis, out).assemble()
        assert np.max(np.abs(cross)) <= 1e-13 * np.max(np.abs(phi_assemble(u)))


class TestCgs:
    def test_orthonormal_input_unchanged(self):
        u = PhiBlockMatrix(np.eye(3), np.zeros((3, 3)))
        out, rep = c_orthonormalize_cgs(u)
        assert np.max(np.abs(phi_assemble(out) - phi_assemble(u))) == 0.0
        assert rep.loss_after <= 1e-15

    def test_random_basis_loss_bound(self):
        rng = np.random.default_rng(3)
        u = rand_phi(rng, 8, 3, y_scale=0.1)
        out, rep = c_orthonormalize_cgs(u, passes=2)
        norm_sq = np.linalg.norm(phi_assemble(out), 2) ** 2
        assert rep.loss_after <= 1e-13 * norm_sq
        assert rep.passes == 2

    def test_duplicate_columns_break_down(self):
        rng = np.random.default_rng(4)
        x = rand_complex(rng, (6, 1))
        y = rand_complex(rng, (6, 1), 0.3)
        u = PhiBlockMatrix(np.hstack([x, x]), np.hstack([y, y]))
        with pytest.raises(NeutralBreakdownError) as info:
            c_orthonormalize_cgs(u)
        assert info.value.block == 1

    def test_replacement_completes_rank_deficient(self):
        rng = np.random.default_rng(5)
        x = rand_complex(rng, (6, 1))
        y = rand_complex(rng, (6, 1), 0.3)
        u = PhiBlockMatrix(np.hstack([x, x]), np.hstack([y, y]))
        out, rep = c_orthonormalize_cgs(
            u, on_breakdown="replace", rng=np.random.default_rng(99)
        )
        assert out.block_cols == 2
        assert c_loss_dense(out) <= 1e-12
        assert 1 in rep.breakdown_blocks

    def test_idempotence(self):
        rng = np.random.default_rng(6)
        u = rand_c_orthonormal(rng, 8, 3)
        out, _ = c_orthonormalize_cgs(u)
        assert np.max(np.abs(phi_assemble(out) - phi_assemble(u))) <= 1e-13

    def test_loss_decreases_on_bad_input(self):
        rng = np.random.default_rng(7)
        u = rand_phi(rng, 8, 3)
        out, rep = c_orthonormalize_cgs(u)
        assert rep.loss_after <= rep.loss_before or rep.fallback_used


class TestSvqb:
    def test_hand_example(self):
        out, _ = svqb_indefinite(PhiBlockMatrix([[2.0]], [[1.0]]))
        assert np.allclose(out.x_block, [[2 / np.sqrt(3)]], atol=1e-15)
        assert np.allclose(out.y_block, [[1 / np.sqrt(3)]], atol=1e-15)

    def test_identity_fixed_up_to_signs(self):
        u = PhiBlockMatrix(np.eye(3), np.zeros((3, 3)))
        out, rep = svqb_indefinite(u)
        assert np.allclose(np.abs(out.x_block), np.eye(3), atol=1e-14)
        assert np.max(np.abs(out.y_block)) <= 1e-14
        assert rep.loss_after <= 1e-14

    def test_ill_conditioned_two_pass(self):
        rng = np.random.default_rng(8)
        base = rand_phi(rng, 16, 4, 0.3)
        x = base.x_block.copy()
        y = base.y_block.copy()
        for j in range(1, 4):  # near-collinear blocks: kappa(M_U) ~ 1e6
            x[:, j] = x[:, 0] + 1e-3 * rand_complex(rng, (16,))
            y[:, j] = y[:, 0] + 1e-3 * rand_complex(rng, (16,), 0.3)
        u = PhiBlockMatrix(x, y)
        out1, rep1 = svqb_indefinite(u, reorth=False)
        out2, rep2 = svqb_indefinite(u, reorth=True)
        norm_sq = np.linalg.norm(phi_assemble(out2), 2) ** 2
        assert rep2.loss_after <= 1e-12 * norm_sq
        assert rep1.loss_after > rep2.loss_after

    def test_singular_gram_breaks_down(self):
        rng = np.random.default_rng(9)
        x = rand_complex(rng, (6, 1))
        y = rand_complex(rng, (6, 1), 0.3)
        u = PhiBlockMatrix(np.hstack([x, x]), np.hstack([y, y]))
        with pytest.raises(NeutralBreakdownError):
            svqb_indefinite(u)

    def test_growth_factor_reported(self):
        out, rep = svqb_indefinite(PhiBlockMatrix([[2.0]], [[1.0]]))
        assert rep.growth_factor == pytest.approx(3.0, rel=1e-12)


class TestOmegaOrthonormalize:
    def test_euclidean_when_omega_identity(self):
        rng = np.random.default_rng(10)
        p = bsh_problem_new(np.eye(5), np.zeros((5, 5)))
        u = rand_phi(rng, 5, 2)
        out, _ = omega_orthonormalize(p, u)
        g = phi_assemble(out)
        assert np.max(np.abs(g.conj().T @ g - np.eye(4))) <= 1e-13

    def test_intra_block_step(self):
        p = bsh_problem_new(np.eye(1), np.zeros((1, 1)))
        out, _ = omega_orthonormalize(p, PhiBlockMatrix([[2.0]], [[1.0]]))
        g = phi_assemble(out)
        assert np.max(np.abs(g.conj().T @ g - np.eye(2))) <= 1e-14

    def test_rank_one_corner_requires_completion(self):
        # This block's two assembled columns coincide, so the strict path
        # reports rank deficiency and the completion path succeeds.
        p = bsh_problem_new(np.eye(2), np.zeros((2, 2)))
        u = PhiBlockMatrix(np.ones((2, 1)), np.ones((2, 1)))
        with pytest.raises(RankDeficientBasisError):
            omega_orthonormalize(p, u)
        out, rep = omega_orthonormalize(
            p, u, on_deficient="replace", rng=np.random.default_rng(0)
        )
        g = phi_assemble(out)
        assert np.max(np.abs(g.conj().T @ g - np.eye(2))) <= 1e-13
        assert rep.fallback_used

    def test_near_neutral_complex_blocks_succeed(self):
        # Omega-fallback totality: full-rank C-neutral input never breaks.
        rng = np.random.default_rng(11)
        from bseig.problems import gen_random_definite_bsh

        p = gen_random_definite_bsh(8, seed=0).problem
        for _ in range(25):
            x = rand_complex(rng, (8, 2))
            u = PhiBlockMatrix(x, x * (1 - 1e-12))  # C-neutral, full rank
            out, _ = omega_orthonormalize(p, u)
            loss, _ = orthogonality_loss(u=out, metric="omega", problem=p)
            assert loss <= 1e-10

    def test_projection_against_basis(self):
        rng = np.random.default_rng(12)
        from bseig.problems import gen_random_definite_bsh

        p = gen_random_definite_bsh(8, seed=1).problem
        basis, _ = omega_orthonormalize(p, rand_phi(rng, 8, 2))
        u = rand_phi(rng, 8, 1)
        out, _ = omega_orthonormalize(p, u, against=basis)
        full = phi_concat(basis, out)
        loss, _ = orthogonality_loss(full, metric="omega", problem=p)
        assert loss <= 1e-12


class TestOrthogonalityLoss:
    def test_exact_basis(self):
        u = PhiBlockMatrix(np.eye(2), np.zeros((2, 2)))
        loss, growth = orthogonality_loss(u, "c")
        assert loss == 0.0
        assert growth == pytest.approx(1.0)

    def test_normalized_block_growth(self):
        u = c_normalize_block(PhiBlockMatrix([[2.0]], [[1.0]]))
        loss, growth = orthogonality_loss(u, "c")
        assert loss <= 1e-15
        assert growth == pytest.approx(3.0, rel=1e-12)

    def test_near_neutral_flags_ill_conditioning(self):
        u = PhiBlockMatrix([[1.0]], [[1.0 - 1e-8]])
        _, growth = orthogonality_loss(u, "c")
        assert 1e8 < growth < 1e9

    def test_omega_metric(self):
        p = bsh_problem_new(np.eye(2), np.zeros((2, 2)))
        u = PhiBlockMatrix(np.eye(2), np.zeros((2, 2)))
        loss, growth = orthogonality_loss(u, "omega", p)
        assert loss <= 1e-15
        assert growth == 0.0

    def test_omega_requires_problem(self):
        u = PhiBlockMatrix(np.eye(2), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            orthogonality_loss(u, "omega")


class TestAbsorbedLossBound:
    def test_mini_sweep(self):
        # Reduced version of the 500-case acceptance population.
        rng = np.random.default_rng(13)
        checked = 0
        for seed in range(40):
            crng = np.random.default_rng(seed)
            x = rand_complex(crng, (16, 3))
            y = rand_complex(crng, (16, 3), 0.3)
            delta = 10 ** crng.uniform(-3, -1)
            for j in range(1, 3):
                x[:, j] = x[:, 0] + delta * rand_complex(crng, (16,))
            u = PhiBlockMatrix(x, y)
            _, rho = orthogonality_loss(u, "c")
            sv = np.linalg.svd(c_gram(u, u).assemble(), compute_uv=False)
            if rho > 1e4 or sv[0] / sv[-1] > 1e8:
                continue
            checked += 1
            for out, rep in (svqb_indefinite(u, reorth=True),
                             c_orthonormalize_cgs(u, passes=2)):
                bound = 100 * UNIT_ROUNDOFF * np.linalg.norm(phi_assemble(out), 2) ** 2
                assert rep.loss_after <= bound
        assert checked >= 30
