"""Filtration valuations against a lattice-chain oracle, the torus
projection and its characterizing properties, the grading derivation, and
the graded complement bases."""

import math

import numpy as np
import pytest

from parastrat.laurent import (LaurentMatrix, OneForm, derive, max_abs_diff,
                               pair)
from parastrat.parahoric import (ParahoricContext, TorusElement,
                                 canonical_framing, grading_derivation,
                                 project_to_torus, random_graded_element,
                                 random_unit_gauge, same_framing_coset,
                                 torus_basis_element, valuation)

TOL = 1e-12


def chain_valuation_oracle(ctx, x, lo=-8, hi=8):
    """Largest r with x L^i inside L^{i+r}, testing membership against the
    explicit standard chain L^i = sum_j z^{floor((i + pos_j)/e)} o e_j."""
    def col_threshold(i, j):
        return math.floor((i + ctx.pos[j]) / ctx.e)

    def admits(r):
        for i in range(ctx.e):
            for j in range(ctx.n):
                for k in range(ctx.n):
                    ent = x.entry(k, j)
                    for exp, c in ent.coeffs.items():
                        if abs(c) > TOL and exp + col_threshold(i, j) \
                                < col_threshold(i + r, k):
                            return False
        return True

    best = None
    for r in range(lo, hi + 1):
        if admits(r):
            best = r
    return best


class TestValuation:
    def test_identity(self):
        ctx = ParahoricContext(2, 2)
        assert valuation(ctx, LaurentMatrix.identity(2)) == 0

    def test_elementary_matrices_match_chain_oracle(self):
        ctx = ParahoricContext(2, 2)
        e12 = LaurentMatrix(2, {0: np.array([[0, 1.0], [0, 0]])})
        e21 = LaurentMatrix(2, {0: np.array([[0, 0], [1.0, 0]])})
        assert valuation(ctx, e12) == 1 == chain_valuation_oracle(ctx, e12)
        assert valuation(ctx, e21) == -1 == chain_valuation_oracle(ctx, e21)

    def test_uniformizer_powers(self):
        ctx = ParahoricContext(2, 2)
        for k in range(-3, 4):
            w = ctx.uniformizer_power(k)
            assert valuation(ctx, w) == k
            assert chain_valuation_oracle(ctx, w) == k

    def test_random_against_oracle(self):
        rng = np.random.default_rng(0)
        for n, e in [(2, 2), (3, 3), (2, 1), (4, 2)]:
            ctx = ParahoricContext(n, e)
            for lvl in (-3, 0, 2):
                x = random_graded_element(ctx, lvl, rng, depth=3)
                assert valuation(ctx, x) == lvl == chain_valuation_oracle(ctx, x)

    def test_zero_matrix_sentinel(self):
        ctx = ParahoricContext(2, 2)
        assert valuation(ctx, LaurentMatrix.zeros(2)) == math.inf

    def test_multiplicativity(self):
        rng = np.random.default_rng(1)
        ctx = ParahoricContext(2, 2)
        for _ in range(20):
            la, lb = rng.integers(-2, 3), rng.integers(-2, 3)
            x = random_graded_element(ctx, la, rng)
            y = random_graded_element(ctx, lb, rng)
            v = valuation(ctx, x @ y)
            assert v == math.inf or v >= la + lb
        # equality on unit-leading inputs
        for k in (-2, 0, 1):
            u = ctx.uniformizer_power(k) @ random_unit_gauge(ctx, rng)
            w = ctx.uniformizer_power(1 - k) @ random_unit_gauge(ctx, rng)
            assert valuation(ctx, u @ w) == 1


def torus_projection_oracle(ctx, x, band=6):
    """Linear solve of the pairing characterization over an explicit torus
    basis (independent of the block-averaging implementation)."""
    nu = OneForm.dz_over_z()
    basis = [(blk, i) for blk in range(ctx.nblocks) for i in range(-band, band + 1)]
    gram = np.zeros((len(basis), len(basis)), dtype=complex)
    rhs = np.zeros(len(basis), dtype=complex)
    embeds = {bi: torus_basis_element(ctx, *bi).embed() for bi in basis}
    for u, bu in enumerate(basis):
        dual = torus_basis_element(ctx, bu[0], -bu[1]).embed()
        rhs[u] = pair(dual, x, nu)
        for v, bv in enumerate(basis):
            gram[u, v] = pair(dual, embeds[bv], nu)
    sol = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return {bi: sol[u] for u, bi in enumerate(basis)}


class TestTorusProjection:
    def test_identity_on_torus(self):
        ctx = ParahoricContext(2, 2)
        for k in (-2, 0, 3):
            w = ctx.uniformizer_power(k)
            p = project_to_torus(ctx, w)
            assert max_abs_diff(p.embed(), w.truncate(hi=p.embed().hi)) < TOL

    def test_traceless_diagonal_projects_to_zero(self):
        ctx = ParahoricContext(2, 2)
        d = LaurentMatrix(2, {0: np.diag([1.0, -1.0])})
        p = project_to_torus(ctx, d)
        assert p.max_abs() < TOL
        oracle = torus_projection_oracle(ctx, d)
        assert max(abs(v) for v in oracle.values()) < 1e-9

    def test_against_linear_solve_oracle(self):
        rng = np.random.default_rng(2)
        ctx = ParahoricContext(4, 2)
        x = random_graded_element(ctx, -2, rng, depth=5)
        p = project_to_torus(ctx, x)
        oracle = torus_projection_oracle(ctx, x)
        for (blk, i), val in oracle.items():
            assert abs(p.coeff(i)[blk] - val) < 1e-9

    def test_linearity_in_torus_summand(self):
        rng = np.random.default_rng(3)
        ctx = ParahoricContext(2, 2)
        x = random_graded_element(ctx, -1, rng)
        t = TorusElement(ctx, {-1: [0.3 + 1j], 2: [-0.5]})
        lhs = project_to_torus(ctx, x + t.embed())
        rhs = project_to_torus(ctx, x)
        diff = lhs - rhs
        for i in (-1, 2):
            assert np.max(np.abs(diff.coeff(i) - t.coeff(i))) < TOL

    def test_pairing_characterization(self):
        rng = np.random.default_rng(4)
        for n, e in [(2, 2), (3, 1), (4, 2)]:
            ctx = ParahoricContext(n, e)
            x = random_graded_element(ctx, -2, rng, depth=5)
            p = project_to_torus(ctx, x).embed()
            for blk in range(ctx.nblocks):
                for i in (-2, 0, 1):
                    y = torus_basis_element(ctx, blk, i).embed()
                    for nu in (OneForm.dz_over_z(), OneForm.dz()):
                        assert abs(pair(y, x, nu) - pair(y, p, nu)) < TOL

    def test_preserves_filtration_level(self):
        rng = np.random.default_rng(5)
        ctx = ParahoricContext(4, 2)
        for lvl in (-2, 0, 3):
            x = random_graded_element(ctx, lvl, rng)
            p = project_to_torus(ctx, x).embed()
            v = valuation(ctx, p)
            assert v == math.inf or v >= lvl

    def test_idempotent_and_module_map(self):
        rng = np.random.default_rng(6)
        ctx = ParahoricContext(2, 2)
        x = random_graded_element(ctx, -1, rng, depth=5)
        p = project_to_torus(ctx, x)
        pp = project_to_torus(ctx, p.embed())
        assert max_abs_diff(pp.embed(), p.embed().truncate(hi=pp.embed().hi)) < TOL
        t = TorusElement(ctx, {1: [0.8 - 0.1j]}).embed()
        lhs = project_to_torus(ctx, t @ x).embed()
        rhs = (t @ project_to_torus(ctx, x).embed())
        assert max_abs_diff(lhs, rhs) < 1e-10


class TestGradingDerivation:
    def test_kills_block_scalars(self):
        ctx = ParahoricContext(2, 2)
        t0 = TorusElement.block_scalar(ctx, [1.5 - 1j])
        assert grading_derivation(ctx, t0).max_abs() == 0.0

    def test_scales_inverse_uniformizer(self):
        ctx = ParahoricContext(2, 2)
        t = TorusElement(ctx, {-1: [2.0]})
        out = grading_derivation(ctx, t)
        assert np.max(np.abs(out.coeff(-1) - np.array([-1.0]))) == 0.0

    def test_matrix_side_oracle(self):
        rng = np.random.default_rng(7)
        for n, e in [(2, 2), (4, 2), (3, 1)]:
            ctx = ParahoricContext(n, e)
            coeffs = {i: rng.standard_normal(ctx.nblocks)
                      + 1j * rng.standard_normal(ctx.nblocks) for i in range(-2, 3)}
            t = TorusElement(ctx, coeffs)
            h = LaurentMatrix.constant(ctx.norm_shift())
            lhs = derive(t.embed(), OneForm.dz_over_z()) - t.embed().commutator(h)
            rhs = grading_derivation(ctx, t).embed()
            assert max_abs_diff(lhs, rhs) < TOL


class TestComplementBasis:
    def test_rank_two_period_two_levels(self):
        ctx = ParahoricContext(2, 2)
        b0 = ctx.complement_basis(0)
        assert len(b0) == 1
        v = b0[0].coeff(0)
        assert abs(v[0, 0] + v[1, 1]) < TOL and abs(v[0, 1]) + abs(v[1, 0]) == 0.0
        assert len(ctx.complement_basis(1)) == 1

    def test_maximal_parahoric_off_diagonal(self):
        ctx = ParahoricContext(2, 1)
        basis = ctx.complement_basis(0)
        assert len(basis) == 2
        for b in basis:
            assert np.max(np.abs(np.diag(b.coeff(0)))) == 0.0

    def test_dimension_formula(self):
        for n, e in [(2, 2), (3, 3), (4, 2), (3, 1)]:
            ctx = ParahoricContext(n, e)
            for lvl in (-2, 0, 1, 3):
                assert len(ctx.complement_basis(lvl)) == n * n // e - n // e

    def test_orthogonal_to_torus(self):
        nu = OneForm.dz_over_z()
        for n, e in [(2, 2), (4, 2), (3, 1)]:
            ctx = ParahoricContext(n, e)
            for lvl in (-2, 0, 1, 2):
                for w in ctx.complement_basis(lvl):
                    for blk in range(ctx.nblocks):
                        y = torus_basis_element(ctx, blk, -lvl).embed()
                        assert abs(pair(y, w, nu)) < TOL


class TestUnipotentStructure:
    def test_shift_stabilized_by_pro_unipotent(self):
        rng = np.random.default_rng(8)
        for n, e in [(2, 2), (3, 3)]:
            ctx = ParahoricContext(n, e)
            h = LaurentMatrix.constant(ctx.norm_shift())
            for _ in range(10):
                u = random_unit_gauge(ctx, rng)
                from parastrat.laurent import invert
                moved = u @ h @ invert(u) - h
                v = valuation(ctx, moved)
                assert v == math.inf or v >= 1

    def test_framing_coset_round_trip(self):
        rng = np.random.default_rng(9)
        ctx = ParahoricContext(3, 3)
        g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        u = np.eye(3) + np.triu(rng.standard_normal((3, 3)), 1)
        assert same_framing_coset(ctx, u @ g, g)
        assert not same_framing_coset(ctx, g @ u, g) or np.allclose(g @ u, u @ g)
        ca, cb = canonical_framing(ctx, u @ g), canonical_framing(ctx, g)
        assert np.max(np.abs(ca - cb)) < 1e-9
