import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilcmbk.convergence import (
    TransferOperands,
    assemble_G,
    assemble_Gm,
    block_a,
    block_b,
    bound_eq33,
    certify,
    gm_norm,
    lyapunov,
    row_sum_closed_form,
    row_sum_exact,
)
from ilcmbk.numerics import inf_norm


def scalar_ops(n, alpha0, c, d=None):
    d = c if d is None else d
    return TransferOperands([[alpha0]], tuple([[c]] for _ in range(n)), tuple([[d]] for _ in range(n)))


def random_ops(rng, n, p=3):
    a0 = rng.normal(scale=0.3, size=(p, p))
    c = tuple(rng.normal(scale=0.3, size=(p, p)) for _ in range(n))
    d = tuple(rng.normal(scale=0.3, size=(p, p)) for _ in range(n))
    return TransferOperands(a0, c, d)


def naive_G(ops):
    """Direct block-by-block assembly from the definitions, no batching."""
    n, p = ops.n, ops.block
    G = np.zeros((n * p, n * p))
    for j in range(1, n + 1):
        for i in range(1, j + 1):
            if i == j:
                blk = block_a(ops.alpha0, j)
            else:
                blk = block_b(ops.alpha0, i) @ ops.c[i - 1]
                for l in range(i + 1, j):
                    blk = blk @ ops.d[l - 1]
            r, q = n - j, n - i
            G[r * p : (r + 1) * p, q * p : (q + 1) * p] = blk
    return G


class TestBlocks:
    def test_zero_alpha(self):
        for i in range(5):
            np.testing.assert_array_equal(block_a(np.zeros((3, 3)), i), np.eye(3))

    def test_scalar_sum(self):
        assert block_a([[0.5]], 2)[0, 0] == pytest.approx(0.75)
        assert block_b([[0.5]], 1)[0, 0] == pytest.approx(0.5)

    def test_b_identity(self):
        rng = np.random.default_rng(1)
        a0 = rng.normal(size=(3, 3))
        for i in range(1, 6):
            expect = -sum(np.linalg.matrix_power(-a0, l) for l in range(1, i + 1))
            np.testing.assert_allclose(block_b(a0, i), expect, atol=1e-12)
            np.testing.assert_allclose(block_b(a0, i), np.eye(3) - block_a(a0, i), atol=1e-12)


class TestAssembly:
    def test_single_block(self):
        ops = scalar_ops(1, 0.5, 0.3)
        np.testing.assert_allclose(assemble_G(ops), [[0.5]])

    def test_two_by_two(self):
        ops = scalar_ops(2, 0.5, 0.3, d=123.0)
        np.testing.assert_allclose(assemble_G(ops), [[0.75, 0.15], [0.0, 0.5]], atol=1e-15)
        np.testing.assert_allclose(assemble_Gm(ops), [[0.75, 0.15], [0.0, 0.5]], atol=1e-15)

    def test_matches_naive(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 3, 6):
            ops = random_ops(rng, n)
            np.testing.assert_allclose(assemble_G(ops), naive_G(ops), atol=1e-12)

    def test_lower_triangle_zero(self):
        ops = random_ops(np.random.default_rng(5), 6)
        G, p = assemble_G(ops), ops.block
        for r in range(ops.n):
            for q in range(r):
                assert not G[r * p : (r + 1) * p, q * p : (q + 1) * p].any()

    def test_gm_is_block_norms(self):
        ops = random_ops(np.random.default_rng(6), 5)
        G, Gm, p = assemble_G(ops), assemble_Gm(ops), ops.block
        for r in range(ops.n):
            for q in range(ops.n):
                assert Gm[r, q] == pytest.approx(inf_norm(G[r * p : (r + 1) * p, q * p : (q + 1) * p]))
        assert (Gm >= 0).all()

    def test_all_zero_blocks(self):
        ops = TransferOperands(np.zeros((3, 3)), (np.zeros((3, 3)),) * 3, (np.zeros((3, 3)),) * 3)
        # a_i = I even when alpha0 = 0, so only the off-diagonal part vanishes
        np.testing.assert_array_equal(assemble_Gm(ops), np.eye(3))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            TransferOperands(np.eye(2), (), ())

    def test_rejects_shape_mix(self):
        with pytest.raises(ValueError):
            TransferOperands(np.eye(2), (np.eye(3),), (np.eye(2),))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 10))
    def test_norm_domination(self, seed, n):
        ops = random_ops(np.random.default_rng(seed), n)
        assert inf_norm(assemble_G(ops)) <= gm_norm(ops) + 1e-9


class TestCertify:
    def test_identity_boundary(self):
        ops = TransferOperands(np.zeros((3, 3)), (np.zeros((3, 3)),) * 4, (np.zeros((3, 3)),) * 4)
        cert = certify(ops)
        assert cert.norm_G == 1.0 and cert.norm_Gm == 1.0
        assert cert.passes is False
        assert cert.bound_eq33 is None  # n_alpha = 0 is outside the closed form's domain

    def test_reports_bound(self):
        cert = certify(scalar_ops(1, 0.5, 0.4))
        assert cert.bound_eq33 == pytest.approx(8 / 9)
        assert cert.norm_Gm == pytest.approx(0.5)
        assert cert.passes

    def test_large_coupling_has_no_bound(self):
        assert certify(scalar_ops(3, 0.5, 1.5)).bound_eq33 is None

    def test_json(self):
        doc = certify(scalar_ops(2, 0.5, 0.3)).to_json()
        assert '"passes": true' in doc and doc.endswith("\n")

    @settings(max_examples=300, deadline=None)
    @given(
        n=st.integers(1, 10),
        n_alpha=st.floats(1e-3, 0.5 - 2e-6),
        frac=st.floats(0.0, 1.0),
    )
    def test_passes_under_ordering(self, n, n_alpha, frac):
        # n_alpha < n_cu < 1/2, kept 1e-6 off both edges: at the threshold the
        # margin below 1 drops under double precision
        lo, hi = n_alpha + 1e-6, 0.5 - 1e-6
        n_cu = lo + frac * (hi - lo)
        assert certify(scalar_ops(n, n_alpha, n_cu)).passes


class TestBound:
    def test_example(self):
        assert bound_eq33(0.5, 0.4) == pytest.approx(0.8888888888888888, abs=1e-15)

    def test_threshold(self):
        for na in (0.1, 0.5, 0.9, 3.0):
            assert bound_eq33(na, 0.5) == 1.0

    def test_small_coupling_limit(self):
        assert bound_eq33(0.5, 1e-12) == pytest.approx(1 / 1.5)

    @pytest.mark.parametrize("na,nc", [(0.0, 0.3), (0.5, 1.0), (0.5, 0.0), (0.5, 1.2)])
    def test_domain(self, na, nc):
        with pytest.raises(ValueError):
            bound_eq33(na, nc)

    def test_row_sum_exact_matches_gm(self):
        for n in range(1, 11):
            for na in np.linspace(0.1, 0.9, 5):
                for nc in np.linspace(0.05, 0.45, 5):
                    gm = assemble_Gm(scalar_ops(n, na, nc))
                    for r in range(n):
                        assert gm[r].sum() == pytest.approx(row_sum_exact(na, nc, n - r), abs=1e-12)

    def test_closed_form_agrees_on_first_row(self):
        # the closed form and the direct sum coincide for i = 1
        for na in (0.2, 0.5, 0.8):
            for nc in (0.1, 0.3):
                assert row_sum_closed_form(na, nc, 1) == pytest.approx(row_sum_exact(na, nc, 1), abs=1e-12)


class TestLyapunov:
    def test_zero(self):
        seq = lyapunov([0.0, 0.0, 0.0])
        assert seq.V == (0.0, 0.0, 0.0) and seq.monotone_from == 0

    def test_decreasing(self):
        assert lyapunov([3.0, 2.0, 1.0]).monotone_from == 0

    def test_scan(self):
        seq = lyapunov([2.0, math.sqrt(5), math.sqrt(3), math.sqrt(2)])
        np.testing.assert_allclose(seq.V, [4, 5, 3, 2])
        assert seq.monotone_from == 1

    def test_late_rise(self):
        assert lyapunov([4, 3, 2, 2.5, 1]).monotone_from == 3

    def test_round_off_allowance(self):
        vals = [1.0, 0.1, 1e-16, 2e-16, 1e-16]
        assert lyapunov(vals).monotone_from == 3
        assert lyapunov(vals, rtol=1e-12).monotone_from == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            lyapunov([])
