"""Hankel construction, excitation checks, and trajectory validation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddmpc.hankel import (as_sequence, build_hankel,
                          persistence_order_check, validate_trajectory)
from ddmpc.plant import random_lti

from conftest import pe_input
from oracles import realization_residual


class TestBuildHankel:
    def test_scalar_depth_two(self):
        H = build_hankel([1.0, 2.0, 3.0, 4.0], 2)
        np.testing.assert_allclose(H, [[1, 2, 3], [2, 3, 4]])

    def test_full_depth_single_column(self):
        s = np.arange(5.0)
        H = build_hankel(s, 5)
        assert H.shape == (5, 1)
        np.testing.assert_allclose(H[:, 0], s)

    def test_two_channel(self):
        s = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        H = build_hankel(s, 2)
        assert H.shape == (4, 2)
        np.testing.assert_allclose(H, [[1, 0], [0, 1], [0, 1], [1, 1]])

    def test_depth_exceeds_length(self):
        with pytest.raises(ValueError):
            build_hankel([1.0, 2.0], 3)

    def test_row_count_and_columns(self, rng):
        s = rng.normal(size=(17, 3))
        H = build_hankel(s, 6)
        assert H.shape == (3 * 6, 17 - 6 + 1)

    @given(length=st.integers(2, 20), depth=st.integers(1, 20),
           dim=st.integers(1, 3), seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_shift_structure(self, length, depth, dim, seed):
        # block (i, j) == block (i-1, j+1) for every valid pair
        if depth > length:
            return
        s = np.random.default_rng(seed).normal(size=(length, dim))
        H = build_hankel(s, depth)
        cols = length - depth + 1
        for i in range(1, depth):
            for j in range(cols - 1):
                np.testing.assert_array_equal(
                    H[i * dim:(i + 1) * dim, j],
                    H[(i - 1) * dim:i * dim, j + 1])

    def test_blocks_match_source(self, rng):
        s = rng.normal(size=(9, 2))
        H = build_hankel(s, 4)
        for i in range(4):
            for j in range(6):
                np.testing.assert_array_equal(H[2 * i:2 * i + 2, j],
                                              s[i + j])


class TestAsSequence:
    def test_scalar_list_becomes_column(self):
        s = as_sequence([1, 2, 3])
        assert s.shape == (3, 1)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            as_sequence(np.zeros((0, 2)))


class TestPersistenceCheck:
    def test_constant_not_pe(self):
        report = persistence_order_check(np.ones(10), 2)
        assert not report.is_pe
        assert report.computed_rank == 1
        assert report.required_rank == 2

    def test_impulse_train_pe_order_two(self):
        s = np.array([1.0, 0, 0, 1, 0, 0, 1, 0])
        report = persistence_order_check(s, 2)
        assert report.is_pe

    def test_excitation_signal_pe_at_design_order(self):
        # uniform two-channel excitation, the order used by the
        # sliding-window controller (horizon plus twice the order)
        for seed in range(3):
            rng = np.random.default_rng(seed)
            u = rng.uniform(20.0, 30.0, (150, 2))
            report = persistence_order_check(u, 35 + 2 * 3)
            assert report.is_pe
            assert report.required_rank == 2 * 41

    def test_too_short_data_reports_reason(self):
        # need (d+1)*order - 1 samples for the rank to be attainable
        report = persistence_order_check(np.arange(4.0), 3)
        assert not report.is_pe
        assert report.reason

    @given(order=st.integers(2, 6), seed=st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_pe_monotone_in_order(self, order, seed):
        rng = np.random.default_rng(seed)
        u = rng.uniform(-1, 1, (40, 1))
        if persistence_order_check(u, order).is_pe:
            for lower in range(1, order):
                assert persistence_order_check(u, lower).is_pe

    def test_rank_invariant_under_column_reorder(self, rng):
        u = rng.uniform(-1, 1, (30, 2))
        H = build_hankel(u, 5)
        base = np.linalg.matrix_rank(H, tol=1e-9 * np.linalg.norm(H, 2))
        perm = rng.permutation(H.shape[1])
        shuffled = np.linalg.matrix_rank(
            H[:, perm], tol=1e-9 * np.linalg.norm(H, 2))
        assert base == shuffled

    def test_report_carries_smallest_singular_value(self, rng):
        u = rng.uniform(-1, 1, (30, 2))
        report = persistence_order_check(u, 4)
        assert report.smallest_retained_singular_value > 0


class TestValidateTrajectory:
    def test_contiguous_window_validates(self, pe_data):
        u, y = pe_data
        result = validate_trajectory(u, y, u[40:52], y[40:52])
        assert result.is_trajectory
        assert result.residual < 1e-10

    def test_fresh_trajectory_validates(self, small_lti, rng):
        u, y = pe_input(rng, 120, 2), None
        y, _ = small_lti.simulate(u)
        u_test = pe_input(rng, 10, 2)
        y_test, _ = small_lti.simulate(u_test, x0=rng.normal(size=3))
        result = validate_trajectory(u, y, u_test, y_test)
        assert result.is_trajectory
        assert result.residual < 1e-8

    def test_perturbed_sample_rejected(self, pe_data):
        u, y = pe_data
        y_test = y[40:52].copy()
        y_test[5, 0] += 1.0
        result = validate_trajectory(u, y, u[40:52], y_test)
        assert not result.is_trajectory
        assert result.residual > 1e-3

    def test_alpha_reproduces_window(self, pe_data):
        u, y = pe_data
        L = 8
        result = validate_trajectory(u, y, u[20:20 + L], y[20:20 + L])
        Hu = build_hankel(u, L)
        Hy = build_hankel(y, L)
        np.testing.assert_allclose(Hu @ result.alpha, u[20:20 + L].ravel(),
                                   atol=1e-8)
        np.testing.assert_allclose(Hy @ result.alpha, y[20:20 + L].ravel(),
                                   atol=1e-8)

    def test_dimension_mismatch_rejected(self, pe_data):
        u, y = pe_data
        with pytest.raises(ValueError):
            validate_trajectory(u, y, u[:10, :1], y[:10])


class TestSpanBothDirections:
    """Every simulated window is in the Hankel span, and every Hankel
    combination is realizable by some initial state."""

    @pytest.mark.parametrize("seed", range(8))
    def test_simulated_windows_in_span(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        sys_ = random_lti(n, m, p, spectral_radius_max=0.9, seed=seed)
        L = 6
        length = max((m + 1) * (L + n) - 1 + 10, 60)
        u = rng.uniform(-1, 1, (length, m))
        y, _ = sys_.simulate(u, x0=rng.normal(size=n))
        u_test = rng.uniform(-1, 1, (L, m))
        y_test, _ = sys_.simulate(u_test, x0=rng.normal(size=n))
        result = validate_trajectory(u, y, u_test, y_test)
        assert result.residual < 1e-8

    @pytest.mark.parametrize("seed", range(8))
    def test_hankel_combinations_realizable(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        sys_ = random_lti(n, m, p, spectral_radius_max=0.9, seed=seed)
        L = 6
        u = rng.uniform(-1, 1, (80, m))
        y, _ = sys_.simulate(u, x0=rng.normal(size=n))
        alpha = rng.normal(size=80 - L + 1)
        u_bar = (build_hankel(u, L) @ alpha).reshape(L, m)
        y_bar = (build_hankel(y, L) @ alpha).reshape(L, p)
        assert realization_residual(sys_, u_bar, y_bar) < 1e-6
