import math

import numpy as np
import pytest
from mpmath import e1 as mp_e1, mp
from scipy.integrate import quad

from spinctl.errors import DomainError, NotPSD
from spinctl.magnus import TimeGrid
from spinctl.noise import (
    CovarianceOperator,
    DiagonalConstant,
    OneOverF,
    UserMatrix,
    assemble_covariance,
    exp_integral_e1,
    kernel_eval,
    sample_paths,
)

mp.dps = 30

EULER_GAMMA = 0.5772156649015328606


class TestExpIntegral:
    def test_reference_value(self):
        # high-precision oracle: mpmath E1(1)
        assert exp_integral_e1(1.0) == pytest.approx(0.21938393439552028, rel=1e-13)

    def test_against_high_precision_series(self):
        xs = np.concatenate(
            [np.geomspace(1e-8, 1.0, 25), np.geomspace(1.0001, 600.0, 25)]
        )
        for x in xs:
            ref = float(mp_e1(x))
            assert abs(exp_integral_e1(float(x)) - ref) <= 1e-12 * abs(ref)

    def test_vectorized_matches_scalar(self):
        # batched continued fractions may run extra (converged) iterations,
        # so agreement is to rounding, not bitwise
        xs = np.array([0.01, 0.5, 1.0, 3.0, 40.0])
        got = exp_integral_e1(xs)
        for x, g in zip(xs, got):
            assert g == pytest.approx(exp_integral_e1(float(x)), rel=5e-15)

    def test_decays_to_zero_from_above(self):
        prev = exp_integral_e1(5.0)
        for x in (10.0, 50.0, 200.0, 700.0):
            cur = exp_integral_e1(x)
            assert 0.0 < cur < prev
            prev = cur

    def test_small_argument_expansion(self):
        # E1(x) + ln x + gamma = x + O(x^2)
        for x in (1e-3, 1e-4, 1e-5):
            rest = exp_integral_e1(x) + math.log(x) + EULER_GAMMA
            assert abs(rest - x) < x * x

    def test_domain_error(self):
        with pytest.raises(DomainError):
            exp_integral_e1(0.0)
        with pytest.raises(DomainError):
            exp_integral_e1(-1.0)


class TestKernelEval:
    def test_zero_lag_closed_form(self, paper_kernel):
        got = kernel_eval(paper_kernel, 0.0)
        assert got[0, 0] == pytest.approx(8.0 * math.log(200.0), rel=1e-14)
        assert np.all(got[1:, :] == 0.0) and np.all(got[:, 1:] == 0.0)

    def test_closed_form_vs_adaptive_quadrature(self, paper_kernel):
        for s in np.linspace(0.01, 1.0, 20):
            ref = 8.0 * quad(
                lambda g: math.exp(-g * s) / g, 0.1, 20.0, epsrel=1e-13, limit=200
            )[0]
            assert kernel_eval(paper_kernel, float(s))[0, 0] == pytest.approx(ref, rel=1e-8)

    def test_monotone_decreasing(self, paper_kernel):
        vals = [kernel_eval(paper_kernel, s)[0, 0] for s in np.linspace(0.0, 2.0, 40)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_long_lag_decay(self, paper_kernel):
        # gamma_lo * s >> 1 kills every mode
        assert kernel_eval(paper_kernel, 400.0)[0, 0] < 1e-12

    def test_symmetry(self, paper_kernel):
        m = kernel_eval(paper_kernel, 0.37)
        np.testing.assert_array_equal(m, m.T)

    def test_rotated_axis(self):
        k = OneOverF(2.0, 0.1, 10.0, axis=(1.0, 1.0, 0.0))
        m = kernel_eval(k, 0.2)
        a = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)
        np.testing.assert_allclose(m, m[0, 0] / a[0] ** 2 * np.outer(a, a), atol=1e-12)

    def test_cutoff_order_enforced(self):
        with pytest.raises(ValueError):
            OneOverF(1.0, 5.0, 1.0)

    def test_slope_at_zero(self, paper_kernel):
        h = 1e-7
        fd = (paper_kernel.scalar(h) - paper_kernel.scalar(0.0)) / h
        assert paper_kernel.scalar_slope_at_zero() == pytest.approx(fd, rel=1e-5)


class TestAssembleCovariance:
    def test_zero_kernel_short_circuits(self):
        grid = TimeGrid(1.0, 16)
        cov = assemble_covariance(DiagonalConstant((0.0, 0.0, 0.0)), grid)
        assert np.all(cov.matrix == 0.0)
        assert np.all(cov.factor == 0.0)

    def test_diagonal_constant_rank(self):
        grid = TimeGrid(1.0, 32)
        cov = assemble_covariance(DiagonalConstant((0.5, 0.2, 0.0)), grid)
        eigs = np.linalg.eigvalsh(cov.matrix)
        assert np.sum(eigs > 1e-9 * eigs[-1]) <= 3

    def test_factor_reproduces_matrix(self, paper_kernel):
        grid = TimeGrid(1.0, 48)
        cov = assemble_covariance(paper_kernel, grid)
        np.testing.assert_allclose(
            cov.factor @ cov.factor.T,
            cov.matrix + cov.jitter * np.eye(cov.matrix.shape[0]),
            atol=1e-10 * np.max(cov.matrix),
        )

    def test_not_psd_raises(self):
        # a parabola in the lag is not a covariance on long grids
        bad = UserMatrix(lambda s: np.diag([1.0 - s**2, 0.0, 0.0]))
        with pytest.raises(NotPSD) as err:
            assemble_covariance(bad, TimeGrid(4.0, 32))
        assert err.value.min_eigenvalue < 0.0


class TestSamplePaths:
    def test_empty_draw(self, paper_kernel):
        grid = TimeGrid(1.0, 16)
        out = sample_paths(paper_kernel, grid, 0, seed=1)
        assert out.paths.shape == (0, 3, 17)

    def test_zero_kernel_gives_zero_paths(self):
        grid = TimeGrid(1.0, 16)
        out = sample_paths(DiagonalConstant((0.0, 0.0, 0.0)), grid, 20, seed=1)
        assert np.all(out.paths == 0.0)

    def test_deterministic_given_seed(self, paper_kernel):
        grid = TimeGrid(1.0, 24)
        a = sample_paths(paper_kernel, grid, 50, seed=77)
        b = sample_paths(paper_kernel, grid, 50, seed=77)
        np.testing.assert_array_equal(a.paths, b.paths)
        c = sample_paths(paper_kernel, grid, 50, seed=78)
        assert not np.array_equal(a.paths, c.paths)

    def test_empirical_mean_is_zero(self, paper_kernel):
        grid = TimeGrid(1.0, 24)
        count = 100_000
        out = sample_paths(paper_kernel, grid, count, seed=5)
        sigma = math.sqrt(kernel_eval(paper_kernel, 0.0)[0, 0])
        mean = np.mean(out.paths[:, 0, :], axis=0)
        assert np.max(np.abs(mean)) < 4.0 * sigma / math.sqrt(count)

    def test_sample_covariance_matches_kernel(self, paper_kernel):
        # x-component covariance against the closed form, chunked draws
        grid = TimeGrid(1.0, 256)
        total = 100_000
        chunk = 20_000
        n = grid.n_nodes
        acc = np.zeros((n, n))
        cov = assemble_covariance(paper_kernel, grid)
        for i in range(total // chunk):
            block = sample_paths(paper_kernel, grid, chunk, seed=100 + i, cov=cov)
            x = block.paths[:, 0, :]
            acc += x.T @ x
        emp = acc / total
        lags = [0, 1, 8, 64, 200]
        a = 20
        for lag in lags:
            want = paper_kernel.scalar(lag * grid.dt)
            se = math.sqrt(
                (paper_kernel.scalar(0.0) ** 2 + want**2) / total
            )
            assert abs(emp[a, a + lag] - want) < 4.0 * se

    def test_periodogram_slope_is_one_over_f(self):
        # decade 2*gamma_lo .. gamma_hi/2 (rate units, so /2pi in cycles),
        # resolvable on the window: average periodogram slope near -1
        kernel = OneOverF(1.0, 0.5, 50.0)
        grid = TimeGrid(32.0, 512)
        out = sample_paths(kernel, grid, 10_000, seed=9)
        x = out.paths[:, 0, :-1]
        spec = np.mean(np.abs(np.fft.rfft(x, axis=1)) ** 2, axis=0)
        freqs = np.fft.rfftfreq(x.shape[1], d=grid.dt)
        band = (freqs >= 2 * 0.5 / (2 * math.pi)) & (freqs <= 0.5 * 50.0 / (2 * math.pi))
        slope = np.polyfit(np.log(freqs[band]), np.log(spec[band]), 1)[0]
        assert -1.3 < slope < -0.7
