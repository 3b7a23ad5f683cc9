import json

import numpy as np
import pytest

from hdspectra import (DataError, DiscreteDistribution, GridConfig, InversionGrid, DomainError,
                       SampleSpectrum, build_grid, fit_psi_model, nonspike_quantiles,
                       psi_model_from_lsd, smooth_lsd, solve_weights)
from hdspectra.lsd import LsdSolution, evaluate_loss


def mp_sample(lam, n, rng):
    lam = np.asarray(lam, dtype=float)
    X = rng.standard_normal((n, lam.size)) * np.sqrt(lam)
    p = lam.size
    G = X @ X.T / n if p >= n else X.T @ X / n
    return SampleSpectrum.from_eigenvalues(np.linalg.eigvalsh(G), n, p)


@pytest.fixture(scope="module")
def mp_half():
    return mp_sample(np.ones(400), 800, np.random.default_rng(11))


class TestGrid:
    def test_default_sizes(self):
        rng = np.random.default_rng(0)
        s = mp_sample(np.ones(1000), 500, rng)
        g = build_grid(s, 0)
        assert g.shape == (200, 100)

    def test_ranges(self, mp_half):
        g = build_grid(mp_half, 0)
        rest = mp_half.d
        gamma = mp_half.gamma
        assert g.t_points[0] == pytest.approx(rest[rest > 0].min() / (1 + np.sqrt(gamma)) ** 2)
        assert g.t_points[-1] == pytest.approx(rest[0])
        assert np.all(g.z_points.imag > 0)
        assert g.z_points.real.min() == pytest.approx(0.5 * rest[rest > 0].min())
        assert g.z_points.real.max() == pytest.approx(1.1 * rest[0])

    def test_constant_spectrum(self):
        s = SampleSpectrum(np.full(20, 2.0), n=40)
        g = build_grid(s, 0)
        assert g.t_points[0] == pytest.approx(2.0 / (1 + np.sqrt(0.5)) ** 2)
        assert g.t_points[-1] == pytest.approx(2.0)

    def test_too_few_bulk(self):
        s = SampleSpectrum(np.linspace(20, 1, 20), n=40)
        with pytest.raises(DataError):
            build_grid(s, 11)

    def test_invalid_grid(self):
        with pytest.raises(DomainError):
            InversionGrid(np.array([1.0 + 0j, 2.0 + 1j]), np.array([1.0]))
        with pytest.raises(DomainError):
            InversionGrid(np.array([1.0 + 1j]), np.array([1.0, 2.0]))
        with pytest.raises(DomainError):
            InversionGrid(np.array([1 + 1j, 2 + 1j]), np.array([2.0, 1.0]))


class TestSolveWeights:
    def test_single_support_point(self, mp_half):
        g = build_grid(mp_half, 0, GridConfig(n_t=1))
        sol = solve_weights(mp_half, 0, g)
        np.testing.assert_array_equal(sol.weights, [1.0])

    @pytest.mark.parametrize("loss", ["linf", "l1", "l2"])
    def test_feasible_and_beats_uniform(self, mp_half, loss):
        g = build_grid(mp_half, 0)
        sol = solve_weights(mp_half, 0, g, loss)
        assert np.all(sol.weights >= 0)
        assert sol.weights.sum() == pytest.approx(1.0, abs=1e-9)
        uniform = np.full(g.t_points.size, 1.0 / g.t_points.size)
        assert sol.loss_value <= evaluate_loss(mp_half, 0, g, uniform, loss) + 1e-9

    def test_point_mass_recovered(self, mp_half):
        H = solve_weights(mp_half, 0, build_grid(mp_half, 0)).distribution
        inside = (H.locations >= 0.8) & (H.locations <= 1.2)
        assert H.weights[inside].sum() >= 0.9

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    def test_mean_consistency(self, gamma):
        rng = np.random.default_rng(int(gamma * 10))
        means = []
        for _ in range(10):
            s = mp_sample(np.ones(400), int(400 / gamma), rng)
            means.append(solve_weights(s, 0, build_grid(s, 0)).distribution.mean)
        assert abs(np.median(means) - 1.0) < 0.1

    def test_own_simplex_agrees_with_highs(self, mp_half):
        g = build_grid(mp_half, 0, GridConfig(n_t=30, n_re=40))
        a = solve_weights(mp_half, 0, g, "linf", lp_solver="highs")
        b = solve_weights(mp_half, 0, g, "linf", lp_solver="simplex")
        assert b.loss_value == pytest.approx(a.loss_value, rel=1e-6, abs=1e-10)

    def test_scale_equivariance(self, mp_half):
        c = 3.0
        scaled = SampleSpectrum(mp_half.d * c, mp_half.n)
        g = build_grid(mp_half, 0, GridConfig(n_t=40, n_re=50))
        a = solve_weights(mp_half, 0, g, "l2")
        b = solve_weights(scaled, 0, g.scaled(c), "l2")
        np.testing.assert_allclose(b.t_points, c * a.t_points, rtol=1e-12)
        np.testing.assert_allclose(b.weights, a.weights, atol=1e-6)
        la = solve_weights(mp_half, 0, g, "linf")
        lb = solve_weights(scaled, 0, g.scaled(c), "linf")
        assert lb.loss_value == pytest.approx(c * la.loss_value, rel=1e-6)

    def test_spike_exclusion_changes_transform(self):
        rng = np.random.default_rng(5)
        lam = np.ones(300)
        lam[0] = 25.0
        s = mp_sample(lam, 600, rng)
        with_spike = fit_psi_model(s, 0).psi_model.psi_at_s_psi
        without = fit_psi_model(s, 1).psi_model.psi_at_s_psi
        assert without < with_spike
        assert without == pytest.approx((1 + np.sqrt(0.5)) ** 2, rel=0.05)

    def test_unknown_loss(self, mp_half):
        with pytest.raises(ValueError):
            solve_weights(mp_half, 0, build_grid(mp_half, 0), "huber")

    def test_json_dump(self, mp_half):
        sol = solve_weights(mp_half, 0, build_grid(mp_half, 0, GridConfig(n_t=10, n_re=10)))
        doc = json.loads(json.dumps(sol.to_dict()))
        assert len(doc["z_points"]) == 20 and len(doc["residuals"]) == 20
        assert doc["loss_kind"] == "linf"


class TestSmoothing:
    def sol(self, t, w):
        t = np.asarray(t, dtype=float)
        return LsdSolution(t, np.asarray(w, dtype=float), 0.0, "linf")

    def test_zero_bandwidth_identity(self):
        s = self.sol([1, 2, 3], [0.2, 0.5, 0.3])
        H = smooth_lsd(s, 0.0)
        np.testing.assert_allclose(H.weights, [0.2, 0.5, 0.3])

    def test_single_atom_symmetric_bell(self):
        t = np.linspace(0, 2, 21)[1:]
        w = np.zeros(20)
        w[9] = 1.0  # atom at t = 1.0
        H = smooth_lsd(self.sol(t, w), 0.2)
        assert H.weights.sum() == pytest.approx(1.0)
        centre = 9
        np.testing.assert_allclose(H.weights[centre - 5:centre], H.weights[centre + 1:centre + 6][::-1], rtol=1e-9)
        assert np.argmax(H.weights) == centre

    def test_two_atoms_keep_two_modes(self):
        t = np.linspace(0.1, 5, 50)
        w = np.zeros(50)
        w[[9, 39]] = 0.5
        H = smooth_lsd(self.sol(t, w), 0.2)
        dw = np.diff(H.weights)
        modes = np.sum((dw[:-1] > 0) & (dw[1:] <= 0))
        assert modes == 2

    def test_mass_and_mean(self):
        t = np.linspace(1, 10, 60)
        w = np.random.default_rng(0).random(60)
        w /= w.sum()
        s = self.sol(t, w)
        H = smooth_lsd(s, 0.3)
        assert H.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert H.mean == pytest.approx(s.distribution.mean, abs=0.3)

    def test_default_bandwidth_runs(self):
        s = self.sol(np.linspace(1, 4, 10), np.full(10, 0.1))
        assert smooth_lsd(s).weights.sum() == pytest.approx(1.0)


class TestQuantiles:
    def test_two_atom_example(self):
        H = DiscreteDistribution([1.0, 3.0], [0.5, 0.5])
        np.testing.assert_allclose(nonspike_quantiles(H, 6, 2), [3, 3, 1, 1])

    def test_point_mass(self):
        np.testing.assert_allclose(nonspike_quantiles(DiscreteDistribution.point_mass(2.5), 7, 0), 2.5)

    def test_single_value_is_median(self):
        H = DiscreteDistribution([1.0, 2.0, 3.0], [0.3, 0.4, 0.3])
        np.testing.assert_allclose(nonspike_quantiles(H, 5, 4), [2.0])

    def test_p_le_m(self):
        with pytest.raises(DomainError):
            nonspike_quantiles(DiscreteDistribution.point_mass(1.0), 3, 3)


class TestPsiFromLsd:
    def test_point_mass(self):
        m = psi_model_from_lsd(DiscreteDistribution.point_mass(1.0), 0.25)
        assert m.s_psi == pytest.approx(1.5)

    def test_gamma_zero(self):
        m = psi_model_from_lsd(DiscreteDistribution.point_mass(1.0), 0.0)
        assert m.no_distortion and m(5.0) == 5.0

    def test_example_value(self):
        m = psi_model_from_lsd(DiscreteDistribution([1.0, 3.0], [0.5, 0.5]), 0.2)
        assert m(10.0) == pytest.approx(10.539683, abs=1e-6)

    def test_quantile_atoms_reproduce_sum(self, mp_half):
        fit = fit_psi_model(mp_half, 0)
        lam = fit.nonspikes
        a = 1.5 * fit.psi_model.s_psi
        direct = a + mp_half.gamma * a / lam.size * np.sum(lam / (a - lam))
        assert fit.psi_model(a) == pytest.approx(direct, rel=1e-12)
