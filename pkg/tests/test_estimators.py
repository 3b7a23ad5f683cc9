from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdspectra import (DiscreteDistribution, DomainError, MissingModel, PsiModel, SampleSpectrum,
                       SpBaselineModel, TieError, estimate_all, estimate_angles,
                       estimate_correlations, estimate_shrinkage, estimate_spikes, f_g_eval,
                       fit_psi_model, quadratic_form_limit)


@pytest.fixture
def small():
    return SampleSpectrum([10.0, 1.0, 0.5], n=6)


def sp_sample(d1, gamma=0.5, p=40):
    """Sample spectrum whose non-spikes average exactly 1."""
    n = int(p / gamma)
    rest = np.linspace(1.5, 0.5, p - 1)
    return SampleSpectrum(np.concatenate([[d1], rest]), n)


class TestDMethod:
    def test_example(self, small):
        est = estimate_all(small, 1, "d")[0]
        assert est.lambda_hat == pytest.approx(9.606741573033707, rel=1e-12)
        assert est.cos2_angle == pytest.approx(0.958813060118757, rel=1e-12)
        assert est.corr2_score == pytest.approx(0.998062717550519, rel=1e-12)
        assert est.shrinkage == pytest.approx(0.960674, abs=1e-6)

    def test_corr_composition(self, small):
        f, g = f_g_eval(small, 1, 10.0)
        est = estimate_correlations(small, 1, "d")[0]
        assert est.corr2_score == pytest.approx(10.0 * g / f, rel=1e-12)

    def test_exact_oracle(self, small):
        # independent rational evaluation of the corr2 formula
        d = [Fraction(10), Fraction(1), Fraction(1, 2)]
        c = Fraction(3, 6) / 2
        x = d[0]
        f = x / (1 + c * sum(v / (x - v) for v in d[1:]))
        g = 1 / (1 + c * f * sum(v / (x - v) ** 2 for v in d[1:]))
        assert estimate_all(small, 1, "d")[0].corr2_score == pytest.approx(float(x * g / f), rel=1e-13)


class TestSpAndLambda:
    def test_sp_closed_form(self):
        s = sp_sample(14 / 3)
        est = estimate_all(s, 1, "sp")[0]
        assert est.lambda_hat == pytest.approx(4.0, rel=1e-12)
        assert est.cos2_angle == pytest.approx(0.809524, abs=1e-6)
        assert est.corr2_score == pytest.approx(0.944444, abs=1e-6)
        assert est.shrinkage == pytest.approx(0.857143, abs=1e-6)

    def test_lambda_matches_sp_on_degenerate_h(self):
        s = sp_sample(14 / 3)
        model = PsiModel(DiscreteDistribution.point_mass(1.0), s.gamma)
        a = estimate_all(s, 1, "lambda", model)[0]
        b = estimate_all(s, 1, "sp")[0]
        for name in ("lambda_hat", "cos2_angle", "corr2_score", "shrinkage"):
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9)
        assert a.lambda_hat == pytest.approx(4.0, rel=1e-12)

    @pytest.mark.parametrize("zeta", [0.5, 2.0, 7.0])
    def test_sp_scale(self, zeta):
        sp = SpBaselineModel(zeta, 0.5)
        beta = 4.0 * zeta
        assert sp.inverse(sp.psi(beta)) == pytest.approx(beta, rel=1e-12)
        assert sp.cos2(beta) == pytest.approx(0.809524, abs=1e-6)

    def test_gamma_zero(self):
        sp = SpBaselineModel(1.0, 0.0)
        assert sp.cos2(3.0) == 1.0 and sp.corr2(3.0) == 1.0 and sp.inverse(3.0) == 3.0
        model = PsiModel(DiscreteDistribution.point_mass(1.0), 0.0)
        s = SampleSpectrum([5.0, 1.0, 0.9, 0.8], n=10 ** 9)
        est = estimate_all(s, 1, "lambda", model)[0]
        assert est.cos2_angle == 1.0 and est.corr2_score == 1.0 and est.lambda_hat == 5.0

    def test_not_distant_flagged(self):
        s = sp_sample(2.5)
        model = PsiModel(DiscreteDistribution.point_mass(1.0), s.gamma)
        for meth, mod in (("lambda", model), ("sp", None)):
            e = estimate_all(s, 1, meth, mod)[0]
            assert not e.distant and e.lambda_hat is None and e.cos2_angle is None

    def test_zeta_includes_zeros(self):
        s = SampleSpectrum.from_eigenvalues([9.0, 2.0, 1.0], n=3, p=6)
        assert SpBaselineModel.from_sample(s, 1).zeta == pytest.approx(3.0 / 5)


class TestValidation:
    def test_missing_model(self, small):
        with pytest.raises(MissingModel):
            estimate_spikes(small, 1, "lambda")

    def test_tie(self):
        s = SampleSpectrum([5.0, 5.0, 1.0, 0.5], n=10)
        with pytest.raises(TieError):
            estimate_spikes(s, 2, "d")

    def test_m_zero(self, small):
        with pytest.raises(DomainError):
            estimate_spikes(small, 0, "d")

    def test_unknown_method(self, small):
        with pytest.raises(ValueError):
            estimate_spikes(small, 1, "mle")

    def test_count(self):
        s = SampleSpectrum([30.0, 20.0, 10.0] + list(np.linspace(2, 1, 30)), n=60)
        est = estimate_all(s, 3, "d", count=2)
        assert len(est) == 2


class TestShrinkage:
    def test_examples(self):
        assert estimate_shrinkage(9.60674, 10.0) == pytest.approx(0.960674)
        assert estimate_shrinkage(4.0, 14 / 3) == pytest.approx(3 / 3.5)
        assert estimate_shrinkage(4.0, 4.0) == 1.0

    def test_capped(self):
        assert estimate_shrinkage(4.0 * (1 + 1e-8), 4.0) == 1.0

    def test_inconsistent(self):
        with pytest.raises(DomainError):
            estimate_shrinkage(5.0, 4.0)
        with pytest.raises(DomainError):
            estimate_shrinkage(0.0, 4.0)


class TestClamp:
    def test_clamp_flag(self, monkeypatch):
        import hdspectra.estimators as E

        s = sp_sample(14 / 3)
        model = PsiModel(DiscreteDistribution.point_mass(1.0), s.gamma)
        est = estimate_spikes(s, 1, "lambda", model)
        monkeypatch.setattr(E, "psi_eval", lambda m, a: (1.0, 1.0 + 5e-10))
        out = estimate_correlations(s, 1, "lambda", model, est)[0]
        assert out.corr2_score == 1.0 and "corr2_score" in out.clamped
        monkeypatch.setattr(E, "psi_eval", lambda m, a: (1.0, 1.1))
        with pytest.raises(DomainError):
            estimate_correlations(s, 1, "lambda", model, est)


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 0.95), st.floats(0.1, 3.0))
    def test_ordering_and_unit_range(self, ratio, gamma):
        p = 60
        n = max(int(p / gamma), 2)
        bulk = np.linspace(1.5, 0.5, p - 2)
        d2 = 20.0
        d1 = d2 / ratio
        s = SampleSpectrum(np.concatenate([[d1, d2], bulk])[: min(n, p)].tolist() + [0.0] * max(0, p - n), n)
        for meth in ("d", "sp"):
            est = estimate_all(s, 2, meth)
            lam = est.lambda_hats
            if est.all_distant:
                assert lam[0] >= lam[1]
                for e in est.estimates:
                    assert 0 <= e.cos2_angle <= 1 and 0 <= e.corr2_score <= 1
                    assert 0 < e.shrinkage <= 1

    def test_d_and_lambda_agree_on_gsp_data(self):
        rng = np.random.default_rng(4)
        p, n = 1000, 2000
        lam = np.concatenate([[40.0, 25.0], np.repeat([1.0, 3.0], [499, 499])])
        diffs = []
        for _ in range(20):
            X = rng.standard_normal((n, p)) * np.sqrt(lam)
            s = SampleSpectrum.from_eigenvalues(np.linalg.eigvalsh(X.T @ X / n), n, p)
            fit = fit_psi_model(s, 2)
            a = estimate_all(s, 2, "d")
            b = estimate_all(s, 2, "lambda", fit.psi_model)
            for name in ("lambda_hat", "cos2_angle", "corr2_score", "shrinkage"):
                diffs.append(np.abs(a.column(name) - b.column(name)) / np.abs(b.column(name)))
        assert np.median(np.concatenate(diffs)) < 0.02

    def test_sp_overestimates_when_bulk_is_spread(self):
        # largest non-spike / spike around 0.3: the SP value sits above the d value
        p, n = 500, 100
        bulk = np.linspace(12.0, 0.5, n - 1)
        s = SampleSpectrum.from_eigenvalues(np.concatenate([[130.0], bulk]), n, p)
        assert estimate_spikes(s, 1, "sp")[0].lambda_hat > estimate_spikes(s, 1, "d")[0].lambda_hat

    def test_sp_close_to_d_for_far_spikes(self):
        p, n = 400, 800
        bulk = np.linspace(1.2, 0.8, p - 1)
        s = SampleSpectrum(np.concatenate([[400.0], bulk]), n)
        a = estimate_spikes(s, 1, "sp")[0].lambda_hat
        b = estimate_spikes(s, 1, "d")[0].lambda_hat
        assert abs(a - b) / b < 0.02


def test_quadratic_form_limit():
    model = PsiModel(DiscreteDistribution.point_mass(1.0), 0.5)
    E = np.array([1.0, 0.0, 0.0])
    val = quadratic_form_limit(4.0, model, E, E, E)
    assert val == pytest.approx(0.809524, abs=1e-6)
    assert quadratic_form_limit(4.0, model, E, E, np.array([0.0, 1.0, 0.0])) == 0.0
