import json

import numpy as np
import pytest
from scipy import integrate, optimize

from hdspectra import DomainError, SampleSpectrum, estimate_num_spikes


def mp_quantiles(gamma, k):
    """Midpoint quantiles of the Marchenko-Pastur law, descending."""
    a, b = (1 - np.sqrt(gamma)) ** 2, (1 + np.sqrt(gamma)) ** 2
    dens = lambda x: np.sqrt(max((b - x) * (x - a), 0.0)) / (2 * np.pi * gamma * x)
    cdf = lambda x: integrate.quad(dens, a, x)[0]
    qs = (np.arange(k) + 0.5) / k
    return np.array([optimize.brentq(lambda x: cdf(x) - q, a, b) for q in qs])[::-1]


def mp_sample(lam, n, rng):
    X = rng.standard_normal((n, lam.size)) * np.sqrt(lam)
    return SampleSpectrum.from_eigenvalues(np.linalg.eigvalsh(X.T @ X / n), n, lam.size)


@pytest.fixture(scope="module")
def one_spike():
    # psi(10) = 10 (1 + 0.5 / 9) ~ 10.556 on top of an exact MP(0.5) bulk
    bulk = mp_quantiles(0.5, 199)
    return SampleSpectrum(np.concatenate([[10.556], bulk]), 400)


def test_single_spike(one_spike):
    trace = estimate_num_spikes(one_spike, 3)
    assert trace.final_m == 1
    assert trace.iterations[-1].psi_at_s_psi == pytest.approx((1 + np.sqrt(0.5)) ** 2, rel=0.01)
    assert trace.final_fit is not None and trace.final_fit.m == 1


def test_single_spike_monte_carlo():
    rng = np.random.default_rng(2024)
    lam = np.ones(200)
    lam[0] = 10.0
    res = np.array([estimate_num_spikes(mp_sample(lam, 400, rng), 3).final_m for _ in range(20)])
    assert np.all(res >= 1)
    assert np.mean(res == 1) > 0.5


def test_no_spike_data():
    # pure noise: at least 90% of 20 replicates should report no distant spike
    rng = np.random.default_rng(77)
    res = np.array([estimate_num_spikes(mp_sample(np.ones(200), 400, rng), 3).final_m for _ in range(20)])
    assert np.mean(res == 0) >= 0.9


@pytest.mark.parametrize("m_max", [0, -1, 100])
def test_m_max_rejected(one_spike, m_max):
    with pytest.raises(DomainError):
        estimate_num_spikes(one_spike, m_max)


def test_trace_invariants_and_json(one_spike):
    trace = estimate_num_spikes(one_spike, 5)
    ms = [it.m for it in trace.iterations]
    assert all(a > b for a, b in zip(ms, ms[1:]))
    assert len(ms) <= 6 and trace.final_m <= trace.m_max
    d = one_spike.d
    for it in trace.iterations:
        assert it.psi_at_s_psi > d[it.m]
    doc = json.loads(json.dumps(trace.to_dict()))
    assert doc["final_m"] == trace.final_m and doc["iterations"][0]["m"] == 5


def test_zero_count_skips_refit():
    rng = np.random.default_rng(1)
    s = mp_sample(np.ones(100), 200, rng)
    trace = estimate_num_spikes(s, 2)
    if trace.final_m == 0:
        assert trace.final_fit is None
        assert trace.iterations[-1].first_violation_index == 1
