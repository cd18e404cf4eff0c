import numpy as np
import pytest

from rumorloc.errors import ValidationError
from rumorloc.recovery import (PartialDelayMatrix, RenewalParams, dn_complete, dn_complete_renewal,
                               gamma_sampler, mean_residual, renewal_expected_residual,
                               renewal_residual_matrix, sample_residuals, simulate_renewal_residual)
from rumorloc.recovery.renewal import renewal_epochs


def params(mx, vx, ms, vs):
    return RenewalParams(np.atleast_2d(mx), np.atleast_2d(vx), np.atleast_1d(ms), np.atleast_1d(vs))


def test_arithmetic_example():
    assert renewal_expected_residual(params(2.0, 1.0, 1.0, 0.5), 0, 0) == pytest.approx(1.75, abs=1e-15)


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_deterministic_cycle_halves(c):
    assert renewal_expected_residual(params(c * 0.6, 0.0, c * 0.4, 0.0), 0, 0) == pytest.approx(c / 2)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_exponential_cycle_is_memoryless(c):
    assert float(mean_residual(c, c * c)) == pytest.approx(c)


def test_matrix_form_matches_entries():
    rng = np.random.default_rng(0)
    r = RenewalParams(rng.uniform(1, 2, (3, 4)), rng.uniform(0, 1, (3, 4)), rng.uniform(0, 1, 3),
                      rng.uniform(0, 1, 3))
    M = renewal_residual_matrix(r)
    for i in range(3):
        for j in range(4):
            assert M[i, j] == renewal_expected_residual(r, i, j)
    assert np.array_equal(r.cycle_mean(), r.transmit_mean + r.vacation_mean[:, None])


def test_params_validation():
    with pytest.raises(ValidationError):
        params(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        params(1.0, -1.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        RenewalParams(np.ones((2, 2)), np.ones((2, 2)), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        mean_residual(0.0, 1.0)


def uniform_sampler(lo, hi):
    return lambda rng, size: rng.uniform(lo, hi, size)


@pytest.mark.parametrize("sampler, mean, var", [
    (gamma_sampler(2.0, 0.0), 2.0, 0.0),
    (gamma_sampler(1.0, 1.0), 1.0, 1.0),
    (gamma_sampler(2.0, 2.0), 2.0, 2.0),
    (uniform_sampler(1.0, 3.0), 2.0, 4.0 / 12),
])
def test_monte_carlo_agrees_with_closed_form(sampler, mean, var):
    est = simulate_renewal_residual(sampler, horizon=2e5 * mean, samples=200_000, seed=1)
    want = float(mean_residual(mean, var))
    assert est.mean == pytest.approx(want, rel=0.01)
    assert not est.short_horizon
    assert est.stderr < 0.005 * want


def test_monte_carlo_with_vacations():
    est = simulate_renewal_residual(gamma_sampler(2.0, 1.0), 4e5, 200_000, seed=2,
                                    vacation=gamma_sampler(1.0, 0.5))
    assert est.mean == pytest.approx(1.75, rel=0.01)


def test_short_horizon_flag():
    est = simulate_renewal_residual(gamma_sampler(1.0, 0.0), horizon=20.0, samples=100, seed=0)
    assert est.short_horizon and est.renewals == 20


def test_epochs_cover_horizon_and_increase():
    ep = renewal_epochs(gamma_sampler(1.0, 0.5), 1000.0, np.random.default_rng(0))
    assert ep[-1] > 1000.0 and np.all(np.diff(ep) > 0)


def test_epochs_reject_non_positive_lifetimes():
    with pytest.raises(ValueError):
        renewal_epochs(lambda rng, size: np.zeros(size), 10.0, np.random.default_rng(0))


def test_gamma_sampler_moments():
    x = gamma_sampler(3.0, 2.0)(np.random.default_rng(0), 400_000)
    assert x.mean() == pytest.approx(3.0, rel=0.01) and x.var() == pytest.approx(2.0, rel=0.02)
    with pytest.raises(ValueError):
        gamma_sampler(0.0, 1.0)


def test_sample_residuals_mean():
    rng = np.random.default_rng(5)
    out = sample_residuals(np.full((40, 50), 2.0), 1.0, np.full((40, 50), 1.0), 0.5, rng)
    assert out.shape == (40, 50) and np.all(out > 0)
    # one draw per entry; 2000 draws of residuals with mean 1.75
    assert out.mean() == pytest.approx(1.75, abs=4 * out.std() / np.sqrt(out.size))


def test_zero_variance_renewal_is_half_dn():
    rng = np.random.default_rng(7)
    m, n = 3, 2
    D = rng.uniform(1, 3, (m + 1 + n, m + 1 + n))
    D = (D + D.T) / 2
    p = PartialDelayMatrix.from_matrix(D, m)
    mx, ms = rng.uniform(1, 2, (m, n)), rng.uniform(0.5, 1, m)
    r = RenewalParams(mx, np.zeros((m, n)), ms, np.zeros(m))
    got = dn_complete_renewal(p, r)
    plain = dn_complete(p, r.cycle_mean() / 2)
    assert np.allclose(got.block, plain.block, rtol=1e-12)
    full = dn_complete(p, r.cycle_mean())
    cos = got.row_scale @ full.row_scale / np.linalg.norm(got.row_scale) / np.linalg.norm(full.row_scale)
    assert cos == pytest.approx(1.0, abs=1e-12)


def test_renewal_shape_mismatch():
    p = PartialDelayMatrix(np.zeros((1, 1)), [1.0], 0.0, [1.0], np.zeros((1, 1)))
    with pytest.raises(ValueError):
        dn_complete_renewal(p, params(np.ones((2, 1)), np.ones((2, 1)), [1, 1], [0, 0]))
