import numpy as np
import pytest

from uga import autodiff as ad
from uga import gradcheck as gc
from uga.evidential import (
    EvidentialConfig,
    NigOutput,
    evidence_regularizer,
    evidential_loss,
    nig_from_raw,
    nll_loss,
    predictive_interval,
    uncertainties,
)

# Frozen oracle values (mpmath, 40 digits) for the NLL at two probe points
# and the Student-t 0.95 quantile at 4 degrees of freedom.
NLL_Y0 = 0.9808292530117262368565
NLL_Y1 = 1.538688131297250626272
TOTAL_Y1_LAM1 = 5.538688131297250626272
T_095_DF4 = 2.131846786326650318347
LN2 = 0.6931471805599453094172


def unit_nig(gamma=0.0, nu=1.0, alpha=2.0, beta=1.0):
    return NigOutput.from_values(gamma, nu, alpha, beta)


class TestMapping:
    def test_zero_raw(self):
        p = nig_from_raw(ad.constant(np.zeros((1, 4))))
        assert p.gamma.item() == 0.0
        assert p.nu.item() == pytest.approx(LN2, abs=1e-12)
        assert p.alpha.item() == pytest.approx(1.0 + LN2, abs=1e-12)
        assert p.beta.item() == pytest.approx(LN2, abs=1e-12)

    def test_large_raw_asymptote(self):
        p = nig_from_raw(np.array([1.5, 50.0, 50.0, 50.0]))
        assert p.gamma.item() == 1.5
        assert p.nu.item() == pytest.approx(50.0, abs=1e-9)
        assert p.alpha.item() == pytest.approx(51.0, abs=1e-9)
        assert p.beta.item() == pytest.approx(50.0, abs=1e-9)

    def test_totality(self):
        # Large random raw magnitudes must still give valid parameters and a
        # finite loss.
        rng = np.random.default_rng(7)
        raw = rng.uniform(-100.0, 100.0, size=(100_000, 4))
        p = nig_from_raw(ad.constant(raw))
        p.validate()
        assert np.all(p.nu.data > 0)
        assert np.all(p.alpha.data > 1)
        assert np.all(p.beta.data > 0)
        ys = rng.normal(size=100_000)
        loss = nll_loss(ys, p)
        assert np.all(np.isfinite(loss.data))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            nig_from_raw(np.array([0.0, np.nan, 0.0, 0.0]))

    def test_rejects_bad_shape(self):
        with pytest.raises(ad.ShapeError):
            nig_from_raw(ad.constant(np.zeros((2, 3))))

    def test_validate_rejects_violations(self):
        with pytest.raises(ValueError):
            NigOutput.from_values(0.0, -1.0, 2.0, 1.0).validate()
        with pytest.raises(ValueError):
            NigOutput.from_values(0.0, 1.0, 1.0, 1.0).validate()
        with pytest.raises(ValueError):
            NigOutput.from_values(0.0, 1.0, 2.0, 0.0).validate()


class TestNll:
    def test_oracle_y0(self):
        assert nll_loss(0.0, unit_nig()).item() == pytest.approx(NLL_Y0, abs=1e-9)

    def test_oracle_y1(self):
        assert nll_loss(1.0, unit_nig()).item() == pytest.approx(NLL_Y1, abs=1e-9)

    def test_gamma_stationary_at_label(self):
        g = ad.param(np.array([[0.7]]))
        p = NigOutput(g, *(ad.constant(np.array([[v]])) for v in (1.0, 2.0, 1.0)))
        ad.backward(nll_loss(0.7, p))
        assert g.grad.item() == 0.0

    def test_rejects_invalid_params(self):
        with pytest.raises(ValueError):
            nll_loss(0.0, NigOutput.from_values(0.0, 0.0, 2.0, 1.0))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(19)
        n = 100
        leaves = [
            ad.param(rng.uniform(-3.0, 3.0, size=(n, 1))),
            ad.param(rng.uniform(0.2, 5.0, size=(n, 1))),
            ad.param(rng.uniform(1.2, 6.0, size=(n, 1))),
            ad.param(rng.uniform(0.2, 5.0, size=(n, 1))),
        ]
        ys = rng.uniform(-3.0, 3.0, size=(n, 1))

        def build(ls):
            return ad.sum(nll_loss(ys, NigOutput(*ls)))

        assert gc.compare(build, leaves) < 1e-5


class TestRegularizer:
    def test_zero_at_label(self):
        assert evidence_regularizer(0.3, unit_nig(gamma=0.3)).item() == 0.0

    def test_hand_values(self):
        assert evidence_regularizer(1.0, unit_nig()).item() == pytest.approx(4.0)
        p = NigOutput.from_values(0.0, 0.5, 1.5, 1.0)
        assert evidence_regularizer(0.5, p).item() == pytest.approx(1.25)

    def test_nonnegative_and_zero_iff_match(self):
        rng = np.random.default_rng(23)
        g = rng.normal(size=50)
        p = NigOutput.from_values(g, rng.uniform(0.1, 4, 50),
                                  rng.uniform(1.1, 4, 50), rng.uniform(0.1, 4, 50))
        y = g.copy()
        y[25:] += rng.uniform(0.01, 2, 25) * rng.choice([-1, 1], 25)
        r = evidence_regularizer(y, p).data.ravel()
        assert np.all(r >= 0)
        assert np.all(r[:25] == 0)
        assert np.all(r[25:] > 0)


class TestTotalLoss:
    def test_lambda_zero_is_mean_nll(self):
        rng = np.random.default_rng(29)
        p = NigOutput.from_values(rng.normal(size=8), rng.uniform(0.5, 2, 8),
                                  rng.uniform(1.5, 3, 8), rng.uniform(0.5, 2, 8))
        ys = rng.normal(size=8)
        total = evidential_loss(ys, p, EvidentialConfig(lambda_evi=0.0))
        assert total.item() == pytest.approx(float(np.mean(nll_loss(ys, p).data)))

    def test_single_sample_oracle(self):
        total = evidential_loss(1.0, unit_nig(), EvidentialConfig(lambda_evi=1.0))
        assert total.item() == pytest.approx(TOTAL_Y1_LAM1, abs=1e-9)

    def test_duplicated_batch_matches_single(self):
        p = NigOutput.from_values([0.0] * 6, [1.0] * 6, [2.0] * 6, [1.0] * 6)
        total = evidential_loss([1.0] * 6, p, EvidentialConfig(lambda_evi=1.0))
        assert total.item() == pytest.approx(TOTAL_Y1_LAM1, abs=1e-9)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            EvidentialConfig(lambda_evi=-0.1)

    def test_gradients_through_raw_mapping(self):
        rng = np.random.default_rng(31)
        raw = ad.param(rng.normal(size=(12, 4)))
        ys = rng.normal(size=(12, 1))

        def build(ls):
            return evidential_loss(ys, nig_from_raw(ls[0]),
                                   EvidentialConfig(lambda_evi=1.0))

        assert gc.compare(build, [raw]) < 1e-5


class TestUncertainties:
    def test_hand_values(self):
        al, ep = uncertainties(unit_nig())
        assert al[0] == pytest.approx(1.0)
        al, ep = uncertainties(NigOutput.from_values(0.0, 2.0, 3.0, 4.0))
        assert ep[0] == pytest.approx(1.0)

    def test_small_beta_limit(self):
        al, ep = uncertainties(NigOutput.from_values(0.0, 1.0, 2.0, 1e-12))
        assert 0 < al[0] < 1e-11
        assert 0 < ep[0] < 1e-11


class TestPredictiveInterval:
    def test_frozen_t_quantile(self):
        lo, hi = predictive_interval(unit_nig(), 0.90)
        assert hi[0] == pytest.approx(T_095_DF4, abs=1e-6)
        assert lo[0] == pytest.approx(-T_095_DF4, abs=1e-6)

    def test_level_zero_degenerate(self):
        lo, hi = predictive_interval(unit_nig(gamma=0.4), 0.0)
        assert lo[0] == hi[0] == 0.4

    def test_symmetry(self):
        rng = np.random.default_rng(37)
        p = NigOutput.from_values(rng.normal(size=20), rng.uniform(0.5, 3, 20),
                                  rng.uniform(1.5, 4, 20), rng.uniform(0.5, 3, 20))
        lo, hi = predictive_interval(p, 0.8)
        np.testing.assert_allclose(hi - p.gamma.data.ravel(),
                                   p.gamma.data.ravel() - lo, rtol=1e-12)

    def test_width_monotone_in_level_and_beta(self):
        widths = []
        for level in (0.1, 0.5, 0.9, 0.99):
            lo, hi = predictive_interval(unit_nig(), level)
            widths.append(hi[0] - lo[0])
        assert all(a < b for a, b in zip(widths, widths[1:]))
        widths = []
        for beta in (0.5, 1.0, 2.0, 4.0):
            lo, hi = predictive_interval(unit_nig(beta=beta), 0.9)
            widths.append(hi[0] - lo[0])
        assert all(a < b for a, b in zip(widths, widths[1:]))

    def test_bad_level_rejected(self):
        with pytest.raises(ValueError):
            predictive_interval(unit_nig(), 1.0)
        with pytest.raises(ValueError):
            predictive_interval(unit_nig(), -0.1)
