"""Metrics, correlation rows, paired t-test, and the Whittle curve."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import k1 as scipy_k1

from sarfield import (
    DegenerateDataError,
    FieldEnsemble,
    InvalidParameterError,
    ParamFields,
    ShapeMismatchError,
    bessel_k1,
    correlation_rows,
    cov_rmse,
    paired_ttest,
    param_metrics,
    sample_anchors,
    ssim,
    whittle_correlation,
)
from sarfield.analytics import CHANNEL_RANGES, PSNR_CAP_DB


# ---------------------------------------------------------------------------
# param_metrics
# ---------------------------------------------------------------------------


def _params(rng, shape=(16, 16)) -> ParamFields:
    return ParamFields(
        kappa2=rng.uniform(0.1, 1.9, shape),
        rho=rng.uniform(1.0, 7.0, shape),
        theta=rng.uniform(-1.5, 1.5, shape),
    )


def test_metrics_identical_inputs(rng):
    truth = _params(rng)
    report = param_metrics(truth, truth)
    for metrics in report.channels.values():
        assert metrics.rmse == 0.0
        assert metrics.mae == 0.0
        assert metrics.ssim == 1.0
        assert metrics.psnr == PSNR_CAP_DB


def test_metrics_constant_offset(rng):
    truth = _params(rng)
    shifted = ParamFields.from_stack(truth.as_stack() + 0.5)
    report = param_metrics(shifted, truth)
    for name, metrics in report.channels.items():
        assert metrics.rmse == pytest.approx(0.5, abs=1e-12)
        assert metrics.mae == pytest.approx(0.5, abs=1e-12)
        assert metrics.nrmse == pytest.approx(0.5 / CHANNEL_RANGES[name], abs=1e-12)
        expected_psnr = 20 * math.log10(CHANNEL_RANGES[name]) - 10 * math.log10(0.25)
        assert metrics.psnr == pytest.approx(expected_psnr, abs=1e-10)


def test_metrics_theta_raw_by_default(rng):
    truth = _params(rng, shape=(8, 8))
    est = ParamFields.from_stack(truth.as_stack().copy())
    est.theta[3, 4] += math.pi
    raw = param_metrics(est, truth)
    assert raw.channels["theta"].rmse == pytest.approx(math.pi / 8.0, abs=1e-12)
    wrapped = param_metrics(est, truth, wrap_theta=True)
    assert wrapped.channels["theta"].rmse == pytest.approx(0.0, abs=1e-12)


def test_metrics_shape_mismatch(rng):
    with pytest.raises(ShapeMismatchError):
        param_metrics(_params(rng, (4, 4)), _params(rng, (5, 5)))


def test_metrics_table_mentions_all_channels(rng):
    table = param_metrics(_params(rng), _params(rng)).format_table()
    for name in ("kappa2", "rho", "theta", "RMSE", "NRMSE"):
        assert name in table


def test_ssim_self_is_exactly_one(rng):
    x = rng.standard_normal((20, 24))
    assert ssim(x, x, data_range=6.0) == 1.0


def test_ssim_detects_noise(rng):
    x = rng.standard_normal((20, 20))
    y = x + rng.standard_normal((20, 20))
    assert ssim(x, y, data_range=6.0) < 0.95


def test_ssim_small_images(rng):
    x = rng.standard_normal((5, 5))
    assert ssim(x, x, data_range=1.0) == 1.0


# ---------------------------------------------------------------------------
# correlation rows
# ---------------------------------------------------------------------------


def test_correlation_anchor_self_is_one(rng):
    data = rng.standard_normal((40, 6, 6))
    rows = correlation_rows(data, [(2, 3)])
    assert rows[0, 2 * 6 + 3] == 1.0


def test_correlation_linear_dependence(rng):
    data = rng.standard_normal((25, 3, 3))
    data[:, 1, 1] = 2.0 * data[:, 0, 0]
    rows = correlation_rows(data, [(0, 0)])
    assert rows[0, 4] == pytest.approx(1.0, abs=1e-12)


def test_correlation_iid_noise_null(rng):
    data = rng.standard_normal((1000, 8, 8))
    anchors = [(0, 0), (3, 4), (7, 7)]
    rows = correlation_rows(data, anchors)
    off = np.concatenate(
        [np.delete(rows[k], a[0] * 8 + a[1]) for k, a in enumerate(anchors)]
    )
    assert np.mean(np.abs(off) < 0.1) >= 0.99


def test_correlation_symmetric_between_anchors(rng):
    data = rng.standard_normal((30, 5, 5))
    rows = correlation_rows(data, [(1, 1), (3, 2)])
    assert rows[0, 3 * 5 + 2] == rows[1, 1 * 5 + 1]


def test_correlation_zero_variance_marked(rng):
    data = rng.standard_normal((20, 4, 4))
    data[:, 2, 2] = 5.0
    rows = correlation_rows(data, [(0, 0)])
    assert math.isnan(rows[0, 2 * 4 + 2])
    assert np.isfinite(np.delete(rows[0], 2 * 4 + 2)).all()


def test_correlation_needs_three_replicates(rng):
    with pytest.raises(InvalidParameterError):
        correlation_rows(rng.standard_normal((2, 3, 3)), [(0, 0)])


def test_correlation_accepts_field_ensemble(rng):
    ensemble = FieldEnsemble(data=rng.standard_normal((10, 4, 4)), seed=0)
    rows = correlation_rows(ensemble, [(1, 1)])
    assert rows.shape == (1, 16)


def test_sample_anchors_unique_and_seeded():
    a = sample_anchors((10, 12), 50, seed=3)
    b = sample_anchors((10, 12), 50, seed=3)
    assert a == b
    assert len(set(a)) == 50
    assert all(0 <= i < 10 and 0 <= j < 12 for i, j in a)


def test_cov_rmse_cases():
    rows = np.array([[1.0, 0.5, 0.2]])
    assert cov_rmse(rows, rows)[0] == 0.0
    assert cov_rmse(rows, rows - 0.1)[0] == pytest.approx(0.1, abs=1e-12)
    other = np.array([[1.0, 0.3, 0.4]])
    assert cov_rmse(rows, other)[0] == pytest.approx(math.sqrt(0.08 / 3.0), abs=1e-12)
    assert cov_rmse(rows, other)[0] == pytest.approx(0.1633, abs=2e-4)


def test_cov_rmse_excludes_nan():
    rows_true = np.array([[1.0, np.nan, 0.2, 0.4]])
    rows_sim = np.array([[1.0, 0.5, 0.2, np.nan]])
    assert cov_rmse(rows_true, rows_sim)[0] == 0.0
    with pytest.raises(ShapeMismatchError):
        cov_rmse(rows_true, np.zeros((2, 4)))


# ---------------------------------------------------------------------------
# paired t-test
# ---------------------------------------------------------------------------


def _t_cdf_quadrature(t: float, df: int) -> float:
    """Independent oracle: numerically integrate the t density."""

    def pdf(x):
        c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
        return c * (1 + x * x / df) ** (-(df + 1) / 2)

    if t <= 0:
        val, _ = quad(pdf, -np.inf, t)
        return val
    val, _ = quad(pdf, t, np.inf)
    return 1.0 - val


def test_ttest_df2_closed_form():
    result = paired_ttest([-1.0, -2.0, -3.0])
    assert result.df == 2
    assert result.t_stat == pytest.approx(-2.0 * math.sqrt(3.0), abs=1e-12)
    # Closed-form df=2 CDF: p = (1 - |t| / sqrt(t^2 + 2)) / 2 for t < 0.
    t = result.t_stat
    expected_p = 0.5 * (1.0 - abs(t) / math.sqrt(t * t + 2.0))
    assert result.p_value == pytest.approx(expected_p, abs=1e-12)
    assert result.p_value == pytest.approx(0.0371, abs=1e-3)


def test_ttest_symmetry():
    neg = paired_ttest([-1.0, -2.0, -3.0])
    pos = paired_ttest([1.0, 2.0, 3.0])
    assert pos.t_stat == -neg.t_stat
    assert pos.p_value == pytest.approx(1.0 - neg.p_value, abs=1e-12)
    assert pos.p_value == pytest.approx(0.9629, abs=1e-3)


def test_ttest_zero_mean():
    result = paired_ttest([-1.0, 0.0, 1.0])
    assert result.t_stat == 0.0
    assert result.p_value == 0.5


def test_ttest_matches_quadrature_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(3, 40))
        d = rng.standard_normal(n) * rng.uniform(0.5, 3.0) + rng.uniform(-1, 1)
        result = paired_ttest(d)
        mean, sd = d.mean(), d.std(ddof=1)
        t_ref = mean / (sd / math.sqrt(n))
        assert result.t_stat == pytest.approx(t_ref, abs=1e-10)
        assert result.p_value == pytest.approx(_t_cdf_quadrature(t_ref, n - 1), abs=1e-8)


def test_ttest_confidence_bound_covers_h1_shape(rng):
    # For strongly negative differences the 99% upper bound is negative,
    # matching a rejection of H0 at alpha = 0.01.
    result = paired_ttest(rng.normal(-1.0, 0.05, size=30))
    assert result.upper_conf_99 < 0
    assert result.p_value < 0.01
    assert "(-inf" in result.format_table()


def test_ttest_degenerate():
    with pytest.raises(DegenerateDataError):
        paired_ttest([2.0, 2.0, 2.0])
    with pytest.raises(InvalidParameterError):
        paired_ttest([1.0])


# ---------------------------------------------------------------------------
# Whittle correlation and K1
# ---------------------------------------------------------------------------


def test_whittle_at_zero_distance():
    assert whittle_correlation(0.7, 0.0) == 1.0


def test_whittle_k1_value():
    assert whittle_correlation(1.0, 1.0) == pytest.approx(0.6019, abs=1e-4)
    assert bessel_k1(1.0) == pytest.approx(scipy_k1(1.0), rel=1e-12)


def test_whittle_strictly_decreasing():
    d = np.linspace(0.1, 10.0, 100)
    c = whittle_correlation(0.8, d)
    assert np.all(np.diff(c) < 0)


def test_bessel_k1_against_reference():
    x = np.concatenate(
        [np.linspace(1e-3, 2.0, 60), np.linspace(2.0001, 40.0, 60), [100.0, 500.0, 700.0]]
    )
    mine = bessel_k1(x)
    ref = scipy_k1(x)
    rel = np.abs(mine - ref) / np.maximum(np.abs(ref), 1e-300)
    assert rel.max() < 1e-10


def test_bessel_k1_rejects_nonpositive():
    with pytest.raises(InvalidParameterError):
        bessel_k1(0.0)
    with pytest.raises(InvalidParameterError):
        whittle_correlation(-1.0, 1.0)
