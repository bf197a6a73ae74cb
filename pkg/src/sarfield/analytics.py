"""Evaluation mathematics: image metrics, correlation-row audits, paired
one-sided t-tests, and the Whittle (Matern nu=1) correlation curve.

Parameter-image metrics (RMSE, MAE, NRMSE, SSIM, PSNR) use each channel's
prior range as the dynamic range so that reported numbers are comparable
across channels. Correlation-row analysis audits second-order structure of an
ensemble through a handful of anchor pixels instead of the full n x n
correlation matrix. All computations are pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    DegenerateDataError,
    InvalidParameterError,
    ShapeMismatchError,
)
from .patterns import PARAM_SUPPORTS
from .sar import PARAM_CHANNELS, ParamFields
from .simulate import FieldEnsemble

#: Dynamic range of each parameter channel (its prior support width).
CHANNEL_RANGES: dict[str, float] = {
    kind: hi - lo for kind, (lo, hi) in PARAM_SUPPORTS.items()
}

#: PSNR is reported no higher than this (perfect reconstructions would be inf).
PSNR_CAP_DB = 100.0

# SSIM constants: 11x11 Gaussian window with sigma 1.5, K1/K2 per the
# standard structural-similarity formulation.
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


# ---------------------------------------------------------------------------
# Parameter-field metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelMetrics:
    rmse: float
    mae: float
    nrmse: float
    ssim: float
    psnr: float

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "nrmse": self.nrmse,
            "ssim": self.ssim,
            "psnr": self.psnr,
        }


@dataclass(frozen=True)
class MetricsReport:
    """Per-channel image metrics plus the constants they were computed with."""

    channels: dict[str, ChannelMetrics]
    settings: dict

    def to_dict(self) -> dict:
        return {
            "channels": {k: v.to_dict() for k, v in self.channels.items()},
            "settings": self.settings,
        }

    def format_table(self) -> str:
        header = f"{'channel':<10}{'RMSE':>10}{'MAE':>10}{'SSIM':>10}{'PSNR':>10}{'NRMSE':>10}"
        lines = [header]
        for name in PARAM_CHANNELS:
            m = self.channels[name]
            lines.append(
                f"{name:<10}{m.rmse:>10.4f}{m.mae:>10.4f}{m.ssim:>10.4f}"
                f"{m.psnr:>10.2f}{m.nrmse:>10.4f}"
            )
        return "\n".join(lines)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _window_means(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(x, window.shape)
    return np.einsum("ijkl,kl->ij", view, window)


def ssim(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """Mean structural similarity over valid (fully interior) windows.

    Gaussian-weighted local statistics; a smaller odd window is used when the
    image is narrower than the standard 11x11 one. Identical images score
    exactly 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"ssim inputs differ in shape: {x.shape} vs {y.shape}")
    size = min(SSIM_WINDOW, min(x.shape))
    if size % 2 == 0:
        size -= 1
    window = _gaussian_window(size, SSIM_SIGMA)

    mu_x = _window_means(x, window)
    mu_y = _window_means(y, window)
    xx = _window_means(x * x, window) - mu_x * mu_x
    yy = _window_means(y * y, window) - mu_y * mu_y
    xy = _window_means(x * y, window) - mu_x * mu_y

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def wrap_angle_difference(diff: np.ndarray) -> np.ndarray:
    """Map raw angle differences into [-pi/2, pi/2), honoring theta = theta + pi."""
    half = math.pi / 2
    return np.mod(diff + half, math.pi) - half


def param_metrics(
    estimate: ParamFields, truth: ParamFields, wrap_theta: bool = False
) -> MetricsReport:
    """RMSE / MAE / NRMSE / SSIM / PSNR per parameter channel.

    NRMSE and PSNR normalize by the channel's prior range. By default the
    theta channel is scored on raw differences; ``wrap_theta=True`` scores it
    on wrapped differences (theta is only identified modulo pi).
    """
    if estimate.shape != truth.shape:
        raise ShapeMismatchError(
            f"estimate shape {estimate.shape} does not match truth {truth.shape}"
        )
    channels: dict[str, ChannelMetrics] = {}
    est_stack = estimate.as_stack()
    true_stack = truth.as_stack()
    for idx, name in enumerate(PARAM_CHANNELS):
        rng_ = CHANNEL_RANGES[name]
        diff = est_stack[idx] - true_stack[idx]
        if name == "theta" and wrap_theta:
            diff = wrap_angle_difference(diff)
        mse = float(np.mean(diff**2))
        rmse = math.sqrt(mse)
        mae = float(np.mean(np.abs(diff)))
        if mse == 0.0:
            psnr = PSNR_CAP_DB
        else:
            psnr = min(PSNR_CAP_DB, 20.0 * math.log10(rng_) - 10.0 * math.log10(mse))
        channels[name] = ChannelMetrics(
            rmse=rmse,
            mae=mae,
            nrmse=rmse / rng_,
            ssim=ssim(est_stack[idx], true_stack[idx], data_range=rng_),
            psnr=psnr,
        )
    return MetricsReport(
        channels=channels,
        settings={
            "channel_ranges": dict(CHANNEL_RANGES),
            "ssim_window": SSIM_WINDOW,
            "ssim_sigma": SSIM_SIGMA,
            "ssim_k1": SSIM_K1,
            "ssim_k2": SSIM_K2,
            "psnr_cap_db": PSNR_CAP_DB,
            "theta_wrapped": wrap_theta,
        },
    )


# ---------------------------------------------------------------------------
# Correlation-row analysis
# ---------------------------------------------------------------------------


def sample_anchors(shape: tuple[int, int], count: int, seed: int) -> list[tuple[int, int]]:
    """Uniformly sample pixel locations without replacement."""
    h, w = shape
    if count < 1 or count > h * w:
        raise InvalidParameterError(f"anchor count {count} not in [1, {h * w}]")
    flat = np.random.default_rng(seed).choice(h * w, size=count, replace=False)
    return [(int(r // w), int(r % w)) for r in flat]


def correlation_rows(ensemble, anchors) -> np.ndarray:
    """Pearson correlation of each anchor pixel with every pixel.

    ``ensemble`` may be a FieldEnsemble or a bare (M, H, W) array with M >= 3.
    Returns an (n_anchors, H*W) array; pixels with zero variance across
    members get NaN (and each anchor's self-entry is exactly 1).
    """
    data = ensemble.data if isinstance(ensemble, FieldEnsemble) else np.asarray(ensemble, dtype=float)
    if data.ndim != 3:
        raise ShapeMismatchError(f"expected (M, H, W) data, got {data.shape}")
    m, h, w = data.shape
    if m < 3:
        raise InvalidParameterError(f"correlation rows need at least 3 replicates, got {m}")
    flat = data.reshape(m, h * w)
    centered = flat - flat.mean(axis=0)
    sumsq = np.einsum("mi,mi->i", centered, centered)
    defined = sumsq > 0.0

    rows = np.empty((len(anchors), h * w))
    for k, (ai, aj) in enumerate(anchors):
        if not (0 <= ai < h and 0 <= aj < w):
            raise InvalidParameterError(f"anchor ({ai}, {aj}) outside {h}x{w} grid")
        a = ai * w + aj
        if not defined[a]:
            rows[k] = np.nan
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            row = (centered[:, a] @ centered) / np.sqrt(sumsq[a] * sumsq)
        row[~defined] = np.nan
        row[a] = 1.0
        rows[k] = row
    return rows


def cov_rmse(rows_true: np.ndarray, rows_sim: np.ndarray) -> np.ndarray:
    """Per-anchor RMSE between matched correlation rows (NaNs excluded)."""
    rows_true = np.asarray(rows_true, dtype=float)
    rows_sim = np.asarray(rows_sim, dtype=float)
    if rows_true.shape != rows_sim.shape:
        raise ShapeMismatchError(
            f"correlation rows differ in shape: {rows_true.shape} vs {rows_sim.shape}"
        )
    out = np.empty(rows_true.shape[0])
    for k in range(rows_true.shape[0]):
        mask = np.isfinite(rows_true[k]) & np.isfinite(rows_sim[k])
        if not np.any(mask):
            out[k] = np.nan
            continue
        d = rows_true[k, mask] - rows_sim[k, mask]
        out[k] = math.sqrt(float(np.mean(d**2)))
    return out


@dataclass(frozen=True)
class CovAnalysisReport:
    """Anchor-based second-order comparison of two ensembles."""

    anchors: list[tuple[int, int]]
    per_anchor_rmse: np.ndarray
    mean_rmse: float

    def to_dict(self) -> dict:
        return {
            "anchors": [list(a) for a in self.anchors],
            "per_anchor_rmse": [float(v) for v in self.per_anchor_rmse],
            "mean_rmse": self.mean_rmse,
        }


def correlation_row_analysis(
    ensemble_true, ensemble_sim, anchors: list[tuple[int, int]]
) -> CovAnalysisReport:
    """Correlation rows of both ensembles at shared anchors, reduced to RMSE."""
    rows_true = correlation_rows(ensemble_true, anchors)
    rows_sim = correlation_rows(ensemble_sim, anchors)
    per_anchor = cov_rmse(rows_true, rows_sim)
    return CovAnalysisReport(
        anchors=list(anchors),
        per_anchor_rmse=per_anchor,
        mean_rmse=float(np.nanmean(per_anchor)),
    )


# ---------------------------------------------------------------------------
# Paired one-sided t-test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    """One-sided paired t-test of H1: mean difference < 0.

    ``upper_conf_99`` is the upper end of the one-sided 99% confidence
    interval (-inf, upper] for the mean difference.
    """

    mean_diff: float
    t_stat: float
    df: int
    p_value: float
    upper_conf_99: float

    def to_dict(self) -> dict:
        return {
            "mean_diff": self.mean_diff,
            "t_stat": self.t_stat,
            "df": self.df,
            "p_value": self.p_value,
            "upper_conf_99": self.upper_conf_99,
        }

    def format_table(self) -> str:
        header = f"{'mean_d':>12}{'t':>12}{'df':>6}{'p_one_sided':>14}{'99% CI':>24}"
        row = (
            f"{self.mean_diff:>12.5f}{self.t_stat:>12.4f}{self.df:>6d}"
            f"{self.p_value:>14.4g}{'(-inf, ' + format(self.upper_conf_99, '.5f') + ']':>24}"
        )
        return header + "\n" + row


def paired_ttest(differences) -> TTestResult:
    """t-test on paired differences with the one-sided alternative mean < 0.

    t = mean / (sd / sqrt(n)) with the sample (n-1) standard deviation;
    p = P(T_{n-1} <= t); the 99% bound is mean + t_{0.99, n-1} * sd / sqrt(n).
    """
    d = np.asarray(differences, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise InvalidParameterError("need a 1-D vector of at least 2 paired differences")
    if not np.all(np.isfinite(d)):
        raise InvalidParameterError("paired differences must be finite")
    n = d.size
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("paired differences have zero variance")
    mean = float(d.mean())
    se = sd / math.sqrt(n)
    t_stat = mean / se
    df = n - 1
    p = float(stats.t.cdf(t_stat, df))
    upper = mean + float(stats.t.ppf(0.99, df)) * se
    return TTestResult(mean_diff=mean, t_stat=t_stat, df=df, p_value=p, upper_conf_99=upper)


# ---------------------------------------------------------------------------
# Whittle correlation (Matern nu=1): c(d) = kappa d K1(kappa d)
# ---------------------------------------------------------------------------

_GAUSS_NODES = 240
_EXP_UNDERFLOW = 745.0
_leggauss_cache: tuple[np.ndarray, np.ndarray] | None = None


def _leggauss() -> tuple[np.ndarray, np.ndarray]:
    global _leggauss_cache
    if _leggauss_cache is None:
        _leggauss_cache = np.polynomial.legendre.leggauss(_GAUSS_NODES)
    return _leggauss_cache


def _k1_series(x: float) -> float:
    """Ascending series for K1 on (0, 2]: accurate, no cancellation there.

    K1(x) = ln(x/2) I1(x) + 1/x - (x/4) sum_k [psi(k+1)+psi(k+2)] q^k / (k!(k+1)!)
    with q = x^2/4 and I1 summed alongside.
    """
    q = 0.25 * x * x
    # k = 0 state
    i1_term = 0.5 * x  # (x/2)^(2k+1) / (k!(k+1)!)
    base = 1.0  # q^k / (k!(k+1)!)
    psi_a = -0.5772156649015328606  # psi(1)
    psi_b = psi_a + 1.0  # psi(2)
    i1 = i1_term
    s = psi_a + psi_b
    for k in range(1, 200):
        i1_term *= q / (k * (k + 1))
        base *= q / (k * (k + 1))
        psi_a += 1.0 / k
        psi_b += 1.0 / (k + 1)
        i1 += i1_term
        s += (psi_a + psi_b) * base
        if i1_term < 1e-18 * i1 and abs((psi_a + psi_b) * base) < 1e-18 * max(abs(s), 1.0):
            break
    return math.log(0.5 * x) * i1 + 1.0 / x - 0.25 * x * s


def _k1_integral(x: float) -> float:
    """K1 for x > 2 from the integral representation.

    K1(x) = integral_0^inf exp(-x cosh t) cosh t dt, truncated where the
    integrand underflows and evaluated by fixed Gauss-Legendre quadrature
    (spectrally accurate for this analytic, rapidly decaying integrand).
    """
    if x >= _EXP_UNDERFLOW:
        return 0.0
    t_max = math.acosh(_EXP_UNDERFLOW / x)
    nodes, weights = _leggauss()
    t = 0.5 * t_max * (nodes + 1.0)
    ch = np.cosh(t)
    return float(0.5 * t_max * np.sum(weights * np.exp(-x * ch) * ch))


def bessel_k1(x) -> np.ndarray | float:
    """Modified Bessel function of the second kind, order one.

    Self-contained evaluation split at x = 2: ascending series below,
    integral representation above. Accurate to ~1e-13 relative across the
    positive axis.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise InvalidParameterError("bessel_k1 requires finite x > 0")
    flat = arr.ravel()
    out = np.array([_k1_series(v) if v <= 2.0 else _k1_integral(v) for v in flat])
    if np.isscalar(x):
        return float(out[0])
    return out.reshape(arr.shape)


def whittle_correlation(kappa: float, d) -> np.ndarray | float:
    """Whittle (Matern nu=1) correlation at distance d: c(d) = kappa d K1(kappa d).

    c(0) = 1 by the small-argument limit of x K1(x); the curve decreases
    monotonically in d.
    """
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise InvalidParameterError(f"kappa must be finite and > 0, got {kappa!r}")
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0.0):
        raise InvalidParameterError("distance must be >= 0")
    x = np.atleast_1d(kappa * d_arr)
    out = np.ones_like(x)
    pos = x > 0.0
    if np.any(pos):
        out[pos] = x[pos] * np.asarray(bessel_k1(x[pos]))
    if d_arr.ndim == 0:
        return float(out[0])
    return out.reshape(d_arr.shape)
