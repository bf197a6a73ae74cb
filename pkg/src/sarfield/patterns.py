"""Random parameter-field generation from eight spatial pattern families.

Every parameter image (kappa2, rho, or theta) is produced by picking a
pattern kind, sampling its hyperparameters from fixed uniform priors,
sampling parameter values from the per-parameter priors, optionally blending
two independently generated patterns, and finally clamping into the
parameter's support. The patterns are deliberately simple caricatures of
geophysical variability: sigmoidal coastlines, smooth tapers, Gaussian bumps,
periodic waves, and low-rank random surfaces.

Grid coordinates are normalized to the unit square [-1, 1] x [-1, 1]
(column j -> s_x, row i -> s_y); the hyperparameter priors (bump widths,
taper sharpness, wave frequencies) are calibrated to that O(1) domain.

Generation is a pure function of (config, rng state): a fixed seed yields a
bit-identical field, and independent fields may be produced in parallel from
per-field derived seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping

import numpy as np
from scipy.special import expit, ndtr

from .errors import InvalidParameterError, ShapeMismatchError
from .sar import GridGeometry

PATTERN_KINDS = (
    "constant",
    "coastline",
    "taper",
    "bump",
    "sinwave",
    "double_bump",
    "double_coastline",
    "gp_based",
)

PARAM_KINDS = ("kappa2", "rho", "theta")

#: Support of each parameter's value prior (also the clamping range).
PARAM_SUPPORTS: dict[str, tuple[float, float]] = {
    "kappa2": (1e-4, 2.0),
    "rho": (1.0, 7.0),
    "theta": (-math.pi / 2, math.pi / 2),
}

#: Probability that a kappa2 value draw uses the log-uniform branch of its
#: mixed prior (the remainder is plain uniform on the same support).
KAPPA2_LOG_BRANCH_PROB = 0.6

#: Bump amplitude priors depend on which parameter the field is for.
BUMP_AMPLITUDE_PRIORS: dict[str, tuple[float, float]] = {
    "kappa2": (0.1, 0.5),
    "rho": (0.1, 1.5),
    "theta": (0.1, math.pi / 4),
}


@dataclass(frozen=True)
class ParamPrior:
    """Value prior for one parameter kind.

    rho ~ U(1, 7) and theta ~ U(-pi/2, pi/2); kappa2 uses a 0.6/0.4 mixture
    of log-uniform and uniform on (1e-4, 2). ``sample`` reports which mixture
    branch fired so that downstream provenance can record it.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise InvalidParameterError(f"unknown parameter kind {self.kind!r}")

    @property
    def support(self) -> tuple[float, float]:
        return PARAM_SUPPORTS[self.kind]

    def sample(self, rng: np.random.Generator) -> tuple[float, str | None]:
        lo, hi = self.support
        if self.kind == "kappa2":
            if rng.random() < KAPPA2_LOG_BRANCH_PROB:
                return float(np.exp(rng.uniform(np.log(lo), np.log(hi)))), "log"
            return float(rng.uniform(lo, hi)), "uniform"
        return float(rng.uniform(lo, hi)), None


@dataclass
class PatternSpec:
    """One sampled pattern: kind, hyperparameters, and parameter values.

    ``omega`` holds the kind-specific hyperparameters; ``values`` holds the
    sampled parameter values (p_low/p_high or p_constant); ``branches``
    records the kappa2 mixture branch, where applicable, for each value.
    """

    kind: str
    param_kind: str
    omega: dict
    values: dict
    branches: dict = dc_field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "param_kind": self.param_kind,
                "omega": self.omega,
                "values": self.values,
                "branches": self.branches,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PatternSpec":
        raw = json.loads(text)
        return cls(
            kind=raw["kind"],
            param_kind=raw["param_kind"],
            omega=raw["omega"],
            values=raw["values"],
            branches=raw.get("branches", {}),
        )


def _sample_coastline_omega(rng: np.random.Generator) -> dict:
    # The vertical offset epsilon has no stated prior; U(-0.25, 0.25) keeps
    # the boundary near mid-domain.
    return {
        "alpha": float(rng.uniform(-2.0, 2.0)),
        "beta": float(rng.uniform(0.1, 0.5)),
        "omega": float(rng.uniform(0.4, 3.0)),
        "gamma": float(rng.uniform(3.0, 50.0)),
        "epsilon": float(rng.uniform(-0.25, 0.25)),
    }


def _sample_bump_core(param_kind: str, rng: np.random.Generator) -> tuple[float, float]:
    a_lo, a_hi = BUMP_AMPLITUDE_PRIORS[param_kind]
    return float(rng.uniform(a_lo, a_hi)), float(rng.uniform(0.2, 0.5))


def sample_pattern_spec(kind: str, param_kind: str, rng: np.random.Generator) -> PatternSpec:
    """Draw a full PatternSpec for one pattern kind.

    Hyperparameters come from the per-kind priors; parameter values come from
    the ParamPrior of ``param_kind``. Kinds built around a transition sample
    two ordered values (p_low <= p_high); kinds built around a base level
    sample a single p_constant, with their excursion governed by the kind's
    amplitude hyperparameters.
    """
    if kind not in PATTERN_KINDS:
        raise InvalidParameterError(f"unknown pattern kind {kind!r}")
    prior = ParamPrior(param_kind)
    omega: dict = {}
    values: dict = {}
    branches: dict = {}

    def draw_extremes():
        v1, b1 = prior.sample(rng)
        v2, b2 = prior.sample(rng)
        (lo_v, lo_b), (hi_v, hi_b) = sorted([(v1, b1), (v2, b2)], key=lambda t: t[0])
        values["p_low"], values["p_high"] = lo_v, hi_v
        branches["p_low"], branches["p_high"] = lo_b, hi_b

    def draw_constant():
        values["p_constant"], branches["p_constant"] = prior.sample(rng)

    if kind == "constant":
        draw_constant()
    elif kind == "coastline":
        omega = _sample_coastline_omega(rng)
        draw_extremes()
    elif kind == "taper":
        omega = {"sigma": float(rng.uniform(0.05, 1.0))}
        draw_extremes()
    elif kind == "bump":
        a1, lam1 = _sample_bump_core(param_kind, rng)
        omega = {"a1": a1, "lambda1": lam1}
        draw_constant()
    elif kind == "sinwave":
        omega = {
            "omega": float(rng.uniform(1.5, 5.0)),
            "orientation": "horizontal" if rng.random() < 0.5 else "vertical",
        }
        draw_constant()
        lo, hi = prior.support
        headroom = min(values["p_constant"] - lo, hi - values["p_constant"])
        omega["a"] = float(rng.uniform(0.0, headroom))
    elif kind == "double_bump":
        a1, lam1 = _sample_bump_core(param_kind, rng)
        a2, lam2 = _sample_bump_core(param_kind, rng)
        omega = {
            "a1": a1,
            "lambda1": lam1,
            "a2": a2,
            "lambda2": lam2,
            "x1": float(rng.uniform(-1.0, 1.0)),
            "y1": float(rng.uniform(-1.0, 1.0)),
            "x2": float(rng.uniform(-1.0, 1.0)),
            "y2": float(rng.uniform(-1.0, 1.0)),
        }
        draw_constant()
    elif kind == "double_coastline":
        w1 = float(rng.uniform(0.1, 0.9))
        w2 = float(rng.uniform(0.1, 1.0 - w1))
        omega = {
            "w1": w1,
            "w2": w2,
            "coast1": _sample_coastline_omega(rng),
            "coast2": _sample_coastline_omega(rng),
        }
        draw_extremes()
    elif kind == "gp_based":
        omega = {
            "n_basis": int(rng.integers(6, 33)),
            "scaling": "minmax" if rng.random() < 0.5 else "perturbation",
            "weights_seed": int(rng.integers(0, 2**63)),
        }
        if omega["scaling"] == "perturbation":
            omega["magnitude"] = float(rng.uniform(0.05, 0.3))
            draw_constant()
    return PatternSpec(kind=kind, param_kind=param_kind, omega=omega, values=values, branches=branches)


def axis_coordinates(n: int) -> np.ndarray:
    """Normalized lattice coordinates: n points spanning [-1, 1] (0 if n=1)."""
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def grid_coordinates(geometry: GridGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Broadcastable (s_x, s_y): column j -> s_x, row i -> s_y, both in [-1, 1]."""
    s_x = axis_coordinates(geometry.width)[np.newaxis, :]
    s_y = axis_coordinates(geometry.height)[:, np.newaxis]
    return s_x, s_y


def _coastline_sigmoid(omega: dict, s_x: np.ndarray, s_y: np.ndarray) -> np.ndarray:
    """Unit coastline: sigmoid in the signed distance from a wavy boundary."""
    v = omega["alpha"] * s_x + omega["beta"] * np.sin(2.0 * np.pi * omega["omega"] * s_x)
    v = v + omega["epsilon"]
    return expit(omega["gamma"] * (s_y - v))


def _low_rank_surface(n_basis: int, weights_seed: int, s_x: np.ndarray, s_y: np.ndarray) -> np.ndarray:
    """Smooth random surface from tensor-product Gaussian bases, min-max scaled to [0, 1].

    Bases sit on an n_basis x n_basis grid over the domain with bandwidth
    equal to the basis spacing; weights are i.i.d. standard normal from the
    stored seed, so the surface is exactly reproducible from the spec alone.
    """
    centers = np.linspace(-1.0, 1.0, n_basis)
    spacing = 2.0 / (n_basis - 1)
    rng = np.random.default_rng(weights_seed)
    w = rng.standard_normal((n_basis, n_basis))
    phi_y = np.exp(-((s_y.ravel()[:, None] - centers) ** 2) / (2.0 * spacing**2))
    phi_x = np.exp(-((s_x.ravel()[:, None] - centers) ** 2) / (2.0 * spacing**2))
    raw = phi_y @ w @ phi_x.T
    span = raw.max() - raw.min()
    if span == 0.0:  # pragma: no cover - needs a constant random surface
        return np.zeros_like(raw)
    return (raw - raw.min()) / span


def evaluate_pattern(spec: PatternSpec, geometry: GridGeometry) -> np.ndarray:
    """Evaluate a sampled pattern on the grid (raw values, before clamping)."""
    s_x, s_y = grid_coordinates(geometry)
    omega, values = spec.omega, spec.values
    h, w = geometry.shape

    if spec.kind == "constant":
        return np.full((h, w), values["p_constant"])

    if spec.kind == "coastline":
        sig = _coastline_sigmoid(omega, s_x, s_y)
        return values["p_low"] + (values["p_high"] - values["p_low"]) * sig

    if spec.kind == "taper":
        z = (s_x + s_y) / omega["sigma"]
        psi = ndtr(z)
        return values["p_low"] * psi + values["p_high"] * (1.0 - psi)

    if spec.kind == "bump":
        r2 = s_x**2 + s_y**2
        return values["p_constant"] + omega["a1"] * np.exp(-r2 / omega["lambda1"])

    if spec.kind == "sinwave":
        if omega["orientation"] == "horizontal":
            wave = np.sin(np.pi * omega["omega"] * s_x)
        else:
            wave = np.cos(np.pi * omega["omega"] * s_y)
        return values["p_constant"] + omega["a"] * np.broadcast_to(wave, (h, w))

    if spec.kind == "double_bump":
        r2a = (s_x - omega["x1"]) ** 2 + (s_y - omega["y1"]) ** 2
        r2b = (s_x - omega["x2"]) ** 2 + (s_y - omega["y2"]) ** 2
        return (
            values["p_constant"]
            + omega["a1"] * np.exp(-r2a / omega["lambda1"])
            + omega["a2"] * np.exp(-r2b / omega["lambda2"])
        )

    if spec.kind == "double_coastline":
        # Weighted blend of two unit coastlines, scaled into [p_low, p_high];
        # w1 + w2 <= 1 keeps the blend inside the sampled value range.
        blend = omega["w1"] * _coastline_sigmoid(omega["coast1"], s_x, s_y)
        blend = blend + omega["w2"] * _coastline_sigmoid(omega["coast2"], s_x, s_y)
        return values["p_low"] + (values["p_high"] - values["p_low"]) * blend

    if spec.kind == "gp_based":
        g0 = _low_rank_surface(omega["n_basis"], omega["weights_seed"], s_x, s_y)
        if omega["scaling"] == "minmax":
            # Convex form so the rescaled field attains the prior bounds exactly.
            lo, hi = PARAM_SUPPORTS[spec.param_kind]
            return (1.0 - g0) * lo + g0 * hi
        return values["p_constant"] * (1.0 + omega["magnitude"] * (2.0 * g0 - 1.0))

    raise InvalidParameterError(f"unknown pattern kind {spec.kind!r}")


def stack_patterns(p1: np.ndarray, p2: np.ndarray, weight: float) -> np.ndarray:
    """Pointwise convex blend weight*p1 + (1-weight)*p2."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ShapeMismatchError(f"cannot stack fields of shapes {p1.shape} and {p2.shape}")
    return weight * p1 + (1.0 - weight) * p2


@dataclass(frozen=True)
class PatternConfig:
    """Controls for field generation: grid, pattern frequencies, stacking.

    ``frequencies`` maps pattern kinds to relative weights (normalized
    internally); None means uniform over all eight kinds. With probability
    ``stacking_probability`` two independently generated patterns (kinds may
    repeat) are blended with weight w ~ U(0.1, 0.9).
    """

    geometry: GridGeometry
    frequencies: Mapping[str, float] | None = None
    stacking_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.stacking_probability <= 1.0:
            raise InvalidParameterError("stacking probability must lie in [0, 1]")
        if self.frequencies is not None:
            unknown = set(self.frequencies) - set(PATTERN_KINDS)
            if unknown:
                raise InvalidParameterError(f"unknown pattern kinds in frequencies: {sorted(unknown)}")
            if any(v < 0 for v in self.frequencies.values()):
                raise InvalidParameterError("pattern frequencies must be nonnegative")
            if sum(self.frequencies.values()) <= 0:
                raise InvalidParameterError("pattern frequencies must not all be zero")

    def kind_probabilities(self) -> np.ndarray:
        if self.frequencies is None:
            return np.full(len(PATTERN_KINDS), 1.0 / len(PATTERN_KINDS))
        weights = np.array([float(self.frequencies.get(k, 0.0)) for k in PATTERN_KINDS])
        return weights / weights.sum()


@dataclass
class ParamFieldDraw:
    """A generated parameter field plus everything needed to reproduce it."""

    field: np.ndarray
    specs: list[PatternSpec]
    stack_weight: float | None
    clamp_count: int

    def provenance(self) -> dict:
        return {
            "specs": [json.loads(s.to_json()) for s in self.specs],
            "stack_weight": self.stack_weight,
            "clamp_count": self.clamp_count,
        }


def clamp_to_support(values: np.ndarray, param_kind: str) -> tuple[np.ndarray, int]:
    """Force a field into its parameter support; returns (field, n_changed).

    kappa2 and rho clip to their ranges. theta wraps modulo pi into
    [-pi/2, pi/2) instead of clipping: the dispersion tensor is pi-periodic
    in theta, so wrapping preserves the anisotropy direction that clipping
    would destroy. Cells already in range are left bit-exactly untouched.
    """
    lo, hi = PARAM_SUPPORTS[param_kind]
    if param_kind == "theta":
        outside = (values < lo) | (values >= hi)
        wrapped = np.where(outside, np.mod(values + hi, np.pi) - hi, values)
        return wrapped, int(np.count_nonzero(outside))
    clipped = np.clip(values, lo, hi)
    return clipped, int(np.count_nonzero(clipped != values))


def draw_param_field(
    param_kind: str, config: PatternConfig, rng: np.random.Generator
) -> ParamFieldDraw:
    """Generate one parameter field with full provenance.

    Draw order (fixed for reproducibility): stacking decision, first kind +
    spec, then optionally second kind + spec and the blend weight, then
    support clamping.
    """
    if param_kind not in PARAM_KINDS:
        raise InvalidParameterError(f"unknown parameter kind {param_kind!r}")
    probs = config.kind_probabilities()
    do_stack = rng.random() < config.stacking_probability

    kind1 = PATTERN_KINDS[rng.choice(len(PATTERN_KINDS), p=probs)]
    spec1 = sample_pattern_spec(kind1, param_kind, rng)
    field = evaluate_pattern(spec1, config.geometry)
    specs = [spec1]
    stack_weight = None

    if do_stack:
        kind2 = PATTERN_KINDS[rng.choice(len(PATTERN_KINDS), p=probs)]
        spec2 = sample_pattern_spec(kind2, param_kind, rng)
        stack_weight = float(rng.uniform(0.1, 0.9))
        field = stack_patterns(field, evaluate_pattern(spec2, config.geometry), stack_weight)
        specs.append(spec2)

    field, clamp_count = clamp_to_support(field, param_kind)
    return ParamFieldDraw(field=field, specs=specs, stack_weight=stack_weight, clamp_count=clamp_count)


def sample_param_field(
    param_kind: str, config: PatternConfig, rng: np.random.Generator
) -> np.ndarray:
    """Generate one parameter field (see draw_param_field for provenance)."""
    return draw_param_field(param_kind, config, rng).field
