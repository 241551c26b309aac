"""Similarity-dependent temperature profiles and the ODE slope verifier.

The vanilla profile is a cosine of the cosine similarity with minimum
tau_min at s = 0 and maximum tau_max at s = +-1. Shifted variants move the
minimum along the similarity axis and rescale the period so the extremes
keep tau_max; they are implemented exactly as printed in their source
algorithm, including the branch that pins tau to tau_max outside the cosine
window. Linear / exponential / monotonic-cosine variants share the same
[tau_min, tau_max] range contract.

The verifier numerically differentiates the closed-form curve
tau(s) = s / log(delta*K*s - c) and checks that the slope sign matches the
sign of s over a grid of (delta, K, c) cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericError, ValidationError
from .numeric import fmt

DOMAIN_SLACK = 1e-9
SINGULARITY_BAND = 1e-6
SLOPE_SIGN_EXCLUSION = 1e-3

VARIANTS = (
    "constant",
    "cosine_vanilla",
    "cosine_shifted",
    "linear",
    "exponential",
    "monotonic_cosine",
)


@dataclass(frozen=True)
class TemperatureProfile:
    """Tagged temperature function tau(s) over cosine similarity s in [-1, 1].

    Every variant maps into [tau_min, tau_max]. Use the classmethod
    constructors rather than building instances by hand.
    """

    variant: str
    tau_min: float
    tau_max: float
    shift: float = 0.0      # cosine_shifted only (delta-s)
    scale: float = 1.0      # cosine_shifted only (k)
    sharpness: float = 1.0  # exponential only (a)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown profile variant {self.variant!r}")
        if not (0.0 < self.tau_min <= self.tau_max):
            raise ValidationError(
                f"need 0 < tau_min <= tau_max, got ({self.tau_min}, {self.tau_max})"
            )
        if self.variant == "cosine_shifted":
            if not (0.0 < self.scale <= 2.0):
                raise ValidationError(f"shifted-profile scale must be in (0, 2], got {self.scale}")
            if not (-1.0 <= self.shift <= 1.0):
                raise ValidationError(f"shifted-profile shift must be in [-1, 1], got {self.shift}")
        if self.variant == "exponential" and self.sharpness <= 0.0:
            raise ValidationError(f"exponential sharpness must be positive, got {self.sharpness}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, tau: float) -> "TemperatureProfile":
        return cls("constant", tau, tau)

    @classmethod
    def cosine_vanilla(cls, tau_min: float, tau_max: float) -> "TemperatureProfile":
        return cls("cosine_vanilla", tau_min, tau_max)

    @classmethod
    def cosine_shifted(
        cls, tau_min: float, tau_max: float, shift: float, scale: float
    ) -> "TemperatureProfile":
        return cls("cosine_shifted", tau_min, tau_max, shift=shift, scale=scale)

    @classmethod
    def linear(cls, tau_min: float, tau_max: float) -> "TemperatureProfile":
        return cls("linear", tau_min, tau_max)

    @classmethod
    def exponential(cls, tau_min: float, tau_max: float, sharpness: float = 1.0) -> "TemperatureProfile":
        return cls("exponential", tau_min, tau_max, sharpness=sharpness)

    @classmethod
    def monotonic_cosine(cls, tau_min: float, tau_max: float) -> "TemperatureProfile":
        return cls("monotonic_cosine", tau_min, tau_max)

    # -- evaluation --------------------------------------------------------

    def _check_domain(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if np.any(np.abs(s) > 1.0 + DOMAIN_SLACK):
            bad = float(s.flat[int(np.argmax(np.abs(s)))])
            raise DomainError(f"cosine similarity {bad} outside [-1, 1]")
        return np.clip(s, -1.0, 1.0)

    def tau(self, s):
        """Temperature per entry; accepts scalars or arrays, s in [-1, 1]."""
        scalar = np.isscalar(s) or np.ndim(s) == 0
        s = self._check_domain(s)
        dt = self.tau_max - self.tau_min
        if self.variant == "constant":
            out = np.full_like(s, self.tau_min)
        elif self.variant == "cosine_vanilla":
            out = self.tau_min + 0.5 * dt * (1.0 + np.cos(np.pi * (1.0 + s)))
        elif self.variant == "cosine_shifted":
            ds, k = self.shift, self.scale
            in_window = ((ds <= 0) & (s <= -ds)) | ((ds >= 0) & (s >= -ds))
            cosine = self.tau_min + 0.5 * dt * (1.0 + np.cos((np.pi / k) * (ds + s)))
            out = np.where(in_window, cosine, self.tau_max)
        elif self.variant == "linear":
            out = self.tau_min + dt * np.abs(s)
        elif self.variant == "exponential":
            a = self.sharpness
            out = self.tau_min + dt * (np.exp(a * np.abs(s)) - 1.0) / (math.exp(a) - 1.0)
        else:  # monotonic_cosine
            out = self.tau_min + 0.5 * dt * (1.0 - np.cos(np.pi * (1.0 + s) / 2.0))
        # cos() round-off can leak a few ulp past the band
        out = np.clip(out, self.tau_min, self.tau_max)
        return float(out) if scalar else out

    def dtau_ds(self, s):
        """Analytic derivative of tau w.r.t. s (sub-gradient 0 at kinks)."""
        scalar = np.isscalar(s) or np.ndim(s) == 0
        s = self._check_domain(s)
        dt = self.tau_max - self.tau_min
        if self.variant == "constant":
            out = np.zeros_like(s)
        elif self.variant == "cosine_vanilla":
            out = -0.5 * dt * np.pi * np.sin(np.pi * (1.0 + s))
        elif self.variant == "cosine_shifted":
            ds, k = self.shift, self.scale
            in_window = ((ds <= 0) & (s <= -ds)) | ((ds >= 0) & (s >= -ds))
            slope = -0.5 * dt * (np.pi / k) * np.sin((np.pi / k) * (ds + s))
            out = np.where(in_window, slope, 0.0)
        elif self.variant == "linear":
            out = dt * np.sign(s)
        elif self.variant == "exponential":
            a = self.sharpness
            out = dt * a * np.sign(s) * np.exp(a * np.abs(s)) / (math.exp(a) - 1.0)
        else:  # monotonic_cosine
            out = 0.5 * dt * (np.pi / 2.0) * np.sin(np.pi * (1.0 + s) / 2.0)
        return float(out) if scalar else out

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "tau_min": self.tau_min, "tau_max": self.tau_max}
        if self.variant == "cosine_shifted":
            d["shift"] = self.shift
            d["scale"] = self.scale
        if self.variant == "exponential":
            d["sharpness"] = self.sharpness
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TemperatureProfile":
        allowed = {"variant", "tau_min", "tau_max", "shift", "scale", "sharpness"}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown profile fields: {sorted(unknown)}")
        if "variant" not in d:
            raise ValidationError("profile needs a 'variant' field")
        return cls(**d)

    def spec_string(self) -> str:
        """Compact CLI form, e.g. cosine:0.1:0.2 or shifted:0.1:0.2:-0.4:0.7."""
        if self.variant == "constant":
            return f"constant:{self.tau_min:g}"
        if self.variant == "cosine_vanilla":
            return f"cosine:{self.tau_min:g}:{self.tau_max:g}"
        if self.variant == "cosine_shifted":
            return f"shifted:{self.tau_min:g}:{self.tau_max:g}:{self.shift:g}:{self.scale:g}"
        if self.variant == "exponential":
            return f"exponential:{self.tau_min:g}:{self.tau_max:g}:{self.sharpness:g}"
        short = {"linear": "linear", "monotonic_cosine": "monotonic"}[self.variant]
        return f"{short}:{self.tau_min:g}:{self.tau_max:g}"

    @classmethod
    def from_spec_string(cls, spec: str) -> "TemperatureProfile":
        parts = spec.split(":")
        name, args = parts[0].lower(), parts[1:]
        try:
            vals = [float(x) for x in args]
        except ValueError as err:
            raise ValidationError(f"bad profile spec {spec!r}: {err}") from err
        try:
            if name == "constant" and len(vals) == 1:
                return cls.constant(vals[0])
            if name in ("cosine", "cosine_vanilla") and len(vals) == 2:
                return cls.cosine_vanilla(*vals)
            if name in ("shifted", "cosine_shifted") and len(vals) == 4:
                return cls.cosine_shifted(*vals)
            if name == "linear" and len(vals) == 2:
                return cls.linear(*vals)
            if name in ("exponential", "exp") and len(vals) in (2, 3):
                return cls.exponential(*vals)
            if name in ("monotonic", "monotonic_cosine") and len(vals) == 2:
                return cls.monotonic_cosine(*vals)
        except ValidationError:
            raise
        raise ValidationError(f"bad profile spec {spec!r}")


def profile_curve(profile: TemperatureProfile, samples: int) -> np.ndarray:
    """(s, tau) table over `samples` evenly spaced s in [-1, 1]."""
    if samples < 2:
        raise ValidationError(f"need at least 2 samples, got {samples}")
    s = np.linspace(-1.0, 1.0, samples)
    return np.column_stack([s, profile.tau(s)])


def write_profile_csv(path: str | Path, profile: TemperatureProfile, samples: int) -> None:
    table = profile_curve(profile, samples)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("s,tau\n")
        for s, t in table:
            fh.write(f"{fmt(s)},{fmt(t)}\n")


# ---------------------------------------------------------------------------
# Closed-form ODE curve and the slope-sign verifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OdeParams:
    """Parameters of the closed-form curve tau(s) = s / log(delta*K*s - c)."""

    delta: float
    bigK: float
    tau_max: float
    c: float

    def __post_init__(self):
        if self.delta <= 0 or self.bigK <= 0 or self.tau_max <= 0:
            raise ValidationError("delta, bigK, and tau_max must be positive")


@dataclass
class OdeCurve:
    """Sampled curve with a validity mask (invalid points kept, not dropped)."""

    s: np.ndarray
    tau: np.ndarray
    valid: np.ndarray
    params: OdeParams


def boundary_constants(delta: float, bigK: float, tau_max: float) -> tuple[float, float]:
    """Integral constants anchoring the curve family at the similarity extremes.

    Returns (c_minus, c_plus) with c_minus = -delta*K - exp(-1/tau_max) and
    c_plus = -delta*K - exp(+1/tau_max); c_plus < c_minus always.
    """
    if delta <= 0 or bigK <= 0 or tau_max <= 0:
        raise ValidationError("delta, bigK, and tau_max must be positive")
    if 1.0 / tau_max > 709.0:
        raise NumericError(f"exp(1/tau_max) overflows float64 for tau_max = {tau_max}")
    dk = delta * bigK
    c_minus = -dk - math.exp(-1.0 / tau_max)
    c_plus = -dk - math.exp(1.0 / tau_max)
    return c_minus, c_plus


def ode_curve(params: OdeParams, grid: Sequence[float]) -> OdeCurve:
    """Evaluate tau(s) = s / log(delta*K*s - c) over the grid.

    Grid points where the log argument is non-positive, within the
    singularity band |arg - 1| < 1e-6 (or within 1e-6 of the root of
    arg = 1 in s), or where tau <= 0, are flagged invalid but kept.
    """
    s = np.asarray(grid, dtype=np.float64)
    if np.any(np.abs(s) > 1.0 + DOMAIN_SLACK):
        raise DomainError("ODE grid must lie within [-1, 1]")
    dk = params.delta * params.bigK
    arg = dk * s - params.c
    tau = np.full_like(s, np.nan)
    pos = arg > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_arg = np.log(arg[pos])
        tau[pos] = np.where(log_arg != 0.0, s[pos] / log_arg, np.nan)
    s_star = (1.0 + params.c) / dk  # where the log argument crosses 1
    valid = (
        pos
        & (np.abs(arg - 1.0) >= SINGULARITY_BAND)
        & (np.abs(s - s_star) >= SINGULARITY_BAND)
        & np.isfinite(tau)
        & (tau > 0)
    )
    return OdeCurve(s=s, tau=tau, valid=valid, params=params)


@dataclass
class SlopeCell:
    """Sign-check summary for one (delta, K, c) combination."""

    delta: float
    bigK: float
    c: float
    frac_correct_sign: float
    valid_points: int
    insufficient_samples: bool

    @property
    def passed(self) -> bool:
        return not self.insufficient_samples and self.frac_correct_sign == 1.0


@dataclass
class Proposition1Report:
    cells: list[SlopeCell] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return bool(self.cells) and all(c.passed for c in self.cells)


def slope_sign_cell(params: OdeParams, grid: np.ndarray) -> SlopeCell:
    """Central-difference slope signs of one curve against sign(s).

    Points near the stationary point (|s| < 1e-3), invalid points, and points
    whose finite-difference neighbors are invalid are excluded.
    """
    curve = ode_curve(params, grid)
    s, tau, valid = curve.s, curve.tau, curve.valid
    if s.size < 3:
        return SlopeCell(params.delta, params.bigK, params.c, float("nan"), 0, True)
    checked = valid[1:-1] & valid[:-2] & valid[2:] & (np.abs(s[1:-1]) >= SLOPE_SIGN_EXCLUSION)
    count = int(checked.sum())
    if count == 0:
        return SlopeCell(params.delta, params.bigK, params.c, float("nan"), 0, True)
    slope = (tau[2:] - tau[:-2]) / (s[2:] - s[:-2])
    correct = np.sign(slope[checked]) == np.sign(s[1:-1][checked])
    frac = float(np.count_nonzero(correct)) / count
    return SlopeCell(params.delta, params.bigK, params.c, frac, count, False)


def sample_constants(c_minus: float, c_plus: float, c_count: int) -> np.ndarray:
    """c values for the verifier: midpoints of c_count equal subintervals.

    The interval endpoints themselves are excluded deliberately: the
    c_minus curve is the boundary member of the family and its negative-half
    branch runs into the log singularity (slope sign undefined as a family
    property there), so the verifier samples the interior of [c_plus, c_minus].
    """
    if c_count < 2:
        raise ValidationError(f"need at least 2 constants, got {c_count}")
    edges = np.linspace(c_plus, c_minus, c_count + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def verify_proposition1(
    delta_grid: Sequence[float],
    bigK_grid: Sequence[float],
    tau_max: float,
    c_count: int,
    s_count: int,
) -> Proposition1Report:
    """Check sign(dtau/ds) == sign(s) over a (delta, K, c) grid of curves."""
    if len(delta_grid) == 0 or len(bigK_grid) == 0:
        raise ValidationError("delta and K grids must be non-empty")
    grid = np.linspace(-1.0, 1.0, s_count)
    report = Proposition1Report()
    for delta in delta_grid:
        for bigK in bigK_grid:
            c_minus, c_plus = boundary_constants(delta, bigK, tau_max)
            for c in sample_constants(c_minus, c_plus, c_count):
                cell = slope_sign_cell(OdeParams(delta, bigK, tau_max, float(c)), grid)
                report.cells.append(cell)
    return report


def write_ode_report_csv(path: str | Path, report: Proposition1Report) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("delta,bigk,c,frac_correct_sign,valid_points\n")
        for cell in report.cells:
            fh.write(
                f"{fmt(cell.delta)},{fmt(cell.bigK)},{fmt(cell.c)},"
                f"{fmt(cell.frac_correct_sign)},{cell.valid_points}\n"
            )


def summarize_ode_report(report: Proposition1Report) -> str:
    n = len(report.cells)
    insufficient = sum(c.insufficient_samples for c in report.cells)
    failed = sum(1 for c in report.cells if not c.passed)
    status = "PASS" if report.all_pass else "FAIL"
    return (
        f"summary: {status} ({n - failed}/{n} cells with slope-sign fraction 1.0, "
        f"{insufficient} insufficient)"
    )
