"""Ensemble statistics, scaling fits and bond-dimension predictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

SNR_CAP = 1e8
C_H = 0.5
C_D = 1.0 / (2.0 * np.sqrt(2.0))
V_OVER_C_LATTICE = 0.7
V_OVER_C_DIAGONAL = 0.95


class ZeroVarianceError(ValueError):
    """A series entering the SNR has no spread."""


# ---------------------------------------------------------------------------
# ensemble records


@dataclass(frozen=True)
class ResultRecord:
    instance_index: int
    exact_value: float
    approx_value: float
    method: str
    D: int | None = None
    chi: int | None = None
    runtime_seconds: float | None = None
    discarded_weight: float = 0.0
    fidelity: float | None = None


@dataclass
class EnsembleResults:
    """Per-instance exact and approximate values of one ensemble and setting."""

    spec_hash: str
    records: list[ResultRecord] = field(default_factory=list)

    def __post_init__(self):
        idx = [r.instance_index for r in self.records]
        if len(set(idx)) != len(idx):
            raise ValueError("instance indices must be unique")

    @property
    def size(self) -> int:
        return len(self.records)

    def exact(self) -> np.ndarray:
        return np.array([r.exact_value for r in self.records], dtype=float)

    def approx(self) -> np.ndarray:
        return np.array([r.approx_value for r in self.records], dtype=float)

    def infidelities(self) -> np.ndarray:
        vals = [r.fidelity for r in self.records]
        if any(v is None for v in vals):
            raise ValueError("fidelity missing for some instances")
        return 1.0 - np.array(vals, dtype=float)


# ---------------------------------------------------------------------------
# signal-to-noise ratio


def _standardize(x: np.ndarray, mean: float, std: float) -> np.ndarray:
    return (x - mean) / std


def snr(exact: Sequence[float], approx: Sequence[float], normalization: str = "own", cap: float = SNR_CAP) -> float:
    """Signal-to-noise ratio of ``approx`` against ``exact`` over an ensemble.

    Each series is shifted to zero mean and scaled to unit sample standard
    deviation (``ddof=1``); the result is ``1 / sqrt(mean(d**2))`` of the
    standardized differences, capped at ``cap``.

    Parameters
    ----------
    exact, approx : array_like, shape (m,)
    normalization : {"own", "exact"}
        ``"own"`` standardizes each series by its own moments; ``"exact"``
        uses the exact series' mean and std for both, for sensitivity checks.
    cap : float

    Raises
    ------
    ZeroVarianceError
        When a series used for scaling has zero sample variance.
    """
    x = np.asarray(exact, dtype=float)
    y = np.asarray(approx, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("exact and approx must be 1D arrays of equal length")
    if x.size < 2:
        raise ValueError("need at least two instances")
    if normalization not in ("own", "exact"):
        raise ValueError(f"unknown normalization {normalization!r}")
    sx = x.std(ddof=1)
    if not sx > 0:
        raise ZeroVarianceError("exact series has zero variance")
    zx = _standardize(x, x.mean(), sx)
    if normalization == "own":
        sy = y.std(ddof=1)
        if not sy > 0:
            raise ZeroVarianceError("approximate series has zero variance")
        zy = _standardize(y, y.mean(), sy)
    else:
        zy = _standardize(y, x.mean(), sx)
    msd = float(np.mean((zx - zy) ** 2))
    if msd <= 1.0 / cap**2:
        return float(cap)
    return float(min(1.0 / np.sqrt(msd), cap))


def snr_uncorrelated_baseline(m: int) -> float:
    """Expected SNR of a signal-free estimate over ``m`` instances.

    ``sqrt(m) * Gamma((m - 2) / 2) / (2 * Gamma((m - 1) / 2))``, evaluated
    through log-Gamma. Decreases towards ``1 / sqrt(2)`` as ``m`` grows.
    """
    if m < 3:
        raise ValueError("the baseline needs m >= 3")
    return float(np.sqrt(m) / 2.0 * np.exp(gammaln((m - 2) / 2.0) - gammaln((m - 1) / 2.0)))


@dataclass
class BootstrapResult:
    mean: float
    std: float
    samples: np.ndarray
    skipped: int


def bootstrap_snr(
    results: EnsembleResults | tuple[Sequence[float], Sequence[float]],
    batches: int = 100,
    batch_size: int = 30,
    seed: int = 0,
) -> BootstrapResult:
    """SNR over ``batches`` resamples of ``batch_size`` instances drawn with replacement.

    Resamples whose SNR is undefined (zero variance) are skipped and
    counted in ``skipped``.
    """
    if isinstance(results, EnsembleResults):
        x, y = results.exact(), results.approx()
    else:
        x, y = (np.asarray(a, dtype=float) for a in results)
    m = x.size
    if batch_size > m:
        raise ValueError(f"batch size {batch_size} exceeds the ensemble size {m}")
    if batches < 1 or batch_size < 2:
        raise ValueError("need at least one batch of at least two samples")
    rng = np.random.default_rng(seed)
    samples = []
    skipped = 0
    for _ in range(batches):
        idx = rng.integers(0, m, size=batch_size)
        try:
            samples.append(snr(x[idx], y[idx]))
        except ZeroVarianceError:
            skipped += 1
    arr = np.array(samples, dtype=float)
    if arr.size == 0:
        return BootstrapResult(float("nan"), float("nan"), arr, skipped)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return BootstrapResult(float(arr.mean()), std, arr, skipped)


def bands_overlap(a: BootstrapResult, b: BootstrapResult, width: float = 1.0) -> bool:
    """Whether ``mean +- width * std`` intervals of two bootstraps intersect."""
    return abs(a.mean - b.mean) <= width * (a.std + b.std)


# ---------------------------------------------------------------------------
# required bond dimension


def required_D_for_target(Ds: Sequence[float], snrs: Sequence[float], target_snr: float) -> float:
    """Bond dimension where an SNR-vs-D curve first crosses ``target_snr`` upwards.

    ``log(SNR)`` is interpolated linearly in ``D`` between the bracketing
    grid points.

    Raises
    ------
    ValueError
        When the curve already starts at or above the target, or never
        reaches it on the grid.
    """
    d = np.asarray(Ds, dtype=float)
    s = np.asarray(snrs, dtype=float)
    if d.shape != s.shape or d.size < 2:
        raise ValueError("need matching D and SNR grids with at least two points")
    if np.any(np.diff(d) <= 0):
        raise ValueError("D grid must be strictly increasing")
    if np.any(s <= 0):
        raise ValueError("SNR values must be positive")
    if s[0] >= target_snr:
        raise ValueError(f"SNR {s[0]:.3g} at the smallest D already meets the target {target_snr}")
    for k in range(d.size - 1):
        if s[k] < target_snr <= s[k + 1]:
            lo, hi = np.log(s[k]), np.log(s[k + 1])
            frac = (np.log(target_snr) - lo) / (hi - lo)
            return float(d[k] + frac * (d[k + 1] - d[k]))
    raise ValueError(f"SNR never reaches {target_snr} on the D grid")


# ---------------------------------------------------------------------------
# analytic predictions


def predicted_gates_per_bond_2d(orientation: str, v_mb: float, N: float) -> float:
    """Two-qubit gates on the busiest bond of an ``N``-qubit 2D OTOC layout.

    ``v_mb`` is the butterfly velocity in lattice units per layer, to be
    compared with the geometric speeds ``c_h = 1/2`` (horizontal) and
    ``c_d = 1/(2 sqrt 2)`` (diagonal).
    """
    if orientation == "horizontal":
        c = C_H
        if not 0 <= v_mb < c:
            raise ValueError(f"v_mb must lie in [0, {c})")
        return float(np.sqrt(N) / np.sqrt(2.0) * (1 - v_mb / c) / np.sqrt(c**2 - v_mb**2))
    if orientation == "diagonal":
        c = C_D
        if not 0 <= v_mb < c:
            raise ValueError(f"v_mb must lie in [0, {c})")
        return float(np.sqrt(N) / 2.0 * (1 - v_mb / c) / np.sqrt(c**2 - v_mb**2 / 2))
    raise ValueError(f"unknown orientation {orientation!r}")


@dataclass(frozen=True)
class ScalingPrediction:
    """Closed-form bond-dimension growth law.

    In 1D ``D = A * 2**((1 - v/c) * N)``; in 2D ``D = A * 4**g(N)`` with
    ``g`` from :func:`predicted_gates_per_bond_2d`.
    """

    dimension: str
    v_mb_over_c: float
    prefactor_A: float = 1.0
    orientation: str = "horizontal"

    def __post_init__(self):
        if self.dimension not in ("1D", "2D"):
            raise ValueError("dimension must be '1D' or '2D'")
        if not 0 < self.prefactor_A <= 1:
            raise ValueError("prefactor_A must lie in (0, 1]")
        if self.dimension == "2D" and self.prefactor_A > 0.5:
            raise ValueError("2D prefactor must not exceed 0.5")
        if not 0 <= self.v_mb_over_c < 1:
            raise ValueError("v_mb_over_c must lie in [0, 1)")

    @property
    def D_g(self) -> int:
        return 2 if self.dimension == "1D" else 4

    @property
    def formula(self) -> str:
        if self.dimension == "1D":
            return "A * 2**((1 - v/c) * N)"
        return f"A * 4**gates_{self.orientation}(N)"


def predicted_bond_dim(pred: ScalingPrediction, N: float) -> float:
    if pred.dimension == "1D":
        gates = (1 - pred.v_mb_over_c) * N
    else:
        c = C_H if pred.orientation == "horizontal" else C_D
        gates = predicted_gates_per_bond_2d(pred.orientation, pred.v_mb_over_c * c, N)
    return bond_dim_from_gates(pred.D_g, gates, pred.prefactor_A)


def bond_dim_from_gates(D_g: int, gates: float, prefactor: float = 1.0) -> float:
    """``prefactor * D_g ** gates``."""
    return float(prefactor * float(D_g) ** gates)


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    prefactor: float
    r_squared: float

    def __iter__(self):
        return iter((self.slope, self.prefactor, self.r_squared))


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if x.size < 3:
        raise ValueError("need at least three points")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_exponential(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """Fit ``y = prefactor * exp(rate * x)`` by least squares on ``log y``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.any(y <= 0):
        raise ValueError("exponential fit needs positive ys")
    rate, intercept, r2 = _linear_fit(x, np.log(y))
    return FitResult(rate, float(np.exp(intercept)), r2)


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """Fit ``y = prefactor * x**exponent`` by least squares on ``log y`` vs ``log x``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive xs and ys")
    exponent, intercept, r2 = _linear_fit(np.log(x), np.log(y))
    return FitResult(exponent, float(np.exp(intercept)), r2)
