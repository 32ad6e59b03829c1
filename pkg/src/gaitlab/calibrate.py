"""Per-user calibration: body parameters, sensor angle biases, online RLS.

The step-length model is linear in the body parameters:

    D = h . w,   h = [sin(a_f) - sin(a_b),
                      sin(a_f - b_f) + sin(b_b - a_b),
                      1],
                 w = [l1, l2, d5]

so the offline fit against reference step lengths is a bounded-variable
linear least squares problem (each parameter is constrained within 10% of
its hand-measured nominal). With three variables the exact solution is
found by sweeping all 27 active-set combinations of the box faces.

Angle biases are fitted second, holding the parameters fixed: one additive
offset per event angle, each constrained within 10% of the magnitude of
that angle's observed mean, minimized by bounded trust-region least
squares. The fitted bias is the correction to ADD to measured angles (equivalently,
fitted mean angle minus observed mean angle), so injecting a +2 degree
sensor error on an angle is recovered as a -2 degree bias.

The online path is a standard recursive least squares update with a
forgetting factor, warm-started at the nominal parameters.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import EventAngles, Side, StaticParams, StepMeasurement
from .errors import CalibrationError, GaitInputError

PARAM_BOX_FRACTION = 0.10
BIAS_BOX_FRACTION = 0.10
BIAS_SSE_TOL = 1e-6
BIAS_MAX_SWEEPS = 500

DEFAULT_RLS_LAMBDA = 0.98
DEFAULT_RLS_P0 = 1000.0


@dataclass(frozen=True)
class ReferenceStep:
    """Externally measured length of one step."""

    index: int
    length_cm: float
    side: Side | None = None

    def __post_init__(self):
        if not (math.isfinite(self.length_cm) and self.length_cm > 0):
            raise GaitInputError(
                f"reference step {self.index}: length must be > 0, "
                f"got {self.length_cm!r}"
            )


@dataclass(frozen=True)
class FeatureVector:
    h1: float
    h2: float
    h3: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.h1, self.h2, self.h3])


def feature_vector(angles: EventAngles) -> FeatureVector:
    """Linear-model features of one step; h . (l1, l2, d5) equals the model."""
    af = math.radians(angles.alpha_f)
    bf = math.radians(angles.beta_f)
    ab = math.radians(angles.alpha_b)
    bb = math.radians(angles.beta_b)
    return FeatureVector(
        h1=math.sin(af) - math.sin(ab),
        h2=math.sin(af - bf) + math.sin(bb - ab),
    )


def feature_matrix(steps: Sequence[StepMeasurement]) -> np.ndarray:
    return np.array([feature_vector(s.angles).as_array() for s in steps])


@dataclass(frozen=True)
class AngleBias:
    """Additive per-angle corrections (degrees): corrected = measured + bias."""

    alpha_f_deg: float = 0.0
    alpha_b_deg: float = 0.0
    beta_f_deg: float = 0.0
    beta_b_deg: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.alpha_f_deg, self.beta_f_deg, self.alpha_b_deg, self.beta_b_deg]
        )


@dataclass(frozen=True)
class CalibrationResult:
    params: StaticParams
    bias: AngleBias | None
    sse_before_cm2: float
    sse_after_cm2: float
    iterations: int
    degenerate: bool = False
    notes: tuple[str, ...] = ()


def _check_paired(steps, refs) -> None:
    if len(steps) != len(refs):
        raise GaitInputError(
            f"step/reference count mismatch: {len(steps)} steps vs {len(refs)} refs"
        )


def batch_fit_params(
    steps: Sequence[StepMeasurement],
    refs: Sequence[ReferenceStep],
    nominal: StaticParams,
) -> CalibrationResult:
    """Box-constrained least squares over (l1, l2, d5).

    Globally optimal: the model is linear in the parameters, and every
    combination of active box faces is solved exactly. A rank-deficient
    feature matrix (e.g. all steps identical) returns the nominal
    parameters with a degeneracy note instead of an arbitrary fit.
    """
    _check_paired(steps, refs)
    if len(steps) < 3:
        raise GaitInputError(f"need >= 3 steps to fit 3 parameters, got {len(steps)}")

    H = feature_matrix(steps)
    y = np.array([r.length_cm for r in refs])
    w_nom = np.array(nominal.as_tuple())
    lo = (1.0 - PARAM_BOX_FRACTION) * w_nom
    hi = (1.0 + PARAM_BOX_FRACTION) * w_nom

    sse_before = float(np.sum((y - H @ w_nom) ** 2))

    if np.linalg.matrix_rank(H, tol=1e-8) < 3:
        return CalibrationResult(
            params=nominal,
            bias=None,
            sse_before_cm2=sse_before,
            sse_after_cm2=sse_before,
            iterations=0,
            degenerate=True,
            notes=("feature matrix is rank deficient; keeping nominal parameters",),
        )

    best_w = w_nom
    best_sse = sse_before
    tol = 1e-12
    for faces in itertools.product((-1, 0, 1), repeat=3):
        w = np.where(np.array(faces) < 0, lo, hi).astype(float)
        free = [i for i, f in enumerate(faces) if f == 0]
        if free:
            fixed_part = np.zeros(len(y))
            for i, f in enumerate(faces):
                if f != 0:
                    fixed_part += H[:, i] * w[i]
            sol, *_ = np.linalg.lstsq(H[:, free], y - fixed_part, rcond=None)
            w[free] = sol
            if np.any(w[free] < lo[free] - tol) or np.any(w[free] > hi[free] + tol):
                continue
            w[free] = np.clip(w[free], lo[free], hi[free])
        sse = float(np.sum((y - H @ w) ** 2))
        if sse < best_sse - tol:
            best_sse = sse
            best_w = w

    fitted = StaticParams(*np.clip(best_w, lo, hi))
    return CalibrationResult(
        params=fitted,
        bias=None,
        sse_before_cm2=sse_before,
        sse_after_cm2=best_sse,
        iterations=1,
        degenerate=False,
    )


def _predict_with_bias(
    params: StaticParams, angles_deg: np.ndarray, bias_deg: np.ndarray
) -> np.ndarray:
    """Model lengths for an (N, 4) angle matrix [a_f, b_f, a_b, b_b] + bias."""
    a = np.radians(angles_deg + bias_deg)
    af, bf, ab, bb = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    l1, l2, d5 = params.as_tuple()
    return l2 * np.sin(af - bf) + l1 * np.sin(af) - l1 * np.sin(ab) + l2 * np.sin(bb - ab) + d5


def batch_fit_biases(
    steps: Sequence[StepMeasurement],
    refs: Sequence[ReferenceStep],
    params: StaticParams,
    nominal_angles_deg: np.ndarray | None = None,
) -> AngleBias:
    """Fit additive per-angle corrections with the parameters held fixed.

    The free variables are the four mean event angles, constrained within
    10% of their nominal values (the observed per-angle means unless given
    explicitly). Solved by projected coordinate descent on the residual sum
    of squares; the model is genuinely nonlinear in the angles.
    """
    _check_paired(steps, refs)
    A = np.array(
        [
            [s.angles.alpha_f, s.angles.beta_f, s.angles.alpha_b, s.angles.beta_b]
            for s in steps
        ]
    )
    y = np.array([r.length_cm for r in refs])
    observed_mean = A.mean(axis=0)
    if np.all(A.std(axis=0) < 1e-9):
        raise CalibrationError(
            "angle columns are constant; bias regression is degenerate"
        )
    nominal = observed_mean if nominal_angles_deg is None else np.asarray(nominal_angles_deg, float)
    half_width = BIAS_BOX_FRACTION * np.abs(nominal)
    lo = (nominal - half_width) - observed_mean
    hi = (nominal + half_width) - observed_mean
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)

    def residuals(b: np.ndarray) -> np.ndarray:
        return y - _predict_with_bias(params, A, b)

    # The four sensitivity directions are heavily collinear (each bias moves
    # every step length by a nearly constant amount), so the objective has a
    # long shallow valley. A bounded trust-region least-squares solve handles
    # that reliably where coordinate descent zigzags and stalls.
    x0 = np.clip(np.zeros(4), lo, hi)
    fit = least_squares(
        residuals,
        x0,
        bounds=(lo, hi),
        method="trf",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=BIAS_MAX_SWEEPS * 4,
    )
    bias = np.clip(fit.x, lo, hi)

    return AngleBias(
        alpha_f_deg=float(bias[0]),
        beta_f_deg=float(bias[1]),
        alpha_b_deg=float(bias[2]),
        beta_b_deg=float(bias[3]),
    )


@dataclass
class RlsState:
    """Recursive least squares state over w = (l1, l2, d5)."""

    w: np.ndarray
    P: np.ndarray
    lam: float
    n_updates: int = 0

    def params(self) -> StaticParams:
        return StaticParams(*self.w)


def rls_init(
    nominal: StaticParams,
    p0_scale: float = DEFAULT_RLS_P0,
    lam: float = DEFAULT_RLS_LAMBDA,
) -> RlsState:
    """Warm-start at the nominal parameters with covariance p0_scale * I."""
    if not p0_scale > 0:
        raise GaitInputError(f"p0_scale must be > 0, got {p0_scale}")
    if not (0.9 < lam <= 1.0):
        raise GaitInputError(f"forgetting factor must be in (0.9, 1], got {lam}")
    return RlsState(
        w=np.array(nominal.as_tuple(), dtype=float),
        P=p0_scale * np.eye(3),
        lam=float(lam),
    )


def rls_update(state: RlsState, h: FeatureVector, d_ref_cm: float) -> RlsState:
    """One forgetting-factor RLS step against a reference length."""
    hv = h.as_array()
    if not (np.all(np.isfinite(hv)) and math.isfinite(d_ref_cm)):
        raise GaitInputError("non-finite RLS inputs")
    P, lam, w = state.P, state.lam, state.w
    Ph = P @ hv
    gain = Ph / (lam + hv @ Ph)
    w_new = w + gain * (d_ref_cm - hv @ w)
    P_new = (P - np.outer(gain, Ph)) / lam
    P_new = 0.5 * (P_new + P_new.T)  # keep symmetric against roundoff
    return RlsState(w=w_new, P=P_new, lam=lam, n_updates=state.n_updates + 1)


def mape_percent(estimated: np.ndarray, reference: np.ndarray) -> float:
    est, ref = np.asarray(estimated, float), np.asarray(reference, float)
    if len(est) == 0:
        return float("nan")
    return float(np.mean(np.abs(est - ref) / np.abs(ref)) * 100.0)


def rmse(estimated: np.ndarray, reference: np.ndarray) -> float:
    est, ref = np.asarray(estimated, float), np.asarray(reference, float)
    if len(est) == 0:
        return float("nan")
    return float(np.sqrt(np.mean((est - ref) ** 2)))


def split_train_test(n: int, train_fraction: float = 0.7) -> tuple[slice, slice]:
    """Deterministic time-ordered split: the first 70% of steps train."""
    cut = int(math.floor(n * train_fraction))
    return slice(0, cut), slice(cut, n)
