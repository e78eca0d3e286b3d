"""Weighted nonlinear least-squares recovery of combined quadrature variances.

One swept-channel trace is fit against the detected-spectrum model with four
free parameters: the channel's combined amplitude variance S_p, combined
phase variance S_q, a multiplicative gain and a detuning offset.  Cavity
parameters, analysis frequency and detection efficiency are independently
known constants of the fit.

The optimizer is a damped Gauss-Newton (Levenberg-Marquardt) iteration with
central finite-difference Jacobians.  S_p and S_q are optimized in log space
so positivity needs no active constraint; the remaining box bounds are
enforced by projection.  Parameter uncertainties come from the inverse of
the weighted normal-equations matrix at the optimum; weights are the inverse
estimator variances 2 s^2/(N-1) of the per-window variance estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .cavity import rotation_coeff_arrays
from .criteria import CriteriaReport, criteria_from_combined
from .noise_model import ChannelModel, channel_spectrum, find_phase_readout_detunings
from .quadratures import CombinedQuadratures, TwinBeamCovariance
from .sweep import SweepDataset

VARIANCE_BOUNDS = (1e-3, 1e3)
SCALE_BOUNDS = (0.5, 2.0)
MAX_ITERATIONS = 200
STEP_TOL = 1e-8
COST_TOL = 1e-10
JACOBIAN_REL_STEP = 1e-6
ILL_CONDITIONED = 1e8
# A gain whose one-sigma uncertainty spans half its allowed box is not
# determined by the data at all; the fit then falls back to the shot-noise
# normalization (scale = 1), like the bench practice of calibrating the SQL
# before fitting.
SCALE_SE_LIMIT = 0.5 * (SCALE_BOUNDS[1] - SCALE_BOUNDS[0])
# Below this peak |g_q|^2 over the scanned detunings, the phase variance is
# treated as unmeasured rather than fit.
MIN_PHASE_CONVERSION = 0.02


class FitError(RuntimeError):
    """Base class for fit failures."""


class FitNonConvergence(FitError):
    """Iteration cap reached with the step norm still above tolerance."""


class UnidentifiableParameterError(FitError):
    """The data carry (numerically) no information about some parameter mix."""

    def __init__(self, description: str):
        self.description = description
        super().__init__(
            f"normal matrix is singular along: {description}; "
            "the scan does not constrain this direction"
        )


@dataclass(frozen=True)
class FitProblem:
    """One channel trace plus everything held fixed during the fit."""

    dataset: SweepDataset
    channel: str  # "sum" or "difference"
    cavity1: Optional[object] = None  # default: the dataset's own cavities
    cavity2: Optional[object] = None
    omega_mhz: Optional[float] = None
    efficiency: Optional[float] = None
    initial: Optional[dict] = None  # optional start values by name
    # Model-based weight refinement passes after the first data-weighted
    # solve.  0 reproduces raw data weighting (biased low by roughly one
    # standard error at 600 samples per window; kept for diagnostics).
    weight_refinements: int = 1

    def fixed_model(self) -> ChannelModel:
        m = self.dataset.model
        return ChannelModel(
            cavity1=self.cavity1 if self.cavity1 is not None else m.cavity1,
            cavity2=self.cavity2 if self.cavity2 is not None else m.cavity2,
            omega_mhz=self.omega_mhz if self.omega_mhz is not None else m.omega_mhz,
            efficiency=self.efficiency if self.efficiency is not None else m.efficiency,
            channel=self.channel,
        )


@dataclass(frozen=True)
class FitResult:
    """Estimates, one-sigma errors and diagnostics of one channel fit."""

    channel: str
    s_p: float
    s_q: float
    scale: float
    center_mhz: float
    s_p_err: float
    s_q_err: float
    scale_err: float
    center_err: float
    cost: float
    reduced_chisq: float
    iterations: int
    final_step_norm: float
    converged: bool
    scale_pinned: bool = False
    condition_warning: Optional[str] = None


def _finite_diff_jacobian(fn: Callable, x: np.ndarray, rel_step: float) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function."""
    f0 = fn(x)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1e-3)
        hi = x.copy()
        lo = x.copy()
        hi[i] += h
        lo[i] -= h
        jac[:, i] = (fn(hi) - fn(lo)) / (2.0 * h)
    return jac


def _damped_least_squares(residual, x0, lower, upper):
    """Levenberg-Marquardt minimization of sum(residual(x)^2) inside a box.

    Returns (x, cost, normal_matrix, iterations, final_step_norm, converged).
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    e = residual(x)
    cost = float(e @ e)
    lam = 1e-3
    step_norm = np.inf
    converged = False
    iterations = 0
    normal = None

    for iterations in range(1, MAX_ITERATIONS + 1):
        jac = _finite_diff_jacobian(residual, x, JACOBIAN_REL_STEP)
        normal = jac.T @ jac
        grad = jac.T @ e

        accepted = False
        for _ in range(50):
            damped = normal + lam * np.diag(np.clip(np.diag(normal), 1e-30, None))
            try:
                step = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + step, lower, upper)
            e_new = residual(x_new)
            cost_new = float(e_new @ e_new)
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
            if lam > 1e12:
                break
        if not accepted:
            # No downhill damped step exists: we are at a (possibly bound-
            # constrained) stationary point.
            converged = True
            step_norm = 0.0
            break

        step_norm = float(np.linalg.norm(x_new - x))
        rel_step = step_norm / max(float(np.linalg.norm(x)), 1e-12)
        rel_decrease = (cost - cost_new) / max(cost, 1e-300)
        x, e, cost = x_new, e_new, cost_new
        lam = max(lam / 3.0, 1e-12)
        if rel_step < STEP_TOL or rel_decrease < COST_TOL:
            converged = True
            break

    # Normal matrix at the final point, for errors/diagnostics.
    jac = _finite_diff_jacobian(residual, x, JACOBIAN_REL_STEP)
    normal = jac.T @ jac
    return x, cost, normal, iterations, step_norm, converged


_PARAM_NAMES = ("s_p", "s_q", "scale", "center")


def _describe_direction(vec: np.ndarray, names) -> str:
    order = np.argsort(-np.abs(vec))
    parts = [f"{names[i]} ({abs(vec[i]) ** 2:.0%})" for i in order if abs(vec[i]) > 0.2]
    return " + ".join(parts) if parts else names[int(order[0])]


def fit(problem: FitProblem) -> FitResult:
    """Fit one channel trace; see the module docstring for the model.

    Weights start from the data's own variance estimates and are refined
    once from the fitted model (weighting each window by the estimator
    variance its fitted value implies).  Without that refinement the
    noise-correlated weights bias every parameter low by about one standard
    error at 600 samples per window.

    Raises FitNonConvergence when the iteration cap is hit and
    UnidentifiableParameterError when the scan leaves a variance direction
    unconstrained (e.g. a scan that never leaves the amplitude-readout
    region carries no phase information).
    """
    ds = problem.dataset
    if problem.channel not in ("sum", "difference"):
        raise ValueError(f"fittable channels are 'sum' and 'difference', got {problem.channel!r}")
    y = ds.channel(problem.channel)
    deltas = ds.delta_mhz
    if y.size < 10:
        raise FitError(f"need at least 10 windows to fit, got {y.size}")
    n_win = ds.n_samples.astype(float)
    model = problem.fixed_model()

    # A scan that never leaves the amplitude-readout region carries no phase
    # information; refuse up front instead of returning a confident fit of an
    # unconstrained parameter.
    conversion = np.abs(rotation_coeff_arrays(model.cavity1, deltas, model.omega_mhz)[1]) ** 2
    if float(conversion.max()) < MIN_PHASE_CONVERSION:
        raise UnidentifiableParameterError(
            f"s_q: the scan's best phase conversion |g_q|^2 = "
            f"{float(conversion.max()):.2e} is below {MIN_PHASE_CONVERSION}"
        )

    center_lo = float(deltas.min())
    center_hi = float(deltas.max())
    lower = np.array([math.log(VARIANCE_BOUNDS[0]), math.log(VARIANCE_BOUNDS[0]),
                      SCALE_BOUNDS[0], center_lo])
    upper = np.array([math.log(VARIANCE_BOUNDS[1]), math.log(VARIANCE_BOUNDS[1]),
                      SCALE_BOUNDS[1], center_hi])

    def predict(params):
        log_sp, log_sq, scale, center = params
        cov = TwinBeamCovariance.from_combined(_as_combined(
            problem.channel, math.exp(log_sp), math.exp(log_sq)))
        return scale * channel_spectrum(model, cov, deltas - center)

    x0 = _initial_guess(problem, model, deltas, y, center_lo, center_hi)

    # First pass: estimator variances from the data; refinements: from the fit.
    weights = (n_win - 1.0) / (2.0 * y**2)
    state = None
    for _ in range(1 + max(problem.weight_refinements, 0)):
        state = _solve_weighted(predict, y, weights, x0, lower, upper,
                                iters_so_far=0 if state is None else state.iterations)
        weights = (n_win - 1.0) / (2.0 * predict(state.x) ** 2)
        x0 = state.x

    if not state.converged:
        raise FitNonConvergence(
            f"no convergence in {state.iterations} iterations "
            f"(final step norm {state.final_step_norm:.3g})"
        )

    x = state.x
    cov_internal = _safe_inverse(state.normal, state.scale_pinned)
    errs_internal = np.sqrt(np.clip(np.diag(cov_internal), 0.0, None))
    s_p = math.exp(x[0])
    s_q = math.exp(x[1])
    n_params = 3 if state.scale_pinned else 4
    dof = max(y.size - n_params, 1)
    return FitResult(
        channel=problem.channel,
        s_p=s_p,
        s_q=s_q,
        scale=float(x[2]),
        center_mhz=float(x[3]),
        s_p_err=s_p * float(errs_internal[0]),  # delta method through exp
        s_q_err=s_q * float(errs_internal[1]),
        # A pinned gain reports the free-solve uncertainty that forced the
        # pin, not a spurious zero.
        scale_err=state.pinned_scale_se if state.scale_pinned else float(errs_internal[2]),
        center_err=float(errs_internal[3]),
        cost=state.cost,
        reduced_chisq=state.cost / dof,
        iterations=state.iterations,
        final_step_norm=state.final_step_norm,
        converged=state.converged,
        scale_pinned=state.scale_pinned,
        condition_warning=state.warning,
    )


@dataclass
class _SolveState:
    x: np.ndarray
    cost: float
    normal: np.ndarray
    iterations: int
    final_step_norm: float
    converged: bool
    scale_pinned: bool
    warning: Optional[str]
    # With the gain pinned, this keeps the free-solve uncertainty so the
    # result can state how unconstrained the gain actually was.
    pinned_scale_se: float = 0.0


def _solve_weighted(predict, y, weights, x0, lower, upper, iters_so_far=0) -> _SolveState:
    """One full weighted solve, including the gain-degeneracy safeguard."""
    sqrt_w = np.sqrt(weights)

    def residual(params):
        return sqrt_w * (predict(params) - y)

    x, cost, normal, iters, step_norm, converged = _damped_least_squares(
        residual, x0, lower, upper
    )
    iters += iters_so_far

    scale_pinned = False
    warning = None
    cond = np.linalg.cond(normal)
    scale_se = _scale_standard_error(normal)
    ill = not np.isfinite(cond) or cond > ILL_CONDITIONED
    if ill or scale_se > SCALE_SE_LIMIT:
        weak = np.linalg.eigh(normal)[1][:, 0]
        desc = _describe_direction(weak, _PARAM_NAMES)
        if ill and abs(weak[2]) ** 2 <= 0.2:
            # The flat direction barely involves the gain; no pin can help.
            raise UnidentifiableParameterError(desc)
        # Gain degenerate with (or undetermined alongside) the variances: pin
        # it to the shot-noise normalization and refit the remaining three.
        reason = (
            f"normal matrix condition {cond:.3g}" if ill
            else f"scale standard error {scale_se:.3g} spans its allowed box"
        )
        warning = f"{reason}; weak direction {desc}; scale pinned to 1"
        scale_pinned = True

        def residual3(p3):
            return residual(np.array([p3[0], p3[1], 1.0, p3[2]]))

        x3, cost, normal3, iters3, step_norm, converged = _damped_least_squares(
            residual3, np.array([x[0], x[1], x[3]]),
            lower[[0, 1, 3]], upper[[0, 1, 3]],
        )
        iters += iters3
        x = np.array([x3[0], x3[1], 1.0, x3[2]])
        cond3 = np.linalg.cond(normal3)
        if not np.isfinite(cond3) or cond3 > ILL_CONDITIONED:
            raise UnidentifiableParameterError(
                _describe_direction(np.linalg.eigh(normal3)[1][:, 0],
                                    ("s_p", "s_q", "center"))
            )
        normal = np.zeros((4, 4))
        normal[np.ix_([0, 1, 3], [0, 1, 3])] = normal3
        return _SolveState(x, cost, normal, iters, step_norm, converged,
                           scale_pinned, warning, pinned_scale_se=scale_se)

    return _SolveState(x, cost, normal, iters, step_norm, converged,
                       scale_pinned, warning)


def _safe_inverse(normal: np.ndarray, scale_pinned: bool) -> np.ndarray:
    if scale_pinned:
        idx = [0, 1, 3]
        sub = np.linalg.inv(normal[np.ix_(idx, idx)])
        out = np.zeros((4, 4))
        out[np.ix_(idx, idx)] = sub
        return out
    return np.linalg.inv(normal)


def _scale_standard_error(normal: np.ndarray) -> float:
    """One-sigma error of the gain from the full normal matrix (inf if singular)."""
    try:
        return float(math.sqrt(max(np.linalg.inv(normal)[2, 2], 0.0)))
    except np.linalg.LinAlgError:
        return math.inf


def _as_combined(channel: str, s_p: float, s_q: float) -> CombinedQuadratures:
    """State stand-in whose ``channel`` spectrum carries exactly (s_p, s_q).

    Uncorrelated symmetric beams with per-beam variances (s_p, s_q) give
    both the sum and the difference channel the spectrum
    |g_p|^2 s_p + |g_q|^2 s_q + vacuum terms, which is the fitted model
    (cavities scanned synchronously; cross terms enter only through the
    fitted combined variances themselves).
    """
    del channel  # same stand-in works for either channel
    return CombinedQuadratures(sp_plus=s_p, sp_minus=s_p, sq_plus=s_q, sq_minus=s_q)


def _initial_guess(problem, model, deltas, y, center_lo, center_hi) -> np.ndarray:
    init = problem.initial or {}
    eta = model.efficiency
    lo, hi = VARIANCE_BOUNDS

    def undo_loss(v):
        # Loss inversion as a plain affine map, clipped into bounds; used only
        # to seed the optimizer so the vacuum-floor guard is not needed here.
        return min(max((v - 1.0) / eta + 1.0, lo), hi)

    s_p0 = init.get("s_p", undo_loss(float(np.median(y))))
    if "s_q" in init:
        s_q0 = init["s_q"]
    else:
        # Phase information lives near the conversion maxima; seed S_q from
        # the trace value closest to the innermost one.
        readout = find_phase_readout_detunings(model.cavity1, model.omega_mhz,
                                               grid_points=2048)
        if readout.maxima:
            d_star = readout.maxima[0][0]
            s_q0 = undo_loss(float(y[np.argmin(np.abs(deltas - d_star))]))
        else:
            s_q0 = s_p0
    scale0 = init.get("scale", 1.0)
    center0 = init.get("center", 0.0)
    center0 = min(max(center0, center_lo), center_hi)
    return np.array([
        math.log(min(max(s_p0, lo), hi)),
        math.log(min(max(s_q0, lo), hi)),
        min(max(scale0, SCALE_BOUNDS[0]), SCALE_BOUNDS[1]),
        center0,
    ])


def multi_start(problem: FitProblem, n_starts: int, seed: int) -> FitResult:
    """Best fit over Latin-hypercube starting points inside the bounds.

    Start 0 is the default heuristic start; the remaining starts stratify
    each parameter range.  The winner is the converged result with the
    lexicographically smallest (cost, start index), so the outcome does not
    depend on evaluation order.  Deterministic for a fixed seed.
    """
    if n_starts < 1:
        raise ValueError(f"n_starts must be >= 1, got {n_starts}")
    results: list[tuple[float, int, FitResult]] = []
    failures: list[str] = []

    def try_start(index, initial):
        try:
            res = fit(replace(problem, initial=initial))
        except FitError as exc:
            failures.append(f"start {index}: {exc}")
            return
        results.append((res.cost, index, res))

    try_start(0, problem.initial)
    if n_starts > 1:
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=(int(seed), 0x5AB5)))
        )
        n_extra = n_starts - 1
        deltas = problem.dataset.delta_mhz
        spans = {
            "s_p": (math.log(VARIANCE_BOUNDS[0]), math.log(VARIANCE_BOUNDS[1])),
            "s_q": (math.log(VARIANCE_BOUNDS[0]), math.log(VARIANCE_BOUNDS[1])),
            "scale": SCALE_BOUNDS,
            "center": (float(deltas.min()), float(deltas.max())),
        }
        # Latin hypercube: one stratum per start and dimension.
        strata = {k: rng.permutation(n_extra) for k in spans}
        jitter = {k: rng.random(n_extra) for k in spans}
        for j in range(n_extra):
            initial = {}
            for key, (lo, hi) in spans.items():
                u = (strata[key][j] + jitter[key][j]) / n_extra
                val = lo + u * (hi - lo)
                if key in ("s_p", "s_q"):
                    val = math.exp(val)
                initial[key] = val
            try_start(j + 1, initial)

    if not results:
        raise FitError("all starts failed: " + "; ".join(failures))
    results.sort(key=lambda t: (t[0], t[1]))
    return results[0][2]


def fit_report(sum_result: FitResult, diff_result: FitResult, eta: float) -> CriteriaReport:
    """Criteria report assembled from the two channel fits.

    The difference fit supplies the squeezed amplitude combination, the sum
    fit the squeezed phase combination; their partners complete the combined
    quadruple under the identical-beams reading, raw and loss-corrected at
    the stated efficiency, with first-order error propagation.
    """
    if not (sum_result.converged and diff_result.converged):
        raise FitError("criteria need two converged fits")
    combined = CombinedQuadratures(
        sp_plus=sum_result.s_p,
        sp_minus=diff_result.s_p,
        sq_plus=sum_result.s_q,
        sq_minus=diff_result.s_q,
    )
    errors = CombinedQuadratures(
        sp_plus=sum_result.s_p_err,
        sp_minus=diff_result.s_p_err,
        sq_plus=sum_result.s_q_err,
        sq_minus=diff_result.s_q_err,
    )
    return criteria_from_combined(combined, eta, errors=errors)
