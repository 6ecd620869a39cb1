"""Fitting and upper-limit machinery for binned spectra.

Provides the two fit statistics (Neyman chi-square with an empty-bin
variance floor, and the Poisson negative log likelihood), a
deterministic derivative-free simplex fit with seeded restarts, flat
prior Bayesian upper limits on a non-negative signal amplitude with
background nuisances profiled out, and a seeded pseudo-experiment
harness with coverage accounting.

Posterior convention: for the chi-square statistic the posterior
density on the signal s >= 0 is proportional to exp(-chi2_prof(s)/2);
for the Poisson likelihood it is exp(-(nll_prof(s) - min)). Scans are
refined adaptively until the quantile is grid-stable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .errors import (
    DegenerateMapError,
    DomainError,
    FitError,
    ModelError,
    ScanRangeError,
    ShapeError,
)
from .spectra import (
    BinnedSpectrum,
    EnergyGrid,
    PolynomialBackground,
    SpectralModel,
    component_bin_counts,
    model_description,
    predict_counts,
    simulate_spectrum,
)

__all__ = [
    "STATISTICS",
    "FitProblem",
    "FitResult",
    "GaussianResidualProblem",
    "LimitResult",
    "EnsembleResult",
    "binned_chi2",
    "binned_poisson_nll",
    "fit_minimize",
    "parameter_uncertainties",
    "bayesian_upper_limit",
    "run_pseudo_experiments",
]

STATISTICS = ("chi2", "poisson_nll")

# attributes that enter the prediction linearly; everything else
# (line centroids) forces the general evaluation path
_LINEAR_ATTRS = {"amplitude", "alpha", "coefficients"}

_SIMPLEX_TOL = 1e-9  # convergence tolerance on the fit statistic


def _variance_floor(observed: np.ndarray) -> np.ndarray:
    # Neyman convention with max(n, 1) so empty bins keep finite weight
    return np.maximum(observed.astype(float), 1.0)


def _chi2_from_mu(observed: np.ndarray, mu: np.ndarray) -> float:
    resid = observed - mu
    return float(np.sum(resid * resid / _variance_floor(observed)))


def _poisson_nll_from_mu(observed: np.ndarray, mu: np.ndarray) -> float:
    if np.any(~np.isfinite(mu)) or np.any(mu < 0):
        raise ModelError("expected counts must be finite and non-negative")
    zero = mu == 0
    if np.any(zero & (observed > 0)):
        raise ModelError("expected count of zero in a bin with observed counts gives infinite NLL")
    terms = np.where(zero, 0.0, mu - observed * np.log(np.where(zero, 1.0, mu)))
    terms = terms + gammaln(observed + 1.0)
    return float(np.sum(terms))


def binned_chi2(spectrum: BinnedSpectrum, model: SpectralModel) -> float:
    """Neyman chi-square of the model against the spectrum."""
    mu = predict_counts(model, spectrum.grid)
    return _chi2_from_mu(spectrum.counts.astype(float), mu)


def binned_poisson_nll(spectrum: BinnedSpectrum, model: SpectralModel) -> float:
    """Poisson negative log likelihood, -sum(n ln mu - mu - ln n!)."""
    mu = predict_counts(model, spectrum.grid)
    return _poisson_nll_from_mu(spectrum.counts.astype(float), mu)


# ---------------------------------------------------------------------------
# parameter references into a SpectralModel


def _ref_name(ref) -> str:
    if ref[1] == "coefficients":
        return f"c{ref[0]}.coefficients[{ref[2]}]"
    return f"c{ref[0]}.{ref[1]}"


def _ref_get(model: SpectralModel, ref):
    comp = model.components[ref[0]]
    if ref[1] == "coefficients":
        return comp.coefficients[ref[2]]
    return getattr(comp, ref[1])


def _apply_params(model: SpectralModel, refs, values) -> SpectralModel:
    comps = list(model.components)
    for ref, value in zip(refs, values):
        comp = comps[ref[0]]
        if ref[1] == "coefficients":
            coeffs = list(comp.coefficients)
            coeffs[ref[2]] = float(value)
            comps[ref[0]] = replace(comp, coefficients=tuple(coeffs))
        else:
            comps[ref[0]] = replace(comp, **{ref[1]: float(value)})
    return replace(model, components=tuple(comps))


def _validate_ref(model: SpectralModel, ref):
    if not isinstance(ref, tuple) or len(ref) not in (2, 3):
        raise DomainError(f"parameter reference {ref!r} must be (component, attr[, index])")
    if not 0 <= ref[0] < len(model.components):
        raise DomainError(f"parameter reference {ref!r} points past the component list")
    comp = model.components[ref[0]]
    if ref[1] == "coefficients":
        if not isinstance(comp, PolynomialBackground):
            raise DomainError(f"component {ref[0]} has no coefficients")
        if len(ref) != 3 or not 0 <= ref[2] < len(comp.coefficients):
            raise DomainError(f"coefficient index out of range in {ref!r}")
    elif not hasattr(comp, ref[1]):
        raise DomainError(f"component {ref[0]} has no attribute {ref[1]!r}")


# ---------------------------------------------------------------------------
# fit problems


@dataclass
class FitProblem:
    """Binned data plus a model template with designated free parameters.

    Exactly one free parameter is the signal; it is bounded below by
    zero unless explicit bounds say otherwise. The remaining free
    parameters are background nuisances.
    """

    grid: EnergyGrid
    observed: np.ndarray
    model: SpectralModel
    free: tuple
    signal: tuple
    statistic: str = "chi2"
    bounds: dict = field(default_factory=dict)
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=float)
        if observed.shape != (self.grid.n_bins,):
            raise ShapeError("observed array does not match the grid")
        if np.any(observed < 0) or np.any(~np.isfinite(observed)):
            raise DomainError("observed values must be finite and non-negative")
        self.observed = observed
        self.free = tuple(tuple(r) for r in self.free)
        self.signal = tuple(self.signal)
        if self.statistic not in STATISTICS:
            raise DomainError(f"unknown statistic {self.statistic!r}")
        if len(set(self.free)) != len(self.free):
            raise DomainError("free parameter references must be unique")
        for ref in self.free:
            _validate_ref(self.model, ref)
        if self.signal not in self.free:
            raise DomainError("the signal parameter must be among the free parameters")
        self.bounds = {tuple(k): (float(v[0]), float(v[1])) for k, v in self.bounds.items()}
        for ref, (lo, hi) in self.bounds.items():
            if ref not in self.free:
                raise DomainError(f"bounds given for non-free parameter {ref!r}")
            if not lo < hi:
                raise DomainError(f"empty bounds for {ref!r}")

    @classmethod
    def from_spectrum(cls, spectrum: BinnedSpectrum, model: SpectralModel,
                      free, signal, statistic: str = "chi2",
                      bounds=None, names=None) -> "FitProblem":
        return cls(grid=spectrum.grid, observed=spectrum.counts.astype(float),
                   model=model, free=tuple(free), signal=tuple(signal),
                   statistic=statistic, bounds=dict(bounds or {}),
                   names=dict(names or {}))

    @classmethod
    def from_values(cls, grid: EnergyGrid, values, model: SpectralModel,
                    free, signal, statistic: str = "chi2",
                    bounds=None, names=None) -> "FitProblem":
        """Problem over real-valued expectations, e.g. noiseless closure fits."""
        return cls(grid=grid, observed=np.asarray(values, dtype=float),
                   model=model, free=tuple(free), signal=tuple(signal),
                   statistic=statistic, bounds=dict(bounds or {}),
                   names=dict(names or {}))

    def parameter_name(self, ref) -> str:
        return self.names.get(tuple(ref), _ref_name(tuple(ref)))

    def initial_values(self) -> np.ndarray:
        return np.array([_ref_get(self.model, ref) for ref in self.free], dtype=float)

    def bounds_list(self):
        out = []
        for ref in self.free:
            if ref in self.bounds:
                out.append(self.bounds[ref])
            elif ref == self.signal:
                out.append((0.0, np.inf))  # physical signal amplitudes only
            else:
                out.append((-np.inf, np.inf))
        return out

    def signal_index(self) -> int:
        return self.free.index(self.signal)

    def with_values(self, values) -> SpectralModel:
        """The template model with the free parameters set to values."""
        return _apply_params(self.model, self.free, np.asarray(values, dtype=float))


class _MuEvaluator:
    """Expected-counts evaluator specialised for the free parameters.

    When every free parameter enters linearly the prediction is
    base + columns @ theta with the columns precomputed once; line
    centroids force a full model rebuild per call.
    """

    def __init__(self, problem: FitProblem):
        self.problem = problem
        self.grid = problem.grid
        self.linear = all(ref[1] in _LINEAR_ATTRS for ref in problem.free)
        if self.linear:
            zeroed = _apply_params(problem.model, problem.free,
                                   np.zeros(len(problem.free)))
            self.base = predict_counts(zeroed, self.grid)
            eff = problem.model.response.efficiency_for(self.grid)
            cols = []
            for ref in problem.free:
                # partial derivative column: unit value minus the zeroed
                # component, so fixed parts of shared components drop out
                unit = _apply_params(zeroed, (ref,), (1.0,))
                comp_unit = unit.components[ref[0]]
                comp_zero = zeroed.components[ref[0]]
                col = (component_bin_counts(comp_unit, self.grid, unit.response)
                       - component_bin_counts(comp_zero, self.grid, unit.response))
                cols.append(col * eff)
            self.columns = np.column_stack(cols)
        else:
            self.base = None
            self.columns = None

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        if self.linear:
            return self.base + self.columns @ theta
        model = _apply_params(self.problem.model, self.problem.free, theta)
        return predict_counts(model, self.grid)


def _statistic_fn(problem: FitProblem, evaluator: _MuEvaluator):
    observed = problem.observed
    if problem.statistic == "chi2":
        variance = _variance_floor(observed)

        def stat(theta):
            resid = observed - evaluator(theta)
            return float(np.sum(resid * resid / variance))

        return stat

    def stat(theta):
        try:
            return _poisson_nll_from_mu(observed, evaluator(theta))
        except ModelError:
            return np.inf

    return stat


# ---------------------------------------------------------------------------
# simplex fit with seeded restarts


@dataclass
class FitResult:
    values: np.ndarray
    statistic: float
    n_restarts: int
    n_evaluations: int
    converged: bool
    trace: tuple

    def by_name(self, problem: FitProblem) -> dict:
        return {problem.parameter_name(ref): float(v)
                for ref, v in zip(problem.free, self.values)}


def _least_squares_start(problem: FitProblem, evaluator: _MuEvaluator) -> np.ndarray:
    """Weighted least-squares seed for linear problems, clipped to bounds.

    Purely an initial guess; the simplex does the actual minimization.
    """
    x0 = problem.initial_values()
    if not evaluator.linear:
        return x0
    weights = 1.0 / _variance_floor(problem.observed)
    a = evaluator.columns * np.sqrt(weights)[:, None]
    y = (problem.observed - evaluator.base) * np.sqrt(weights)
    try:
        solution, *_ = np.linalg.lstsq(a, y, rcond=None)
    except np.linalg.LinAlgError:
        return x0
    if not np.all(np.isfinite(solution)):
        return x0
    for i, (lo, hi) in enumerate(problem.bounds_list()):
        solution[i] = min(max(solution[i], lo), hi)
    return solution


def fit_minimize(problem: FitProblem, *, seed: int = 0,
                 max_restarts: int = 6, tol: float = _SIMPLEX_TOL) -> FitResult:
    """Minimize the fit statistic with a bounded Nelder-Mead simplex.

    Restarts from seeded perturbations of the best point until the
    statistic stops improving by more than tol. Deterministic for a
    fixed problem and seed.
    """
    evaluator = _MuEvaluator(problem)
    stat = _statistic_fn(problem, evaluator)
    bounds = problem.bounds_list()
    x0 = _least_squares_start(problem, evaluator)

    scales = np.maximum(np.abs(x0), 1.0)
    n_evals = 0

    def scaled_stat(z):
        nonlocal n_evals
        n_evals += 1
        return stat(z * scales)

    z_bounds = [(lo / s if np.isfinite(lo) else lo, hi / s if np.isfinite(hi) else hi)
                for (lo, hi), s in zip(bounds, scales)]
    z0 = np.clip(x0 / scales, [b[0] for b in z_bounds], [b[1] for b in z_bounds])

    rng = np.random.default_rng(seed)
    best_z = z0.copy()
    best_f = float(scaled_stat(z0))
    if not np.isfinite(best_f):
        best_f = np.inf
    trace = [(-1, best_f)]
    n_restarts = 0
    improved_recently = True
    for attempt in range(max_restarts + 1):
        start = best_z if attempt == 0 else best_z + rng.normal(0.0, 1e-3, z0.size)
        start = np.clip(start, [b[0] for b in z_bounds], [b[1] for b in z_bounds])
        result = minimize(
            scaled_stat, start, method="Nelder-Mead", bounds=z_bounds,
            options={"xatol": 1e-10, "fatol": tol * 1e-3,
                     "maxiter": 400 * (z0.size + 1), "maxfev": 400 * (z0.size + 1)},
        )
        trace.append((attempt, float(result.fun)))
        # strict improvement only: a tie must not drift the optimum along
        # a numerically flat valley away from an already-optimal start
        threshold = best_f - 1e-12 * (1.0 + abs(best_f)) if np.isfinite(best_f) else np.inf
        if result.fun < threshold:
            improvement = best_f - result.fun
            best_f = float(result.fun)
            best_z = np.asarray(result.x)
            improved_recently = attempt == 0 or improvement > tol
        else:
            improved_recently = False
        n_restarts = attempt
        if attempt >= 1 and not improved_recently:
            break

    if not np.isfinite(best_f):
        raise FitError(f"simplex failed to produce a finite minimum; trace: {trace}")
    if improved_recently:
        # still improving when the restart budget ran out
        raise FitError(
            f"fit did not converge within {max_restarts} restarts "
            f"(last improvements above {tol}); trace: {trace}"
        )
    return FitResult(values=best_z * scales, statistic=best_f,
                     n_restarts=n_restarts, n_evaluations=n_evals,
                     converged=True, trace=tuple(trace))


def parameter_uncertainties(problem: FitProblem, values: np.ndarray) -> np.ndarray:
    """One-sigma uncertainties from the statistic's curvature.

    Central finite-difference Hessian; covariance is 2 H^-1 for the
    chi-square statistic and H^-1 for the Poisson NLL.
    """
    evaluator = _MuEvaluator(problem)
    stat = _statistic_fn(problem, evaluator)
    x = np.asarray(values, dtype=float)
    n = x.size
    steps = 1e-4 * np.maximum(np.abs(x), 1.0)
    hess = np.empty((n, n))
    f0 = stat(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        hess[i, i] = (stat(x + ei) - 2.0 * f0 + stat(x - ei)) / steps[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                stat(x + ei + ej) - stat(x + ei - ej)
                - stat(x - ei + ej) + stat(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError as err:
        raise FitError(f"singular curvature matrix: {err}") from err
    if problem.statistic == "chi2":
        cov = 2.0 * cov
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise FitError("curvature matrix is not positive definite at the minimum")
    return np.sqrt(diag)


# ---------------------------------------------------------------------------
# upper limits


@dataclass
class LimitResult:
    """Upper bound on one parameter with the profiled-statistic scan."""

    parameter: str
    confidence_level: float
    upper_bound: float
    scan: np.ndarray  # columns: parameter value, profiled statistic
    method: str
    metadata: dict = field(default_factory=dict)


@dataclass
class GaussianResidualProblem:
    """Gaussian-error measurements with a linear signal shape.

    Covers residual spectra (and, with a single bin of unit sigma, the
    textbook truncated-Gaussian counting measurement). Optional
    nuisance shapes are profiled linearly.
    """

    values: np.ndarray
    sigmas: np.ndarray
    signal_shape: np.ndarray
    nuisance_shapes: np.ndarray | None = None
    name: str = "signal"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        self.signal_shape = np.asarray(self.signal_shape, dtype=float)
        if self.values.shape != self.sigmas.shape or self.values.shape != self.signal_shape.shape:
            raise ShapeError("values, sigmas and signal shape must have equal length")
        if np.any(self.sigmas <= 0):
            raise DomainError("all sigmas must be positive")
        if self.nuisance_shapes is not None:
            self.nuisance_shapes = np.atleast_2d(np.asarray(self.nuisance_shapes, dtype=float))
            if self.nuisance_shapes.shape[1] != self.values.size:
                self.nuisance_shapes = self.nuisance_shapes.T
            if self.nuisance_shapes.shape[0] == 0:
                self.nuisance_shapes = None


class _LinearGaussianCore:
    """Profiled chi-square, quadratic in the signal, nuisances solved exactly."""

    def __init__(self, y, variance, signal_col, nuisance_cols, label):
        self.y = np.asarray(y, dtype=float)
        self.w = 1.0 / np.asarray(variance, dtype=float)
        self.s_col = np.asarray(signal_col, dtype=float)
        self.label = label
        if not np.any(self.s_col != 0):
            raise DegenerateMapError(
                f"signal shape for {label!r} vanishes on the fit window"
            )
        if nuisance_cols is None or nuisance_cols.size == 0:
            self.a = None
        else:
            self.a = np.asarray(nuisance_cols, dtype=float)
            if self.a.ndim == 1:
                self.a = self.a[:, None]
            aw = self.a * self.w[:, None]
            gram = self.a.T @ aw
            try:
                self.solver = np.linalg.inv(gram) @ aw.T
            except np.linalg.LinAlgError as err:
                raise FitError(f"degenerate nuisance basis: {err}") from err

    def _residual(self, s_values: np.ndarray) -> np.ndarray:
        r = self.y[:, None] - np.outer(self.s_col, s_values)
        if self.a is not None:
            r = r - self.a @ (self.solver @ r)
        return r

    def profiled(self, s_values) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s_values, dtype=float))
        r = self._residual(s)
        return np.einsum("ij,ij,i->j", r, r, self.w)

    def best_signal(self) -> float:
        cols = self.s_col[:, None] if self.a is None else np.column_stack([self.s_col, self.a])
        aw = cols * self.w[:, None]
        gram = cols.T @ aw
        try:
            theta = np.linalg.solve(gram, aw.T @ self.y)
        except np.linalg.LinAlgError as err:
            raise FitError(f"degenerate signal/nuisance basis: {err}") from err
        return float(theta[0])

    def curvature_sigma(self) -> float:
        """Exact 1-sigma width of the profiled parabola."""
        shat = self.best_signal()
        delta = max(abs(shat), 1.0)
        lo, hi = self.profiled([shat, shat + delta])
        if hi <= lo:
            raise DegenerateMapError(f"flat profiled statistic for {self.label!r}")
        return delta / np.sqrt(hi - lo)


def _core_from_fit_problem(problem: FitProblem, evaluator: _MuEvaluator):
    idx = problem.signal_index()
    nuisance_cols = np.delete(evaluator.columns, idx, axis=1)
    if nuisance_cols.shape[1] == 0:
        nuisance_cols = None
    return _LinearGaussianCore(
        y=problem.observed - evaluator.base,
        variance=_variance_floor(problem.observed),
        signal_col=evaluator.columns[:, idx],
        nuisance_cols=nuisance_cols,
        label=problem.parameter_name(problem.signal),
    )


def _core_from_residual_problem(problem: GaussianResidualProblem):
    nuis = None
    if problem.nuisance_shapes is not None:
        nuis = problem.nuisance_shapes.T
    return _LinearGaussianCore(
        y=problem.values,
        variance=problem.sigmas ** 2,
        signal_col=problem.signal_shape,
        nuisance_cols=nuis,
        label=problem.name,
    )


def _default_signal_bounds_only(problem: FitProblem) -> bool:
    for ref in problem.free:
        if ref == problem.signal:
            if problem.bounds.get(ref, (0.0, np.inf)) != (0.0, np.inf):
                return False
        elif ref in problem.bounds:
            return False
    return True


def _nonlinear_profiler(problem: FitProblem, evaluator: _MuEvaluator, seed: int):
    """Profiled statistic via nested simplex minimizations, warm-started."""
    stat = _statistic_fn(problem, evaluator)
    idx = problem.signal_index()
    n = len(problem.free)
    nuis_idx = [i for i in range(n) if i != idx]
    bounds = problem.bounds_list()
    state = {"last": None}

    full_fit = fit_minimize(problem, seed=seed)
    shat = float(full_fit.values[idx])
    lo_sig = bounds[idx][0]
    shat = max(shat, lo_sig)

    if not nuis_idx:
        def pstat(s_values):
            s = np.atleast_1d(np.asarray(s_values, dtype=float))
            out = np.empty(s.size)
            theta = full_fit.values.copy()
            for k, sv in enumerate(s):
                theta[idx] = sv
                out[k] = stat(theta)
            return out
        return pstat, shat, float(full_fit.statistic)

    nuis_bounds = [bounds[i] for i in nuis_idx]

    def profile_one(s_value, start):
        def inner(nu):
            theta = np.empty(n)
            theta[idx] = s_value
            theta[nuis_idx] = nu
            return stat(theta)

        result = minimize(inner, start, method="Nelder-Mead", bounds=nuis_bounds,
                          options={"xatol": 1e-10, "fatol": _SIMPLEX_TOL * 1e-3,
                                   "maxiter": 400 * len(nuis_idx) + 400,
                                   "maxfev": 400 * len(nuis_idx) + 400})
        state["last"] = np.asarray(result.x)
        return float(result.fun)

    def pstat(s_values):
        s = np.atleast_1d(np.asarray(s_values, dtype=float))
        out = np.empty(s.size)
        for k, sv in enumerate(s):
            start = state["last"] if state["last"] is not None else full_fit.values[nuis_idx]
            out[k] = profile_one(sv, start)
        return out

    return pstat, shat, float(full_fit.statistic)


def _posterior_weight(pstat_values: np.ndarray, stat_min: float, statistic: str) -> np.ndarray:
    delta = pstat_values - stat_min
    if statistic == "chi2":
        return np.exp(-0.5 * delta)
    return np.exp(-delta)


def _scan_upper_bound(pstat, shat, stat_min, statistic, cl, grid_rtol,
                      sigma_hint=None, label="signal"):
    """Adaptive quantile of the truncated posterior exp(-delta_stat / k)."""
    if sigma_hint is not None and np.isfinite(sigma_hint) and sigma_hint > 0:
        sigma = sigma_hint
    else:
        # bracket the rise of the profiled statistic to scale the scan
        delta = max(abs(shat), 1.0) * 1e-3
        sigma = None
        for _ in range(60):
            if pstat(np.array([shat + delta]))[0] - stat_min >= 1.0:
                sigma = delta
                break
            delta *= 2.0
        if sigma is None:
            raise ScanRangeError(f"profiled statistic for {label!r} is flat; "
                                 "posterior cannot be normalized")

    s_max = max(shat, 0.0) + 10.0 * sigma
    for _ in range(60):
        tail = _posterior_weight(pstat(np.array([s_max])), stat_min, statistic)[0]
        if tail < 1e-10:
            break
        s_max *= 1.7
    else:
        raise ScanRangeError(f"posterior for {label!r} does not decay on any "
                             "attempted scan range; widen the model bounds")

    n = 257
    previous = None
    while True:
        s = np.linspace(0.0, s_max, n)
        values = pstat(s)
        weights = _posterior_weight(values, stat_min, statistic)
        cdf = np.concatenate([[0.0], np.cumsum(np.diff(s) * 0.5 * (weights[1:] + weights[:-1]))])
        norm = cdf[-1]
        if norm <= 0 or not np.isfinite(norm):
            raise ScanRangeError(f"posterior for {label!r} has no integrable mass on the scan")
        bound = float(np.interp(cl * norm, cdf, s))
        if previous is not None and abs(bound - previous) <= grid_rtol * max(bound, 1e-300):
            return bound, s, values
        previous = bound
        if n > 200_000:
            raise ScanRangeError(f"scan for {label!r} failed to stabilize the quantile")
        n = 2 * n - 1


def bayesian_upper_limit(problem, cl: float, *, seed: int = 0,
                         grid_rtol: float = 1e-3) -> LimitResult:
    """Upper bound at credibility cl with a flat prior on the signal >= 0.

    Background nuisances are profiled: exactly for linear chi-square
    problems, by nested simplex minimization otherwise. The scan grid
    refines until the bound moves by less than grid_rtol.
    """
    if not 0.0 < cl < 1.0:
        raise DomainError("confidence level must lie strictly between 0 and 1")

    if isinstance(problem, GaussianResidualProblem):
        core = _core_from_residual_problem(problem)
        shat = max(core.best_signal(), 0.0)
        stat_min = float(core.profiled(shat)[0])
        pstat = core.profiled
        sigma_hint = core.curvature_sigma()
        statistic = "chi2"
        label = problem.name
        method = "bayesian-gaussian-residual"
    elif isinstance(problem, FitProblem):
        evaluator = _MuEvaluator(problem)
        statistic = problem.statistic
        label = problem.parameter_name(problem.signal)
        if evaluator.linear and statistic == "chi2" and _default_signal_bounds_only(problem):
            core = _core_from_fit_problem(problem, evaluator)
            shat = max(core.best_signal(), 0.0)
            stat_min = float(core.profiled(shat)[0])
            pstat = core.profiled
            sigma_hint = core.curvature_sigma()
            method = "bayesian-chi2-profile"
        else:
            pstat, shat, stat_min = _nonlinear_profiler(problem, evaluator, seed)
            sigma_hint = None
            method = f"bayesian-{statistic}-profile"
    else:
        raise DomainError(f"cannot set a limit on {type(problem).__name__}")

    bound, s, values = _scan_upper_bound(pstat, shat, stat_min, statistic, cl,
                                         grid_rtol, sigma_hint, label)
    scan = _thin_scan(s, values)
    return LimitResult(
        parameter=label,
        confidence_level=cl,
        upper_bound=bound,
        scan=scan,
        method=method,
        metadata={
            "prior": "flat on signal >= 0",
            "statistic": statistic,
            "best_signal": shat,
            "statistic_min": stat_min,
            "scan_max": float(s[-1]),
            "scan_points": int(s.size),
        },
    )


def _thin_scan(s: np.ndarray, values: np.ndarray, keep: int = 513) -> np.ndarray:
    if s.size > keep:
        idx = np.unique(np.linspace(0, s.size - 1, keep).astype(int))
        s, values = s[idx], values[idx]
    return np.column_stack([s, values])


# ---------------------------------------------------------------------------
# pseudo-experiments


@dataclass
class EnsembleResult:
    bounds: np.ndarray
    true_signal: float
    coverage: float
    confidence_level: float
    n_requested: int
    n_failed: int
    failures: tuple
    config_hash: str
    seed: int
    best_signals: np.ndarray

    @property
    def n_completed(self) -> int:
        return self.n_requested - self.n_failed


def _ensemble_config_hash(truth: SpectralModel, grid: EnergyGrid, free, signal,
                          cl, statistic, n) -> str:
    payload = {
        "model": model_description(truth),
        "grid": [float(e) for e in grid.bin_edges],
        "free": [list(map(str, ref)) for ref in free],
        "signal": list(map(str, signal)),
        "cl": cl,
        "statistic": statistic,
        "n": n,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_pseudo_experiments(truth: SpectralModel, grid: EnergyGrid, free, signal,
                           *, n: int, cl: float, seed: int,
                           statistic: str = "chi2",
                           grid_rtol: float = 1e-3) -> EnsembleResult:
    """Simulate, fit and limit n times; report coverage of the truth.

    Each cycle draws its RNG stream from a child of the top-level seed,
    so cycles are independent and the whole ensemble is reproducible.
    Cycles whose fit or scan fails are excluded from coverage and
    recorded with their error message.
    """
    if n < 1:
        raise DomainError("ensemble needs at least one pseudo-experiment")
    free = tuple(tuple(r) for r in free)
    signal = tuple(signal)
    truth_value = float(_ref_get(truth, signal))

    children = np.random.SeedSequence(seed).spawn(n)
    bounds = []
    best = []
    failures = []
    for i, child in enumerate(children):
        cycle_seed = int(child.generate_state(1)[0])
        spectrum = simulate_spectrum(truth, grid, cycle_seed)
        problem = FitProblem.from_spectrum(spectrum, truth, free, signal,
                                           statistic=statistic)
        try:
            limit = bayesian_upper_limit(problem, cl, seed=cycle_seed,
                                         grid_rtol=grid_rtol)
        except (FitError, ScanRangeError, DegenerateMapError) as err:
            failures.append((i, f"{type(err).__name__}: {err}"))
            continue
        bounds.append(limit.upper_bound)
        best.append(limit.metadata["best_signal"])

    bounds_arr = np.asarray(bounds, dtype=float)
    if bounds_arr.size == 0:
        raise FitError("every pseudo-experiment failed; nothing to report")
    coverage = float(np.mean(bounds_arr >= truth_value))
    return EnsembleResult(
        bounds=bounds_arr,
        true_signal=truth_value,
        coverage=coverage,
        confidence_level=cl,
        n_requested=n,
        n_failed=len(failures),
        failures=tuple(failures),
        config_hash=_ensemble_config_hash(truth, grid, free, signal, cl, statistic, n),
        seed=seed,
        best_signals=np.asarray(best, dtype=float),
    )
