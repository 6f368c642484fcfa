"""Binned Poisson fits: poly5 background and poly5 plus a sinc^2 line.

Log-likelihoods are reported relative to the saturated model,
``sum(n ln(mu/n) + n - mu)``, which differs from ``sum(n ln mu - mu)`` only
by a data-dependent constant and keeps differences between fits precise.

The signal fit profiles the linear parameters. For each trial line shape
``(Omega, m_X)`` the amplitude and polynomial coefficients are solved exactly
by a concave Newton iteration, so Nelder-Mead only searches two dimensions.

A histogram may instead be binomial: ``k`` successes out of ``w`` trials
with per-trial probability ``poly + A sinc^2``. With the ancilla successes as
trials this is the conditional sensing likelihood given the ancilla outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import chi2

from .data import FrequencyGrid

POLY_ORDER = 5
RATE_FLOOR = 1e-12
SIGNAL_DOF = 3
NEWTON_MAX_ITER = 200
NEWTON_TOL = 1e-10


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitResult:
    """``params`` is ``(a..f)`` for H0 and ``(A, Omega, m_X, a..f)`` for H1.

    Polynomial coefficients multiply powers of the frequency mapped onto
    [-1, 1]; ``Omega`` is in rad/GHz and ``m_X`` in GHz.
    """

    model: str
    params: np.ndarray
    log_likelihood: float
    converged: bool
    n_evaluations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def background_coefficients(self) -> np.ndarray:
        return self.params if self.model == "H0" else self.params[3:]

    @property
    def amplitude(self) -> float:
        return float(self.params[0]) if self.model == "H1" else 0.0

    def expected(self, grid: FrequencyGrid) -> np.ndarray:
        mu = poly_basis(grid.scaled()) @ self.background_coefficients
        if self.model == "H1":
            a, omega, m_x = self.params[:3]
            mu = mu + a * sinc2_template(grid.bin_centers, omega, m_x)
        return mu


def poly_basis(u: np.ndarray) -> np.ndarray:
    return np.vander(np.asarray(u, dtype=float), POLY_ORDER + 1, increasing=True)


def sinc2_template(x, omega: float, m_x: float) -> np.ndarray:
    """``sin^2(z) / z^2`` with ``z = omega (x - m_x)``; equals 1 at ``x = m_x``."""
    z = omega * (np.asarray(x, dtype=float) - m_x)
    return np.sinc(z / math.pi) ** 2


def poisson_loglike(counts, mu) -> float:
    n = np.asarray(counts, dtype=float)
    mu = np.maximum(np.asarray(mu, dtype=float), RATE_FLOOR)
    pos = n > 0
    return float(np.sum(n[pos] * np.log(mu[pos] / n[pos])) + np.sum(n - mu))


def binomial_loglike(counts, trials, prob) -> float:
    """Binomial log-likelihood relative to the saturated model ``p = k / w``."""
    k = np.asarray(counts, dtype=float)
    w = np.asarray(trials, dtype=float)
    p = np.clip(np.asarray(prob, dtype=float), RATE_FLOOR, 1 - RATE_FLOOR)
    out = 0.0
    hit, miss = k > 0, w - k > 0
    out += np.sum(k[hit] * np.log(p[hit] * w[hit] / k[hit]))
    out += np.sum((w - k)[miss] * np.log((1 - p[miss]) * w[miss] / (w - k)[miss]))
    return float(out)


class _Rows:
    """Stacked likelihood rows; binomial where ``trials`` is finite."""

    def __init__(self, counts: np.ndarray, trials: np.ndarray | None = None):
        self.n = np.asarray(counts, dtype=float)
        self.trials = (np.full_like(self.n, np.nan) if trials is None
                       else np.asarray(trials, dtype=float))
        self.binom = np.isfinite(self.trials)
        self.pois = ~self.binom

    @staticmethod
    def stack(rows: Sequence["_Rows"]) -> "_Rows":
        return _Rows(np.concatenate([r.n for r in rows]),
                     np.concatenate([r.trials for r in rows]))

    def valid(self, eta: np.ndarray) -> bool:
        return bool(np.all(eta > 0) and np.all(eta[self.binom] < 1))

    def loglike(self, eta: np.ndarray) -> float:
        out = 0.0
        if self.pois.any():
            out += poisson_loglike(self.n[self.pois], eta[self.pois])
        if self.binom.any():
            out += binomial_loglike(self.n[self.binom], self.trials[self.binom], eta[self.binom])
        return out

    def derivatives(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient and negative curvature of each row's term in ``eta``."""
        n = self.n
        grad = np.empty_like(eta)
        curv = np.empty_like(eta)
        p = self.pois
        grad[p] = n[p] / eta[p] - 1.0
        curv[p] = n[p] / eta[p] ** 2
        b = self.binom
        fail = self.trials[b] - n[b]
        grad[b] = n[b] / eta[b] - fail / (1 - eta[b])
        curv[b] = n[b] / eta[b] ** 2 + fail / (1 - eta[b]) ** 2
        return grad, curv


def _maximize_linear(rows: _Rows, design: np.ndarray, coef: np.ndarray):
    """Maximise the likelihood of ``eta = design @ coef`` over ``coef``.

    ``coef`` must start inside the domain. The objective is concave, so
    damped Newton steps that stay in the domain reach the global optimum.
    """
    eta = design @ coef
    ll = rows.loglike(eta)
    for it in range(NEWTON_MAX_ITER):
        g, h = rows.derivatives(eta)
        grad = design.T @ g
        hess = (design * h[:, None]).T @ design
        # Jacobi scaling keeps columns of very different size well conditioned
        scale = np.sqrt(np.maximum(np.diag(hess), 1e-300))
        scaled = hess / np.outer(scale, scale)
        scaled[np.diag_indices_from(scaled)] += 1e-12
        try:
            step = np.linalg.solve(scaled, grad / scale) / scale
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        decrement = float(grad @ step)
        if decrement < 2 * NEWTON_TOL:
            return coef, ll, True, it
        t = 1.0
        while True:
            trial = coef + t * step
            eta_t = design @ trial
            if rows.valid(eta_t):
                ll_t = rows.loglike(eta_t)
                if ll_t >= ll + 1e-4 * t * decrement:
                    break
            t *= 0.5
            if t < 1e-6:
                # no representable improvement left; fine if the predicted gain is tiny
                return coef, ll, decrement < 1e-6, it
        coef, eta, ll = trial, eta_t, ll_t
    return coef, ll, False, NEWTON_MAX_ITER


class _Histogram:
    """One histogram: Poisson counts, or binomial counts out of ``trials``.

    Bins with zero trials carry no information and are dropped.
    """

    def __init__(self, counts, grid: FrequencyGrid, trials=None):
        n = np.asarray(counts, dtype=float)
        if n.shape != (grid.n_bins,):
            raise ValueError("one count per grid bin required")
        if np.any(n < 0):
            raise ValueError("counts must be non-negative")
        if trials is None:
            self.keep = np.ones(n.shape, dtype=bool)
            self.rows = _Rows(n)
        else:
            w = np.asarray(trials, dtype=float)
            if w.shape != n.shape or np.any(n > w + 1e-9 * np.maximum(w, 1)):
                raise ValueError("binomial counts cannot exceed their trials")
            self.keep = w > 0
            self.rows = _Rows(n[self.keep], w[self.keep])
        self.binomial = trials is not None
        self.n = self.rows.n
        self.x = grid.bin_centers[self.keep]
        self.basis = poly_basis(grid.scaled())[self.keep]

    def excess(self, coef: np.ndarray, n_bins: int) -> np.ndarray:
        eta = self.basis @ coef
        if self.binomial:
            p = np.clip(eta, RATE_FLOOR, 1 - RATE_FLOOR)
            w = self.rows.trials
            zk = (self.n - w * p) / np.sqrt(w * p * (1 - p))
        else:
            mu = np.maximum(eta, RATE_FLOOR)
            zk = (self.n - mu) / np.sqrt(mu)
        z = np.zeros(n_bins)
        z[self.keep] = zk
        return z


def _background(hist: _Histogram) -> FitResult:
    rows, basis = hist.rows, hist.basis
    if not np.any(hist.n > 0) or (hist.binomial and np.all(hist.n >= rows.trials)):
        coef = np.zeros(POLY_ORDER + 1)
        coef[0] = RATE_FLOOR if not np.any(hist.n > 0) else 1 - RATE_FLOOR
        return FitResult("H0", coef, rows.loglike(basis @ coef), True)
    target = hist.n / rows.trials if hist.binomial else hist.n
    coef = np.linalg.lstsq(basis, target, rcond=None)[0]
    if not rows.valid(basis @ coef):
        coef = np.zeros(POLY_ORDER + 1)
        coef[0] = hist.n.sum() / rows.trials.sum() if hist.binomial else hist.n.mean()
    coef, ll, ok, iters = _maximize_linear(rows, basis, coef)
    if not ok:
        raise FitError("background fit did not converge")
    return FitResult("H0", coef, ll, ok, iters)


def fit_background(counts, grid: FrequencyGrid, *, trials=None) -> FitResult:
    """Maximum-likelihood fifth-order polynomial rate, or probability with ``trials``."""
    return _background(_Histogram(counts, grid, trials))


@dataclass(frozen=True)
class LineSearchSpace:
    """Bounds for the non-linear line-shape parameters.

    ``m_X`` ranges over ``center +- window_bins`` steps (the whole grid when
    ``center`` is None); ``Omega * step`` ranges over ``omega_step_bounds``.
    """

    center: float | None = None
    window_bins: float = 5.0
    omega_step_bounds: tuple[float, float] = (math.pi / 5, 2 * math.pi)

    def mass_bounds(self, grid: FrequencyGrid) -> tuple[float, float]:
        if self.center is None:
            return grid.f_min, grid.f_max
        half = self.window_bins * grid.step_mhz * 1e-3
        return max(grid.f_min, self.center - half), min(grid.f_max, self.center + half)

    def omega_bounds(self, grid: FrequencyGrid) -> tuple[float, float]:
        step = grid.step_mhz * 1e-3
        lo, hi = self.omega_step_bounds
        return lo / step, hi / step


class _Profile:
    """Profile likelihood over ``(Omega, m_X)`` for histograms sharing a line.

    With ``responses`` the amplitudes are tied: histogram ``k`` carries
    ``responses[k] * a`` for one common ``a >= 0``. Otherwise each histogram
    has its own non-negative amplitude.
    """

    def __init__(self, hists: Sequence[_Histogram], backgrounds: Sequence[FitResult],
                 responses: Sequence[float] | None = None):
        self.hists = list(hists)
        self.h0 = list(backgrounds)
        self.responses = None if responses is None else [float(r) for r in responses]
        self.evals = 0
        self.cache: dict[tuple[float, float], tuple[float, list]] = {}
        self.ll0 = sum(b.log_likelihood for b in self.h0)

    def _single(self, hist: _Histogram, h0: FitResult, s: np.ndarray):
        c0 = h0.background_coefficients
        start = np.concatenate([[0.0], c0])
        # profiled likelihood is concave in A, so a non-positive slope at
        # A = 0 means the constrained optimum sits on the boundary
        if not np.any(hist.n > 0) or float(s @ hist.rows.derivatives(hist.basis @ c0)[0]) <= 0:
            return start, h0.log_likelihood
        coef, ll, _, _ = _maximize_linear(hist.rows, np.column_stack([s, hist.basis]), start)
        if coef[0] < 0 or ll < h0.log_likelihood:
            return start, h0.log_likelihood
        return coef, ll

    def _tied(self, templates: list[np.ndarray]):
        k = len(self.hists)
        width = POLY_ORDER + 1
        rows = sum(len(h.n) for h in self.hists)
        design = np.zeros((rows, 1 + k * width))
        rows_all = _Rows.stack([h.rows for h in self.hists])
        r0 = 0
        for j, (h, s, resp) in enumerate(zip(self.hists, templates, self.responses)):
            sl = slice(r0, r0 + len(h.n))
            design[sl, 0] = resp * s
            design[sl, 1 + j * width:1 + (j + 1) * width] = h.basis
            r0 += len(h.n)
        start = np.concatenate([[0.0]] + [b.background_coefficients for b in self.h0])
        if float(design[:, 0] @ rows_all.derivatives(design @ start)[0]) <= 0:
            coef, total = start, self.ll0
        else:
            coef, total, _, _ = _maximize_linear(rows_all, design, start)
            if coef[0] < 0 or total < self.ll0:
                coef, total = start, self.ll0
        parts, r0 = [], 0
        for j, (h, resp) in enumerate(zip(self.hists, self.responses)):
            c = coef[1 + j * width:1 + (j + 1) * width]
            eta = h.basis @ c + resp * coef[0] * templates[j]
            parts.append((np.concatenate([[resp * coef[0]], c]), h.rows.loglike(eta)))
        return total, parts

    def solve(self, omega: float, m_x: float):
        key = (omega, m_x)
        if key in self.cache:
            return self.cache[key]
        self.evals += 1
        templates = [sinc2_template(h.x, omega, m_x) for h in self.hists]
        if self.responses is None:
            parts = [self._single(h, b, s) for h, b, s in zip(self.hists, self.h0, templates)]
            total = sum(ll for _, ll in parts)
        else:
            total, parts = self._tied(templates)
        self.cache[key] = (total, parts)
        return total, parts


def _signal_starts(prof: _Profile, grid: FrequencyGrid, search: LineSearchSpace,
                   n_starts: int) -> list[float]:
    x = grid.bin_centers
    lo, hi = search.mass_bounds(grid)
    inside = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    z = np.zeros_like(x)
    for h, b in zip(prof.hists, prof.h0):
        z += h.excess(b.background_coefficients, grid.n_bins)
    idx = np.flatnonzero(inside)
    order = idx[np.argsort(-z[idx], kind="stable")]
    return [float(x[i]) for i in order[:n_starts]]


def _fit_lines(prof: _Profile, grid: FrequencyGrid, search: LineSearchSpace | None,
               n_starts: int) -> list[FitResult]:
    search = search or LineSearchSpace()
    om_lo, om_hi = search.omega_bounds(grid)
    m_lo, m_hi = search.mass_bounds(grid)
    step = grid.step_mhz * 1e-3
    lower = np.array([math.log(om_lo), m_lo / step])
    upper = np.array([math.log(om_hi), m_hi / step])

    def objective(v):
        return -prof.solve(math.exp(v[0]), v[1] * step)[0]

    best_val, best_x, converged = math.inf, None, False
    log_om0 = 0.5 * (lower[0] + upper[0])
    for m0 in _signal_starts(prof, grid, search, n_starts):
        start = np.clip([log_om0, m0 / step], lower, upper)
        simplex = [start]
        for axis, delta in ((0, 0.5), (1, 0.4)):
            vertex = start.copy()
            vertex[axis] += delta if vertex[axis] + delta <= upper[axis] else -delta
            simplex.append(vertex)
        res = minimize(objective, start, method="Nelder-Mead", bounds=list(zip(lower, upper)),
                       options={"xatol": 1e-6, "fatol": 1e-9, "maxfev": 5000,
                                "initial_simplex": np.array(simplex)})
        res_x = np.clip(res.x, lower, upper)
        val = objective(res_x)
        if val < best_val:
            best_val, best_x, converged = val, res_x, bool(res.success)
    if best_x is None:
        raise FitError("no admissible starting point for the signal fit")
    omega, m_x = math.exp(best_x[0]), best_x[1] * step
    _, parts = prof.solve(omega, m_x)
    return [FitResult("H1", np.concatenate([[coef[0], omega, m_x], coef[1:]]), ll, converged,
                      prof.evals) for coef, ll in parts]


def fit_signal(counts, grid: FrequencyGrid, *, search: LineSearchSpace | None = None,
               background: FitResult | None = None, trials=None,
               n_starts: int = 8) -> FitResult:
    """Poly5 background plus ``A sinc^2(Omega (x - m_X))`` with ``A >= 0``.

    Mass seeds are the ``n_starts`` largest local excesses over the
    background fit inside the search window.
    """
    hist = _Histogram(counts, grid, trials)
    background = background or _background(hist)
    return _fit_lines(_Profile([hist], [background]), grid, search, n_starts)[0]


def fit_signal_joint(histograms: Sequence, grid: FrequencyGrid, *,
                     trials: Sequence | None = None,
                     responses: Sequence[float] | None = None,
                     search: LineSearchSpace | None = None,
                     backgrounds: Sequence[FitResult] | None = None,
                     n_starts: int = 8) -> list[FitResult]:
    """Fit several histograms with one common ``(Omega, m_X)``.

    Amplitudes are free per histogram unless ``responses`` ties them to a
    single non-negative amplitude.
    """
    trials = trials or [None] * len(histograms)
    hists = [_Histogram(h, grid, w) for h, w in zip(histograms, trials)]
    backgrounds = backgrounds or [_background(h) for h in hists]
    return _fit_lines(_Profile(hists, backgrounds, responses), grid, search, n_starts)


def llr_pvalue(q: float, dof: int = SIGNAL_DOF) -> float:
    return float(chi2.sf(q, dof))


def _checked_q(h0: Sequence[FitResult], h1: Sequence[FitResult]) -> float:
    q = 2.0 * sum(b.log_likelihood - a.log_likelihood for a, b in zip(h0, h1))
    if q < -1e-6:
        raise FitError(f"signal fit below background fit (q = {q:.3g})")
    return max(q, 0.0)


def llr_test(fit0: FitResult, fit1: FitResult, dof: int = SIGNAL_DOF) -> tuple[float, float]:
    """``q = 2 (lnL1 - lnL0)`` and its chi-square survival probability."""
    q = _checked_q([fit0], [fit1])
    return q, llr_pvalue(q, dof)


COMBINED_DOF = {"tied": 3, "independent": 6}


def combined_llr(enh_counts, success_counts, grid: FrequencyGrid, *, mode: str = "tied",
                 responses: tuple[float, float] | None = None,
                 search: LineSearchSpace | None = None, n_starts: int = 8) -> tuple[float, float]:
    """Test on the ancilla-success and conditional sensing histograms.

    The likelihood is the product of the Poisson success-count likelihood
    and the binomial signal-indicating counts given the successes, so the two
    pieces are independent. ``independent`` fits a separate line to each (dof 6).
    ``tied`` shares ``(Omega, m_X)`` and one amplitude scaled by
    ``responses = (conditional, success)`` (dof 3); see
    :func:`hpsense.stats.limits.combined_responses`.
    """
    if mode not in COMBINED_DOF:
        raise ValueError(f"mode must be one of {sorted(COMBINED_DOF)}")
    sens = _Histogram(enh_counts, grid, success_counts)
    succ = _Histogram(success_counts, grid)
    h0 = [_background(sens), _background(succ)]
    if mode == "independent":
        h1 = [_fit_lines(_Profile([h], [b]), grid, search, n_starts)[0]
              for h, b in zip((sens, succ), h0)]
    else:
        if responses is None:
            raise ValueError("tied mode needs the two response coefficients")
        h1 = _fit_lines(_Profile([sens, succ], h0, responses), grid, search, n_starts)
    q = _checked_q(h0, h1)
    return q, llr_pvalue(q, COMBINED_DOF[mode])
