"""Phase retrieval solvers.

Three reconstruction routes share the measurement model ``b = |A x|``:

* :func:`hio` / :func:`hio_init` -- Fienup's hybrid input-output iteration
  with known support, plus the random-restart initialization protocol
  (many short chains, keep the best, refine it).
* :func:`altmin` -- classical alternating minimization: fix the measurement
  phase from the current iterate, then solve the induced linear
  least-squares problem.
* :func:`langevin_sample` / :func:`apls` -- phase fixing alternated with
  Langevin steps that follow a denoiser residual as the prior score plus a
  data-consistency gradient, with annealed step size and injected noise.

All solvers are deterministic given an :class:`~phaseforge.rng.RngStream`.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .denoisers import Denoiser
from .images import as_image, crop, embed, register
from .operators import LinearOperator, MeasurementProblem, phase, residual_norm
from .rng import RngStream


class SolverDivergenceError(RuntimeError):
    """Raised when an iterate stops being finite."""


class CgConvergenceWarning(UserWarning):
    """Conjugate gradient hit its iteration cap before reaching tolerance."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class LangevinConfig:
    """Inner sampler settings.

    ``mode="strict"`` uses the null-space-projected prior direction
    ``(I - A^T A) D(x) + A^T(xc - A x)``; with an isometric operator the
    projector annihilates the denoiser term entirely, so ``"relaxed"``
    (``D(x) + lam * A^T(xc - A x)``) is the default for Fourier problems.
    """

    h0: float = 0.1
    beta: float = 0.0001
    t1: int = 1
    mode: str = "relaxed"
    lam: float = 1.0

    def __post_init__(self):
        if not 0 < self.h0 <= 1:
            raise ValueError(f"h0 must be in (0, 1], got {self.h0}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.t1 < 1:
            raise ValueError(f"t1 must be >= 1, got {self.t1}")
        if self.mode not in ("strict", "relaxed"):
            raise ValueError(f"mode must be 'strict' or 'relaxed', got {self.mode!r}")
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")


@dataclass
class AplsConfig:
    """Outer loop settings for phase-alternating Langevin sampling."""

    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    t2: int = 500

    def __post_init__(self):
        if self.t2 < 1:
            raise ValueError(f"t2 must be >= 1, got {self.t2}")


@dataclass
class HioConfig:
    """HIO feedback and restart-protocol settings.

    ``beta=0`` is allowed as the degenerate no-feedback case.  With
    ``select_best`` the refinement stage returns its lowest-residual iterate
    instead of the last one (HIO is not monotone).
    """

    beta: float = 0.9
    iterations: int = 1000
    nonnegativity: bool = True
    restarts: int = 50
    restart_iterations: int = 50
    select_best: bool = True

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.iterations < 1 or self.restart_iterations < 1 or self.restarts < 1:
            raise ValueError("iteration and restart counts must be >= 1")


def step_schedule(h0: float, t: int) -> float:
    """Step size at (1-based) step t: h0*t / (1 + h0*(t-1)); grows from h0 toward 1."""
    return h0 * t / (1.0 + h0 * (t - 1))


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------

_CSV_HEADER = "iter,residual,sigma,h,gamma,psnr"


@dataclass
class RunReport:
    """Per-iteration diagnostics and the final reconstruction of one solver run."""

    method: str
    final_image: np.ndarray
    residuals: list[float]
    sigmas: list[float] | None = None
    hs: list[float] | None = None
    gammas: list[float] | None = None
    psnrs: list[float] | None = None
    wall_seconds: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def to_csv(self) -> str:
        """CSV with columns iter,residual,sigma,h,gamma,psnr (psnr only when a reference was given)."""
        def col(values, i):
            return "" if values is None else f"{values[i]:.10g}"

        lines = [_CSV_HEADER]
        for i, res in enumerate(self.residuals):
            lines.append(",".join([
                str(i + 1), f"{res:.10g}",
                col(self.sigmas, i), col(self.hs, i), col(self.gammas, i), col(self.psnrs, i),
            ]))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HIO
# ---------------------------------------------------------------------------

def _require_fourier(problem: MeasurementProblem):
    from .operators import FourierOperator

    if not isinstance(problem.operator, FourierOperator):
        raise ValueError("HIO requires a Fourier measurement problem with known support")
    return problem.operator


def _hio_chain(frame: np.ndarray, problem: MeasurementProblem, config: HioConfig,
               iterations: int, track_best: bool, trace: list[float] | None):
    """Run HIO on full-frame state; returns (last frame, best crop, best residual)."""
    op = _require_fourier(problem)
    b = problem.b
    support = np.zeros(op.frame_shape, dtype=bool)
    h, w = op.in_shape
    top = (op.frame_shape[0] - h) // 2
    left = (op.frame_shape[1] - w) // 2
    support[top:top + h, left:left + w] = True

    best_crop, best_res = None, np.inf
    if track_best or trace is not None:
        best_crop = crop(frame, op.in_shape)
        best_res = residual_norm(problem, best_crop)
        if trace is not None:
            trace.append(best_res)

    for _ in range(iterations):
        spectrum = np.fft.fft2(frame, norm="ortho")
        y = np.fft.ifft2(b * phase(spectrum), norm="ortho").real
        good = support & (y >= 0) if config.nonnegativity else support
        frame = np.where(good, y, frame - config.beta * y)
        if track_best or trace is not None:
            candidate = crop(frame, op.in_shape)
            res = residual_norm(problem, candidate)
            if trace is not None:
                trace.append(res)
            if res < best_res:
                best_crop, best_res = candidate, res
    return frame, best_crop, best_res


def hio(problem: MeasurementProblem, config: HioConfig, rng: RngStream | None = None,
        x0: np.ndarray | None = None, iterations: int | None = None) -> np.ndarray:
    """Hybrid input-output iteration; returns the support crop of the last iterate.

    Starts from ``x0`` when given, otherwise from a uniform-random image on
    the support drawn from ``rng``.
    """
    op = _require_fourier(problem)
    if x0 is None:
        if rng is None:
            raise ValueError("hio needs either x0 or an RngStream")
        x0 = rng.uniform(0.0, 255.0, op.in_shape)
    frame = embed(as_image(x0), *op.frame_shape)
    n_iter = config.iterations if iterations is None else iterations
    frame, _, _ = _hio_chain(frame, problem, config, n_iter, track_best=False, trace=None)
    return crop(frame, op.in_shape)


def hio_init(problem: MeasurementProblem, config: HioConfig, rng: RngStream,
             trace: list[float] | None = None) -> np.ndarray:
    """Restart protocol: many short HIO chains, refine the best one.

    Runs ``config.restarts`` chains of ``config.restart_iterations`` from
    independent random starts, keeps the chain whose output fits the
    measurements best, and continues it for ``config.iterations`` more
    iterations.  With ``config.select_best`` the refinement returns its
    lowest-residual iterate (its starting point included), so the result is
    never worse than the selected restart.
    """
    op = _require_fourier(problem)
    best_frame, best_res = None, np.inf
    for k in range(config.restarts):
        start = rng.child(k).uniform(0.0, 255.0, op.in_shape)
        frame = embed(start, *op.frame_shape)
        frame, _, _ = _hio_chain(frame, problem, config, config.restart_iterations,
                                 track_best=False, trace=None)
        res = residual_norm(problem, crop(frame, op.in_shape))
        if res < best_res:
            best_frame, best_res = frame, res
    frame, best_crop, _ = _hio_chain(best_frame, problem, config, config.iterations,
                                     track_best=config.select_best, trace=trace)
    if config.select_best:
        return best_crop
    return crop(frame, op.in_shape)


# ---------------------------------------------------------------------------
# Alternating minimization
# ---------------------------------------------------------------------------

def _cg_normal(operator: LinearOperator, rhs: np.ndarray, x0: np.ndarray,
               tol: float, max_iter: int) -> np.ndarray:
    """Conjugate gradient on A^T A x = rhs, warm-started at x0."""
    x = x0.copy()
    r = rhs - operator.normal(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    threshold = (tol * float(np.linalg.norm(rhs))) ** 2
    for _ in range(max_iter):
        if rs <= threshold:
            return x
        q = operator.normal(p)
        alpha = rs / float(np.vdot(p, q).real)
        x += alpha * p
        r -= alpha * q
        rs_new = float(np.vdot(r, r).real)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if rs > threshold:
        warnings.warn(
            f"CG stopped at {max_iter} iterations with residual norm {np.sqrt(rs):.3e}",
            CgConvergenceWarning)
    return x


def altmin(problem: MeasurementProblem, iterations: int, x0: np.ndarray,
           cg_tol: float = 1e-8, cg_max_iter: int = 200,
           trace: list[float] | None = None) -> np.ndarray:
    """Alternate phase fixing with the induced least-squares solve.

    ``p <- Ph(A x)`` then ``x <- argmin ||A x - p * b||``.  The solve uses
    the closed form ``x = A^T (p * b)`` for exact isometries and otherwise
    warm-started conjugate gradient on the normal equations, which makes the
    shared objective non-increasing across iterations.
    """
    op = problem.operator
    x = as_image(x0)
    for _ in range(iterations):
        p = phase(op.apply(x))
        target = p * problem.b
        if op.is_isometry:
            x = op.adjoint(target)
        else:
            x = _cg_normal(op, op.adjoint(target), x, cg_tol, cg_max_iter)
        if trace is not None:
            trace.append(float(np.linalg.norm(op.apply(x) - target)))
    return x


# ---------------------------------------------------------------------------
# Langevin sampling and APLS
# ---------------------------------------------------------------------------

def langevin_sample(xc: np.ndarray, operator: LinearOperator, denoiser: Denoiser,
                    x0: np.ndarray, config: LangevinConfig, rng: RngStream,
                    t1: int | None = None) -> tuple[np.ndarray, dict]:
    """Sample around the measurement-consistent set ``A x = xc`` under the denoiser prior.

    Per step t: step size ``h_t = h0*t/(1 + h0*(t-1))``; direction ``d_t``
    per ``config.mode``; noise scale from ``sigma_t^2 = ||d_t||^2 / N`` and
    ``gamma_t^2 = ((1 - beta*h_t)^2 - (1 - h_t)^2) * sigma_t^2``; update
    ``x <- x + h_t d_t + gamma_t z_t``.  With ``beta=1`` the injected noise
    vanishes and the iteration is a deterministic ascent.

    Returns the final iterate and per-step diagnostics ``{"h", "sigma", "gamma"}``.
    """
    steps = config.t1 if t1 is None else t1
    x = as_image(x0)
    n_pixels = x.size
    hs = np.empty(steps)
    sigmas = np.empty(steps)
    gammas = np.empty(steps)
    for t in range(1, steps + 1):
        h = step_schedule(config.h0, t)
        data_dir = operator.adjoint(xc - operator.apply(x))
        prior = denoiser.residual(x)
        if config.mode == "strict":
            d = prior - operator.normal(prior) + data_dir
        else:
            d = prior + config.lam * data_dir
        sigma2 = float(np.sum(d * d)) / n_pixels
        gamma2 = ((1.0 - config.beta * h) ** 2 - (1.0 - h) ** 2) * sigma2
        if gamma2 < -1e-12 * max(sigma2, 1.0):
            raise AssertionError(f"negative gamma^2 = {gamma2} at step {t}; beta > 1?")
        gamma = np.sqrt(max(gamma2, 0.0))
        z = rng.standard_normal(x.shape)
        x = x + h * d + gamma * z
        if not np.all(np.isfinite(x)):
            raise SolverDivergenceError(
                f"non-finite iterate at Langevin step {t} (h={h:.4g}, sigma={np.sqrt(sigma2):.4g})")
        hs[t - 1], sigmas[t - 1], gammas[t - 1] = h, np.sqrt(sigma2), gamma
    return x, {"h": hs, "sigma": sigmas, "gamma": gammas}


def apls(problem: MeasurementProblem, denoiser: Denoiser, config: AplsConfig,
         x0: np.ndarray, rng: RngStream, reference: np.ndarray | None = None) -> RunReport:
    """Alternating phase Langevin sampling.

    Each outer iteration fixes the phase from the current iterate,
    ``p <- Ph(A x)``, and hands the phased amplitudes ``xc = p * b`` to the
    Langevin sampler, warm-started at the current iterate.  Pixel values are
    never clamped mid-run; clamp at save time instead.
    """
    op = problem.operator
    x = as_image(x0)
    start = time.perf_counter()
    residuals, sigmas, hs, gammas = [], [], [], []
    psnrs = [] if reference is not None else None
    for _ in range(config.t2):
        p = phase(op.apply(x))
        xc = p * problem.b
        x, diag = langevin_sample(xc, op, denoiser, x, config.langevin, rng)
        residuals.append(residual_norm(problem, x))
        sigmas.append(float(diag["sigma"][-1]))
        hs.append(float(diag["h"][-1]))
        gammas.append(float(diag["gamma"][-1]))
        if psnrs is not None:
            psnrs.append(register(x, reference)[1])
    return RunReport(
        method="apls", final_image=x, residuals=residuals, sigmas=sigmas, hs=hs,
        gammas=gammas, psnrs=psnrs, wall_seconds=time.perf_counter() - start,
        seed=rng.seed, config={"t2": config.t2, **asdict(config.langevin)})


# ---------------------------------------------------------------------------
# Uniform reconstruction front end (used by the benchmark, service, and CLI)
# ---------------------------------------------------------------------------

def reconstruct(problem: MeasurementProblem, method: str, rng: RngStream,
                denoiser: Denoiser | None = None,
                hio_config: HioConfig | None = None,
                apls_config: AplsConfig | None = None,
                altmin_iterations: int = 500,
                x0: np.ndarray | None = None,
                reference: np.ndarray | None = None) -> RunReport:
    """Run one named method end to end, including the HIO initialization protocol.

    ``method`` is one of ``hio`` (the restart protocol itself), ``altmin``,
    or ``apls``; the latter two start from the HIO initialization unless an
    explicit ``x0`` is supplied.
    """
    hio_config = hio_config or HioConfig()
    start = time.perf_counter()
    if method == "hio":
        trace: list[float] = []
        x = hio_init(problem, hio_config, rng.child(0), trace=trace)
        report = RunReport(method="hio", final_image=x, residuals=trace,
                           seed=rng.seed, config=asdict(hio_config))
    elif method == "altmin":
        if x0 is None:
            x0 = hio_init(problem, hio_config, rng.child(0))
        trace = []
        x = altmin(problem, altmin_iterations, x0, trace=trace)
        report = RunReport(method="altmin", final_image=x, residuals=trace,
                           seed=rng.seed, config={"iterations": altmin_iterations})
    elif method == "apls":
        if denoiser is None:
            raise ValueError("apls needs a denoiser")
        apls_config = apls_config or AplsConfig()
        if x0 is None:
            x0 = hio_init(problem, hio_config, rng.child(0))
        report = apls(problem, denoiser, apls_config, x0, rng.child(1), reference=reference)
    else:
        raise ValueError(f"unknown method {method!r}")
    report.wall_seconds = time.perf_counter() - start
    return report
