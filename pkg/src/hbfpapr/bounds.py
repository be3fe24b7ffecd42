"""Convex performance bounds: minimize the peak antenna-sample magnitude of
the corrected signal subject to a Frobenius power budget.

Three variants of the feasible correction set:

* ``limited_band_and_space`` - correction is P @ dZ @ K with dZ in the DAC
  domain, K the circulant band-limiting projector of the occupied bins;
* ``unlimited_space``        - the precoder is dropped, one correction row
  per antenna, still band limited;
* ``unlimited_band``         - the band projector is dropped, correction
  P @ dZ with full per-sample freedom.

The solver runs a smoothed-max (log-sum-exp) projected gradient with
temperature continuation and reports a true duality-gap certificate from
the softmax weights. An independent multi-start projected-subgradient
oracle certifies small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleDimensionError, ShapeError
from .hbf import Precoder, _embed_rows, twin_array
from .signal import (DOMAIN_ANTENNA, CcdfCurve, TimeSignal, ccdf, centered_bins,
                     make_rng, papr_per_stream)
from .str_engine import SincKernel, build_sinc

VARIANT_LIMITED = "limited_band_and_space"
VARIANT_UNLIMITED_SPACE = "unlimited_space"
VARIANT_UNLIMITED_BAND = "unlimited_band"
ALL_VARIANTS = (VARIANT_LIMITED, VARIANT_UNLIMITED_SPACE, VARIANT_UNLIMITED_BAND)

# oracle refuses above this many real optimization variables
ORACLE_DIM_CAP = 64

# frozen continuation/step constants, sized to pass the oracle-agreement gate
_MU_SHRINK = 0.25
_MAX_STAGES = 14
_TINY = 1e-300


@dataclass
class BoundProblem:
    """One minimax instance: antenna signal, active operators, budget."""

    x: np.ndarray
    precoder: Precoder | None
    band_mask: np.ndarray | None
    max_power: float
    variant: str

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.complex128))
        if self.max_power < 0:
            raise ShapeError("max_power must be nonnegative")
        if self.variant not in ALL_VARIANTS:
            raise ShapeError(f"unknown variant {self.variant!r}")
        if self.precoder is not None and self.precoder.n_ant != self.x.shape[0]:
            raise ShapeError("precoder row count must match antenna count")

    @property
    def var_shape(self) -> tuple[int, int]:
        rows = self.precoder.n_dac if self.precoder is not None else self.x.shape[0]
        return rows, self.x.shape[1]


@dataclass
class BoundSolution:
    dz: np.ndarray
    objective: float
    iterations: int
    certified_gap: float
    converged: bool


def make_bound_problem(x: np.ndarray, precoder: Precoder, kernel: SincKernel,
                       max_power: float, variant: str) -> BoundProblem:
    """Assemble a variant instance; the dropped operator becomes identity.

    The circulant built from the (unwindowed) kernel acts along time as the
    occupied-band projector, so it is represented by its eigenvalues: the
    0/1 indicator of the occupied bins.
    """
    mask = np.zeros(kernel.n_fft)
    mask[centered_bins(kernel.n_fft, kernel.n_sc)] = 1.0
    if variant == VARIANT_LIMITED:
        return BoundProblem(x, precoder, mask, max_power, variant)
    if variant == VARIANT_UNLIMITED_SPACE:
        return BoundProblem(x, None, mask, max_power, variant)
    if variant == VARIANT_UNLIMITED_BAND:
        return BoundProblem(x, precoder, None, max_power, variant)
    raise ShapeError(f"unknown variant {variant!r}")


def _forward(problem: BoundProblem, dz: np.ndarray) -> np.ndarray:
    out = dz
    if problem.precoder is not None:
        embedded = _embed_rows(problem.precoder.column_bins, dz,
                               problem.precoder.n_ant)
        out = problem.precoder.n_ant * np.fft.ifft(embedded, axis=0)
    if problem.band_mask is not None:
        out = np.fft.ifft(np.fft.fft(out, axis=-1) * problem.band_mask, axis=-1)
    return out


def _adjoint(problem: BoundProblem, r: np.ndarray) -> np.ndarray:
    out = r
    if problem.band_mask is not None:
        out = np.fft.ifft(np.fft.fft(out, axis=-1) * problem.band_mask, axis=-1)
    if problem.precoder is not None:
        out = np.fft.fft(out, axis=0)[problem.precoder.column_bins]
    return out


def _operator_norm(problem: BoundProblem) -> float:
    """Largest singular value of the forward map, via a few power iterations
    (exact sqrt(n_ant) for orthogonal-column precoders, smaller otherwise
    never matters; duplicated columns push it higher)."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(problem.var_shape) \
        + 1j * rng.standard_normal(problem.var_shape)
    v /= np.linalg.norm(v)
    sigma = 1.0
    for _ in range(30):
        w = _adjoint(problem, _forward(problem, v))
        sigma = np.linalg.norm(w)
        if sigma == 0.0:
            return 1.0
        v = w / sigma
    return float(np.sqrt(sigma))


def _project_ball(dz: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(dz)
    if norm <= radius:
        return dz
    return dz * (radius / norm)


def _objective(problem: BoundProblem, dz: np.ndarray) -> tuple[float, np.ndarray]:
    r = problem.x - _forward(problem, dz)
    return float(np.abs(r).max()), r


def _dual_lower_bound(problem: BoundProblem, lam: np.ndarray) -> float:
    """Weak-duality bound: any unit-l1 multiplier certifies
    opt >= Re<lam, X> - rho * ||A^H lam||_F."""
    value = float(np.real(np.vdot(lam, problem.x)))
    return value - problem.max_power * float(np.linalg.norm(_adjoint(problem, lam)))


def _smoothed_value(problem: BoundProblem, dz: np.ndarray,
                    mu: float) -> tuple[float, float]:
    """Log-sum-exp smoothed objective and the exact max-modulus objective,
    from a single forward pass (no gradient)."""
    r = problem.x - _forward(problem, dz)
    a = np.abs(r)
    amax = a.max()
    total = np.exp((a - amax) / mu).sum()
    return float(amax + mu * np.log(total)), float(amax)


def _smoothed(problem: BoundProblem, dz: np.ndarray,
              mu: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Log-sum-exp smoothed objective, its (real-calculus) gradient, and the
    softmax dual multiplier."""
    r = problem.x - _forward(problem, dz)
    a = np.abs(r)
    amax = a.max()
    w = np.exp((a - amax) / mu)
    total = w.sum()
    w /= total
    f = amax + mu * np.log(total)
    lam = w * r / np.maximum(a, _TINY)
    grad = -_adjoint(problem, lam)
    return f, grad, lam


def solve_bound(problem: BoundProblem, tol: float = 1e-3,
                max_iters: int = 20000) -> BoundSolution:
    """Accelerated projected gradient on the smoothed objective with
    temperature continuation; returns the best iterate with a duality-gap
    certificate (relative gap > tol means not converged)."""
    if tol <= 0:
        raise ShapeError("tol must be positive")
    rho = problem.max_power
    if rho == 0.0:
        obj, r = _objective(problem, np.zeros(problem.var_shape, dtype=np.complex128))
        return BoundSolution(np.zeros(problem.var_shape, dtype=np.complex128),
                             obj, 0, 0.0, True)

    # warm start from the clipped LS projection of the target
    gain = _operator_norm(problem) ** 2
    dz = _project_ball(_adjoint(problem, problem.x) / gain, rho)
    best_obj, _ = _objective(problem, dz)
    best_dz = dz.copy()
    best_lower = 0.0

    mu = max(best_obj, _TINY) * 0.5
    iters_used = 0
    stage_iters = max(200, max_iters // _MAX_STAGES)

    for _ in range(_MAX_STAGES):
        L = gain / mu
        y = dz
        prev = dz
        t_momentum = 1.0
        f_y, g_y, lam = _smoothed(problem, y, mu)
        for _ in range(stage_iters):
            if iters_used >= max_iters:
                break
            # backtracking projected-gradient step on the smoothed objective
            while True:
                cand = _project_ball(y - g_y / L, rho)
                step = cand - y
                f_cand, obj = _smoothed_value(problem, cand, mu)
                model = f_y + float(np.real(np.vdot(g_y, step))) \
                    + 0.5 * L * float(np.linalg.norm(step)) ** 2
                if f_cand <= model + 1e-15 * max(1.0, abs(f_y)):
                    break
                L *= 2.0
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_momentum ** 2))
            y = cand + ((t_momentum - 1.0) / t_next) * (cand - prev)
            f_y, g_y, lam = _smoothed(problem, y, mu)
            t_momentum = t_next
            prev_change = np.linalg.norm(cand - prev)
            prev = cand
            iters_used += 1
            if obj < best_obj:
                best_obj = obj
                best_dz = cand.copy()
            # weak-duality certificate; ||A^H lam|| is the gradient norm
            lower = float(np.real(np.vdot(lam, problem.x))) \
                - rho * float(np.linalg.norm(g_y))
            best_lower = max(best_lower, lower)
            gap = best_obj - best_lower
            if gap <= tol * max(best_obj, _TINY):
                return BoundSolution(best_dz, best_obj, iters_used, gap, True)
            if prev_change <= 1e-12 * max(1.0, rho):
                break
        dz = prev
        mu *= _MU_SHRINK
        if iters_used >= max_iters:
            break

    gap = best_obj - best_lower
    converged = gap <= tol * max(best_obj, _TINY)
    return BoundSolution(best_dz, best_obj, iters_used, gap, converged)


def solve_bound_rows(x_rows: np.ndarray, band_mask: np.ndarray,
                     budgets: np.ndarray, tol: float = 1e-3,
                     max_iters: int = 20000):
    """Batched independent per-row solves of the unlimited-space problem.

    Row b minimizes max_t |x_rows[b] - delta K| over ||delta||_F <=
    budgets[b], with K the shared band projector. The math is identical to
    ``solve_bound`` on each row alone (per-row smoothing temperature, step
    size, projection, and duality gap), just advanced in lockstep so the
    FFTs batch. Returns (dz_rows, objectives, gaps, iterations).
    """
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.complex128))
    n_rows, n = x_rows.shape
    rho = np.asarray(budgets, dtype=float).reshape(n_rows)

    def forward(v):
        return np.fft.ifft(np.fft.fft(v, axis=-1) * band_mask, axis=-1)

    def project(v):
        norms = np.linalg.norm(v, axis=-1)
        scale = np.minimum(1.0, rho / np.maximum(norms, _TINY))
        return v * scale[:, None]

    def objective(dz):
        r = x_rows - forward(dz)
        return np.abs(r).max(axis=-1), r

    def smoothed_value(dz, mu):
        r = x_rows - forward(dz)
        a = np.abs(r)
        amax = a.max(axis=-1, keepdims=True)
        tot = np.exp((a - amax) / mu[:, None]).sum(axis=-1, keepdims=True)
        f = (amax + mu[:, None] * np.log(tot))[:, 0]
        return f, amax[:, 0]

    def smoothed(dz, mu):
        r = x_rows - forward(dz)
        a = np.abs(r)
        amax = a.max(axis=-1, keepdims=True)
        w = np.exp((a - amax) / mu[:, None])
        tot = w.sum(axis=-1, keepdims=True)
        f = (amax + mu[:, None] * np.log(tot))[:, 0]
        w /= tot
        lam = w * r / np.maximum(a, _TINY)
        return f, -forward(lam), lam  # band projector is self-adjoint

    # zero-budget rows stay pinned at dz=0 by the projection itself
    dz = project(forward(x_rows))
    best_obj, _ = objective(dz)
    best_dz = dz.copy()
    best_lower = np.zeros(n_rows)
    mu = np.maximum(best_obj, _TINY) * 0.5
    iters_used = 0
    stage_iters = max(200, max_iters // _MAX_STAGES)

    for _ in range(_MAX_STAGES):
        L = 1.0 / mu
        y = dz
        prev = dz
        t_momentum = 1.0
        f_y, g_y, lam = smoothed(y, mu)
        for _ in range(stage_iters):
            if iters_used >= max_iters:
                break
            while True:
                cand = project(y - g_y / L[:, None])
                step = cand - y
                f_cand, g_cand, lam = smoothed(cand, mu)
                model = f_y + np.real(np.sum(np.conj(g_y) * step, axis=-1)) \
                    + 0.5 * L * np.linalg.norm(step, axis=-1) ** 2
                bad = f_cand > model + 1e-15 * np.maximum(1.0, np.abs(f_y))
                if not bad.any():
                    break
                L = np.where(bad, 2.0 * L, L)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_momentum ** 2))
            y = cand + ((t_momentum - 1.0) / t_next) * (cand - prev)
            f_y, g_y, _ = smoothed(y, mu)
            t_momentum = t_next
            prev = cand
            iters_used += 1
            obj, _ = objective(cand)
            improved = obj < best_obj
            best_obj = np.where(improved, obj, best_obj)
            best_dz[improved] = cand[improved]
            best_lower = np.maximum(best_lower, lower_bound(lam))
            gaps = best_obj - best_lower
            if np.all(gaps <= tol * np.maximum(best_obj, _TINY)):
                return best_dz, best_obj, gaps, iters_used
        dz = prev
        mu = mu * _MU_SHRINK
        if iters_used >= max_iters:
            break

    gaps = best_obj - best_lower
    return best_dz, best_obj, gaps, iters_used


def reference_oracle(problem: BoundProblem, grid_density: int = 4) -> float:
    """Ground-truth objective for desk-size instances.

    Multi-start projected subgradient with diminishing steps followed by a
    target-gap (Polyak-style) refinement; returns the best objective seen.
    ``grid_density`` scales both the number of random starts and the
    iteration budget. Refuses instances above ORACLE_DIM_CAP real scalars.
    """
    rows, cols = problem.var_shape
    if 2 * rows * cols > ORACLE_DIM_CAP:
        raise OracleDimensionError(
            f"{2 * rows * cols} real variables exceed the oracle cap "
            f"of {ORACLE_DIM_CAP}")
    rho = problem.max_power
    zero = np.zeros(problem.var_shape, dtype=np.complex128)
    if rho == 0.0:
        return _objective(problem, zero)[0]

    rng = make_rng(20240, stream=7)
    starts = [zero,
              _project_ball(_adjoint(problem, problem.x)
                            / _operator_norm(problem) ** 2, rho)]
    for _ in range(2 + grid_density):
        raw = rng.standard_normal(problem.var_shape) \
            + 1j * rng.standard_normal(problem.var_shape)
        starts.append(_project_ball(raw * rho / np.linalg.norm(raw), rho))

    n_sweep = 1500 * grid_density
    n_polish = 1500 * grid_density
    best = np.inf
    for start in starts:
        dz = start.copy()
        local_best = np.inf
        local_dz = dz.copy()
        for k in range(1, n_sweep + 1):
            obj, r = _objective(problem, dz)
            if obj < local_best:
                local_best = obj
                local_dz = dz.copy()
            flat = np.argmax(np.abs(r))
            sub = np.zeros_like(r)
            peak = r.flat[flat]
            sub.flat[flat] = peak / max(abs(peak), _TINY)
            g = -_adjoint(problem, sub)
            gnorm = np.linalg.norm(g)
            if gnorm < _TINY:
                break
            dz = _project_ball(dz - (rho / np.sqrt(k)) * (g / gnorm), rho)
        # Polyak refinement around the best point of the sweep
        dz = local_dz.copy()
        target_gap = 0.05 * max(local_best, _TINY)
        for k in range(1, n_polish + 1):
            obj, r = _objective(problem, dz)
            if obj < local_best:
                local_best = obj
                local_dz = dz.copy()
            flat = np.argmax(np.abs(r))
            sub = np.zeros_like(r)
            peak = r.flat[flat]
            sub.flat[flat] = peak / max(abs(peak), _TINY)
            g = -_adjoint(problem, sub)
            gnorm2 = float(np.linalg.norm(g)) ** 2
            if gnorm2 < _TINY:
                break
            step = (obj - (local_best - target_gap)) / gnorm2
            dz = _project_ball(dz - step * g, rho)
            target_gap *= 0.998
        best = min(best, local_best)
    return float(best)


def bound_suite(config, z: TimeSignal, precoder: Precoder, evm_budget: float,
                variants: tuple[str, ...] = ALL_VARIANTS,
                tol: float = 1e-3, max_iters: int = 20000):
    """Per-symbol bound solves aggregated into one CCDF curve per variant.

    Budgets keep the injected noise power at the EVM fraction of the signal
    in the variable's own domain: the DAC-domain variants get
    ``evm * ||Z_sym||_F`` per symbol, and the unlimited-space variant is
    solved per antenna (the fully digital reference: every antenna reduced
    independently) with ``evm * ||x_a||_F`` each. Returns
    ``(curves, records)`` where records holds one
    (variant, symbol, objective, iterations, gap) tuple per solve; the
    per-antenna solves of one symbol are merged into a single record with
    the worst gap and summed iterations.
    """
    kernel = build_sinc(config.n_fft, config.n_sc)
    curves: dict[str, CcdfCurve] = {}
    records: list[tuple] = []
    papr_values: dict[str, list] = {v: [] for v in variants}
    for k in range(z.n_symbols):
        zs = z.symbol(k)
        x = twin_array(precoder, zs)
        power_dac = float(np.linalg.norm(zs))
        for variant in variants:
            if variant == VARIANT_UNLIMITED_SPACE:
                mask = np.zeros(kernel.n_fft)
                mask[centered_bins(kernel.n_fft, kernel.n_sc)] = 1.0
                budgets = evm_budget * np.linalg.norm(x, axis=-1)
                dz_rows, objs, gaps, iters = solve_bound_rows(
                    x, mask, budgets, tol=tol, max_iters=max_iters)
                reduced = x - np.fft.ifft(np.fft.fft(dz_rows, axis=-1) * mask,
                                          axis=-1)
                papr = papr_per_stream(TimeSignal(reduced, n_fft=z.n_fft,
                                                  domain=DOMAIN_ANTENNA))[0]
                papr_values[variant].extend(papr.tolist())
                records.append((variant, k, float(objs.max()), iters,
                                float(gaps.max())))
                continue
            budget = evm_budget * power_dac
            problem = make_bound_problem(x, precoder, kernel, budget, variant)
            sol = solve_bound(problem, tol=tol, max_iters=max_iters)
            reduced = x - _forward(problem, sol.dz)
            papr = papr_per_stream(TimeSignal(reduced, n_fft=z.n_fft,
                                              domain=DOMAIN_ANTENNA))[0]
            papr_values[variant].extend(papr.tolist())
            records.append((variant, k, sol.objective, sol.iterations,
                            sol.certified_gap))
    for variant in variants:
        curves[variant] = ccdf(np.asarray(papr_values[variant]))
    return curves, records
