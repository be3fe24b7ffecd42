"""Genetic-algorithm training of the pipeline hyperparameters.

The gene vector is [coef, tau_1, ..., tau_n_iter]: the projection scale
followed by one normalized threshold per reduction iteration. Fitness is
the PAPR at the target CCDF level on a frozen seeded dataset, plus a soft
penalty for exceeding the EVM budget (common random numbers keep candidate
comparisons noise-free). Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError
from .hbf import PipelineParams, build_precoder, reduce_papr_hbf
from .signal import SimConfig, ccdf, generate_dac_streams, make_rng, papr_at
from .str_engine import ThresholdSchedule

DEFAULT_COEF_BOUNDS = (0.2, 2.0)
DEFAULT_TAU_BOUNDS = (1.0, 3.0)

# frozen GA internals
_TOURNAMENT = 3
_BLEND_ALPHA = 0.25
_SIGMA_DECAY = 0.93
_EVM_PENALTY_DB_PER_UNIT = 200.0


@dataclass(frozen=True)
class GaConfig:
    population: int = 24
    generations: int = 40
    bounds: tuple[tuple[float, float], ...] | None = None
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    mutation_sigma: float = 0.15
    elitism: int = 2
    target_ccdf: float = 1e-4
    training_n_ofdm: int = 30
    rng_seed: int = 1

    def __post_init__(self):
        if self.population < 4:
            raise ShapeError("population must be at least 4")
        for rate in (self.crossover_rate, self.mutation_rate):
            if not 0.0 <= rate <= 1.0:
                raise ShapeError("rates must lie in [0, 1]")
        if self.bounds is not None:
            for lo, hi in self.bounds:
                if lo >= hi:
                    raise ShapeError("each gene bound needs lo < hi")
        if not 0 <= self.elitism < self.population:
            raise ShapeError("elitism must be smaller than the population")


@dataclass
class TrainResult:
    genes: np.ndarray
    fitness: float
    evm: float
    history: np.ndarray
    fallback_ccdf: float | None = None


def default_bounds(n_iter: int) -> tuple[tuple[float, float], ...]:
    return (DEFAULT_COEF_BOUNDS,) + (DEFAULT_TAU_BOUNDS,) * n_iter


def genes_to_params(genes: np.ndarray, projection: str = "ls2") -> PipelineParams:
    genes = np.asarray(genes, dtype=float)
    schedule = ThresholdSchedule(tau_norm=tuple(genes[1:]), coef=float(genes[0]))
    return PipelineParams(schedule=schedule, projection=projection)


def make_fitness(sim: SimConfig, n_iter: int, ga: GaConfig,
                 projection: str = "ls2"):
    """Build the pipeline fitness over a frozen seeded dataset.

    Returns (fitness_fn, detail_fn): fitness_fn maps genes to the scalar
    objective; detail_fn additionally reports (papr_db, evm, ccdf_used)
    where ccdf_used falls back to the deepest supported quantile when the
    dataset is too small for the requested level.
    """
    if sim.n_iter != n_iter:
        sim = replace(sim, n_iter=n_iter)
    dataset = generate_dac_streams(sim, n_ofdm=ga.training_n_ofdm)
    precoder = build_precoder(sim.n_ant, sim.n_dac, sim.rng_seed)
    n_values = ga.training_n_ofdm * sim.n_ant
    ccdf_used = max(ga.target_ccdf, 1.0 / n_values)

    def detail(genes):
        params = genes_to_params(genes, projection)
        _, report = reduce_papr_hbf(dataset, precoder, params, sim)
        papr = papr_at(ccdf(report.papr_after_db.ravel()), ccdf_used)
        return papr, report.evm, ccdf_used

    def fitness(genes):
        papr, evm, _ = detail(genes)
        return papr + _EVM_PENALTY_DB_PER_UNIT * max(0.0, evm - sim.evm_budget)

    return fitness, detail


def minimize_ga(ga: GaConfig, fitness_fn, n_genes: int) -> TrainResult:
    """Generic real-coded GA: tournament selection, blend crossover,
    Gaussian mutation clipped to bounds, elitism. Deterministic per seed;
    elitism makes the per-generation best monotone non-increasing."""
    bounds = ga.bounds if ga.bounds is not None else default_bounds(n_genes - 1)
    if len(bounds) != n_genes:
        raise ShapeError(f"need {n_genes} gene bounds, got {len(bounds)}")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    span = hi - lo
    rng = make_rng(ga.rng_seed, stream=2)

    pop = lo + rng.random((ga.population, n_genes)) * span
    fit = np.array([fitness_fn(g) for g in pop])
    history = [float(fit.min())]

    def tournament() -> np.ndarray:
        picks = rng.integers(0, ga.population, size=_TOURNAMENT)
        return pop[picks[np.argmin(fit[picks])]]

    for gen in range(ga.generations):
        order = np.argsort(fit, kind="stable")
        elites = pop[order[:ga.elitism]].copy()
        elite_fit = fit[order[:ga.elitism]].copy()
        sigma = ga.mutation_sigma * (_SIGMA_DECAY ** gen) * span
        children = np.empty((ga.population - ga.elitism, n_genes))
        for c in range(children.shape[0]):
            a, b = tournament(), tournament()
            if rng.random() < ga.crossover_rate:
                mix = rng.uniform(-_BLEND_ALPHA, 1.0 + _BLEND_ALPHA, size=n_genes)
                child = mix * a + (1.0 - mix) * b
            else:
                child = a.copy()
            mutate = rng.random(n_genes) < ga.mutation_rate
            child = child + mutate * rng.normal(0.0, 1.0, size=n_genes) * sigma
            children[c] = np.clip(child, lo, hi)
        child_fit = np.array([fitness_fn(g) for g in children])
        pop = np.vstack([elites, children])
        fit = np.concatenate([elite_fit, child_fit])
        history.append(float(fit.min()))

    best = int(np.argmin(fit))
    return TrainResult(genes=pop[best].copy(), fitness=float(fit[best]),
                       evm=float("nan"), history=np.asarray(history))


def ga_train(ga: GaConfig, n_iter: int, sim: SimConfig,
             projection: str = "ls2") -> TrainResult:
    """Train [coef, tau_1..tau_n_iter] on the pipeline fitness."""
    fitness_fn, detail_fn = make_fitness(sim, n_iter, ga, projection)
    result = minimize_ga(ga, fitness_fn, n_genes=1 + n_iter)
    papr, evm, ccdf_used = detail_fn(result.genes)
    result.evm = evm
    result.fallback_ccdf = ccdf_used if ccdf_used > ga.target_ccdf else None
    return result


def grid_scan(fitness_fn, bounds: tuple[tuple[float, float], ...],
              steps: int = 5):
    """Debugging utility: exhaustive fitness scan over a regular gene grid."""
    axes = [np.linspace(lo, hi, steps) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    values = np.array([fitness_fn(p) for p in points])
    best = int(np.argmin(values))
    return points[best], float(values[best]), points, values
