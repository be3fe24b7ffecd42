"""Experiment configuration files and result export.

The config format is plain sectioned key=value text ('#' comments allowed);
unknown sections or keys are errors. Every emitted artifact starts with a
single '#' provenance line carrying the fully resolved configuration and
seed, and all floats are written with a fixed 12-significant-digit format
so identical runs produce byte-identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import ALL_VARIANTS
from .errors import ConfigError
from .hbf import PipelineParams, ReductionReport
from .signal import CcdfCurve, SimConfig
from .str_engine import SincKernel, ThresholdSchedule
from .trainer import GaConfig


@dataclass(frozen=True)
class BoundOptions:
    tol: float = 1e-3
    max_iters: int = 20000
    variants: tuple[str, ...] = ALL_VARIANTS

    def __post_init__(self):
        for v in self.variants:
            if v not in ALL_VARIANTS:
                raise ConfigError(f"unknown bound variant {v!r}")


@dataclass
class ExperimentSpec:
    """Everything one CLI run needs; defaults reproduce the standard setup."""

    sim: SimConfig = field(default_factory=SimConfig)
    pipeline: PipelineParams = field(default_factory=lambda: PipelineParams(
        schedule=ThresholdSchedule(tau_norm=(1.76, 1.68), coef=0.85)))
    ga: GaConfig = field(default_factory=GaConfig)
    bound: BoundOptions = field(default_factory=BoundOptions)
    output_dir: str = "out"
    emit_plots: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.pipeline.schedule.n_iter != self.sim.n_iter:
            raise ConfigError(
                f"schedule length {self.pipeline.schedule.n_iter} does not "
                f"match n_iter={self.sim.n_iter}")


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty list value")
    return tuple(float(p) for p in parts)


def _parse_str_list(text: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    if not parts:
        raise ConfigError("empty list value")
    return parts


def _parse_opt_int(text: str):
    value = text.strip().lower()
    if value in ("", "none"):
        return None
    return int(text)


_SCHEMA = {
    "sim": {
        "n_fft": int, "n_sc": int, "n_up": int, "n_ant": int, "n_dac": int,
        "n_lpf": int, "n_iter": int, "n_b": int, "n_ofdm": int,
        "modulation": str, "evm_budget": float, "rng_seed": int,
    },
    "pipeline": {
        "coef": float, "tau_norm": _parse_float_list, "projection": str,
        "window_len": _parse_opt_int, "norm_mode": str,
    },
    "ga": {
        "population": int, "generations": int, "coef_bounds": _parse_float_list,
        "tau_bounds": _parse_float_list, "crossover_rate": float,
        "mutation_rate": float, "mutation_sigma": float, "elitism": int,
        "target_ccdf": float, "training_n_ofdm": int, "rng_seed": int,
    },
    "bound": {
        "tol": float, "max_iters": int, "variants": _parse_str_list,
    },
    "output": {
        "dir": str, "emit_plots": _parse_bool,
    },
}


def parse_config_text(text: str) -> dict[str, dict]:
    """Parse sectioned key=value text against the schema; unknown keys error."""
    sections: dict[str, dict] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current}]")
        try:
            sections[current][key] = _SCHEMA[current][key](value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return sections


def spec_from_sections(sections: dict[str, dict]) -> ExperimentSpec:
    base = ExperimentSpec()
    sim = replace(base.sim, **sections.get("sim", {}))

    pipe_raw = dict(sections.get("pipeline", {}))
    schedule = ThresholdSchedule(
        tau_norm=pipe_raw.pop("tau_norm", base.pipeline.schedule.tau_norm),
        coef=pipe_raw.pop("coef", base.pipeline.schedule.coef),
        norm_mode=pipe_raw.pop("norm_mode", base.pipeline.schedule.norm_mode))
    pipeline = PipelineParams(
        schedule=schedule,
        projection=pipe_raw.pop("projection", base.pipeline.projection),
        window_len=pipe_raw.pop("window_len", base.pipeline.window_len))

    ga_raw = dict(sections.get("ga", {}))
    coef_bounds = ga_raw.pop("coef_bounds", None)
    tau_bounds = ga_raw.pop("tau_bounds", None)
    ga = replace(base.ga, **ga_raw)
    if coef_bounds is not None or tau_bounds is not None:
        cb = tuple(coef_bounds) if coef_bounds else (0.2, 2.0)
        tb = tuple(tau_bounds) if tau_bounds else (1.0, 3.0)
        ga = replace(ga, bounds=(cb,) + (tb,) * sim.n_iter)

    bound = replace(base.bound, **sections.get("bound", {}))
    out_raw = sections.get("output", {})
    return ExperimentSpec(sim=sim, pipeline=pipeline, ga=ga, bound=bound,
                          output_dir=out_raw.get("dir", base.output_dir),
                          emit_plots=out_raw.get("emit_plots", base.emit_plots))


def load_spec(path: str | None = None) -> ExperimentSpec:
    if path is None:
        return ExperimentSpec()
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_sections(parse_config_text(fh.read()))


def fnum(value: float) -> str:
    return f"{value:.12g}"


def spec_to_text(spec: ExperimentSpec) -> str:
    """Resolved config in the same format the parser reads."""
    sched = spec.pipeline.schedule
    ga = spec.ga
    bounds = ga.bounds if ga.bounds is not None else ((0.2, 2.0), (1.0, 3.0))
    lines = [
        "[sim]",
        *(f"{k} = {getattr(spec.sim, k)}" for k in (
            "n_fft", "n_sc", "n_up", "n_ant", "n_dac", "n_lpf", "n_iter",
            "n_b", "n_ofdm", "modulation")),
        f"evm_budget = {fnum(spec.sim.evm_budget)}",
        f"rng_seed = {spec.sim.rng_seed}",
        "",
        "[pipeline]",
        f"coef = {fnum(sched.coef)}",
        f"tau_norm = {', '.join(fnum(t) for t in sched.tau_norm)}",
        f"projection = {spec.pipeline.projection}",
        f"window_len = {spec.pipeline.window_len if spec.pipeline.window_len is not None else 'none'}",
        f"norm_mode = {sched.norm_mode}",
        "",
        "[ga]",
        f"population = {ga.population}",
        f"generations = {ga.generations}",
        f"coef_bounds = {fnum(bounds[0][0])}, {fnum(bounds[0][1])}",
        f"tau_bounds = {fnum(bounds[-1][0])}, {fnum(bounds[-1][1])}",
        f"crossover_rate = {fnum(ga.crossover_rate)}",
        f"mutation_rate = {fnum(ga.mutation_rate)}",
        f"mutation_sigma = {fnum(ga.mutation_sigma)}",
        f"elitism = {ga.elitism}",
        f"target_ccdf = {fnum(ga.target_ccdf)}",
        f"training_n_ofdm = {ga.training_n_ofdm}",
        f"rng_seed = {ga.rng_seed}",
        "",
        "[bound]",
        f"tol = {fnum(spec.bound.tol)}",
        f"max_iters = {spec.bound.max_iters}",
        f"variants = {', '.join(spec.bound.variants)}",
        "",
        "[output]",
        f"dir = {spec.output_dir}",
        f"emit_plots = {str(spec.emit_plots).lower()}",
    ]
    return "\n".join(lines) + "\n"


def provenance_line(spec: ExperimentSpec) -> str:
    """Single-line resolved configuration for artifact headers.

    Covers everything the emitted numbers depend on (sim/pipeline/ga/bound
    and seeds); the output location is deliberately excluded so identical
    experiments produce byte-identical files anywhere.
    """
    flat = []
    section = ""
    for line in spec_to_text(spec).splitlines():
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        if section == "output":
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        flat.append(f"{section}.{key}={value}")
    return "# " + " ".join(flat)


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ccdf_csv(path: str, curve: CcdfCurve, header: str) -> None:
    lines = [header, "papr_db,ccdf"]
    lines += [f"{fnum(p)},{fnum(c)}"
              for p, c in zip(curve.papr_db, curve.exceed_prob)]
    _write_lines(path, lines)


def write_psd_csv(path: str, freq: np.ndarray, psd_db: np.ndarray,
                  header: str) -> None:
    lines = [header, "bin_hz_normalized,psd_db"]
    lines += [f"{fnum(f)},{fnum(p)}" for f, p in zip(freq, psd_db)]
    _write_lines(path, lines)


def write_report_csv(path: str, report: ReductionReport, header: str) -> None:
    lines = [header, "symbol,papr_before_db,papr_after_db,evm,peaks"]
    lines += [f"{k},{fnum(b)},{fnum(a)},{fnum(e)},{p}"
              for k, b, a, e, p in report.csv_rows()]
    _write_lines(path, lines)


def write_training_log_csv(path: str, history: np.ndarray, genes: np.ndarray,
                           header: str) -> None:
    lines = [header, "generation,best_fitness_db"]
    lines += [f"{g},{fnum(v)}" for g, v in enumerate(history)]
    lines.append("# best_genes=" + ",".join(fnum(g) for g in genes))
    _write_lines(path, lines)


def write_bound_records_csv(path: str, records: list[tuple], header: str) -> None:
    lines = [header, "variant,symbol,objective,iterations,gap"]
    lines += [f"{v},{s},{fnum(o)},{it},{fnum(g)}" for v, s, o, it, g in records]
    _write_lines(path, lines)


def write_genes_cfg(path: str, genes: np.ndarray, projection: str,
                    header: str) -> None:
    """Persist trained genes in the config format (a [pipeline] section)."""
    genes = np.asarray(genes, dtype=float)
    lines = [header, "[pipeline]",
             f"coef = {fnum(genes[0])}",
             f"tau_norm = {', '.join(fnum(t) for t in genes[1:])}",
             f"projection = {projection}"]
    _write_lines(path, lines)


def write_kernel_csv(path: str, kernel: SincKernel, header: str) -> None:
    """Debug dump of the cancellation kernel taps (complex as re/im)."""
    lines = [header, "index,value_re,value_im"]
    lines += [f"{d},{fnum(v.real)},{fnum(v.imag)}"
              for d, v in enumerate(kernel.values)]
    _write_lines(path, lines)


def ensure_output_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
