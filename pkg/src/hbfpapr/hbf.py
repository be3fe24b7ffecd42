"""Fully-connected hybrid beamforming: precoder, digital twin, LS projections
into the DAC subspace, and the end-to-end PAPR reduction pipeline.

The analog network is modeled as a unit-modulus matrix whose columns are
distinct rows of the antenna-count DFT matrix, so the twin and its adjoint
run as single FFTs along the antenna axis.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatchError, ShapeError
from .signal import (DOMAIN_ANTENNA, DOMAIN_DAC, SimConfig, TimeSignal,
                     evm_fraction, make_rng, papr_per_stream)
from .str_engine import (AmplitudeGrid, SincKernel, ThresholdSchedule,
                         build_sinc, expand_peaks, iterate_str,
                         shifted_kernel_rows, windowed_kernel)

PROJECTION_LS1 = "ls1"
PROJECTION_LS2 = "ls2"


@dataclass
class Precoder:
    """Analog phase-shifter network: n_ant x n_dac, unit-modulus entries.

    Columns are distinct n_ant-point DFT vectors, hence P^H P = n_ant * I.
    """

    matrix: np.ndarray
    column_bins: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        self.column_bins = np.asarray(self.column_bins, dtype=np.intp)
        if self.matrix.ndim != 2:
            raise ShapeError("precoder matrix must be 2-D")
        if self.matrix.shape[1] != self.column_bins.size:
            raise ShapeError("one DFT bin per precoder column required")

    @property
    def n_ant(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_dac(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class PipelineParams:
    """Reduction pipeline knobs: thresholds, projection flavor, windowing."""

    schedule: ThresholdSchedule
    projection: str = PROJECTION_LS2
    window_len: int | None = None

    def __post_init__(self):
        if self.projection not in (PROJECTION_LS1, PROJECTION_LS2):
            raise ShapeError(f"unknown projection {self.projection!r}")


def build_precoder(n_ant: int, n_dac: int, seed: int) -> Precoder:
    """Seeded choice of n_dac distinct columns of the n_ant-point DFT matrix."""
    if n_dac > n_ant:
        raise ShapeError("n_dac must not exceed n_ant")
    rng = make_rng(seed, stream=1)
    bins = rng.choice(n_ant, size=n_dac, replace=False)
    rows = np.arange(n_ant)[:, None]
    matrix = np.exp(2j * np.pi * rows * bins[None, :] / n_ant)
    return Precoder(matrix, bins)


def _embed_rows(bins: np.ndarray, z: np.ndarray, n_rows: int) -> np.ndarray:
    """Scatter DAC rows into spectrum rows; repeated bins accumulate so the
    result matches the matrix product even for degenerate precoders."""
    embedded = np.zeros((n_rows, z.shape[1]), dtype=np.complex128)
    if np.unique(bins).size == bins.size:
        embedded[bins] = z
    else:
        np.add.at(embedded, bins, z)
    return embedded


def twin_array(precoder: Precoder, z: np.ndarray) -> np.ndarray:
    """Antenna-domain copy of one symbol: embeds the DAC rows into the
    selected bins of an n_ant-point spectrum and applies one inverse FFT."""
    z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
    if z.shape[0] != precoder.n_dac:
        raise ShapeError(f"expected {precoder.n_dac} DAC streams, got {z.shape[0]}")
    embedded = _embed_rows(precoder.column_bins, z, precoder.n_ant)
    return precoder.n_ant * np.fft.ifft(embedded, axis=0)


def twin_array_direct(precoder: Precoder, z: np.ndarray) -> np.ndarray:
    """Plain matrix-product twin; agreement oracle for the FFT fast path."""
    z = np.atleast_2d(np.asarray(z, dtype=np.complex128))
    return precoder.matrix @ z


def digital_twin(precoder: Precoder, z: TimeSignal) -> TimeSignal:
    """Antenna signal produced by the analog network from the DAC signal."""
    if z.domain != DOMAIN_DAC:
        raise DomainMismatchError("digital_twin expects a DAC-domain signal")
    return TimeSignal(twin_array(precoder, z.data), n_fft=z.n_fft,
                      domain=DOMAIN_ANTENNA)


def ls1_project(dx: np.ndarray, precoder: Precoder, coef: float) -> np.ndarray:
    """Dense LS projection of an antenna-domain correction into the DAC
    subspace: (coef/n_ant) * P^H dx, evaluated via an antenna-axis FFT."""
    dx = np.atleast_2d(np.asarray(dx, dtype=np.complex128))
    if dx.shape[0] != precoder.n_ant:
        raise ShapeError(f"expected {precoder.n_ant} antenna rows, got {dx.shape[0]}")
    spec = np.fft.fft(dx, axis=0)
    return (coef / precoder.n_ant) * spec[precoder.column_bins]


def ls2_project(grid: AmplitudeGrid, precoder: Precoder, coef: float,
                kernel: SincKernel) -> np.ndarray:
    """Sparse-amplitude LS projection.

    Per populated time index, the nonzero peak amplitudes are mapped through
    the matching precoder rows, (coef/n_ant) * P_i^H amps; the resulting DAC
    vectors are then spread along time by shifted unit-peak kernel copies.
    """
    n = kernel.n_fft
    dz = np.zeros((precoder.n_dac, n), dtype=np.complex128)
    if len(grid) == 0:
        return dz
    uniq_idx, inverse = np.unique(grid.indices, return_inverse=True)
    per_index = np.zeros((uniq_idx.size, precoder.n_dac), dtype=np.complex128)
    contrib = np.conj(precoder.matrix[grid.streams]) * grid.amplitudes[:, None]
    np.add.at(per_index, inverse, contrib)
    per_index *= coef / precoder.n_ant
    pulses = shifted_kernel_rows(kernel.unit_peak(), uniq_idx)
    return per_index.T @ pulses


@dataclass
class ReductionReport:
    """Per-symbol and aggregate diagnostics of one pipeline run."""

    papr_before_db: np.ndarray
    papr_after_db: np.ndarray
    evm_per_symbol: np.ndarray
    peaks_per_symbol: np.ndarray
    evm: float
    evm_budget: float
    evm_over_budget: bool
    projection: str
    runtime_s: float

    def csv_rows(self) -> list[tuple]:
        rows = []
        for k in range(self.papr_before_db.shape[0]):
            rows.append((k,
                         float(self.papr_before_db[k].max()),
                         float(self.papr_after_db[k].max()),
                         float(self.evm_per_symbol[k]),
                         int(self.peaks_per_symbol[k])))
        return rows

    def to_text(self) -> str:
        lines = [
            f"projection={self.projection}",
            f"n_symbols={self.papr_before_db.shape[0]}",
            f"n_streams={self.papr_before_db.shape[1]}",
            f"papr_before_max_db={self.papr_before_db.max():.6f}",
            f"papr_after_max_db={self.papr_after_db.max():.6f}",
            f"evm={self.evm:.8f}",
            f"evm_budget={self.evm_budget:.8f}",
            f"evm_over_budget={str(self.evm_over_budget).lower()}",
            f"runtime_s={self.runtime_s:.3f}",
        ]
        return "\n".join(lines) + "\n"


def reduce_papr_hbf(z: TimeSignal, precoder: Precoder, params: PipelineParams,
                    config: SimConfig,
                    kernel: SincKernel | None = None
                    ) -> tuple[TimeSignal, ReductionReport]:
    """End-to-end PAPR reduction of a multi-symbol DAC signal.

    Per symbol: compute the digital twin, run iterative sparse tone
    reservation on every antenna, project the accumulated correction into
    the DAC subspace (sparse-amplitude route or dense-LS route), and
    subtract it from the DAC signal. "Before" PAPR is measured on the twin,
    "after" on the twin of the reduced signal; EVM is the DAC-domain noise
    ratio, which equals the antenna-domain ratio exactly because the
    precoder columns are orthogonal with equal norms.

    ``kernel`` overrides the cancellation pulse (selftest mutation hook and
    experiments); by default it is built from the config.
    """
    if z.domain != DOMAIN_DAC:
        raise DomainMismatchError("reduce_papr_hbf expects a DAC-domain signal")
    if z.n_streams != config.n_dac or precoder.n_dac != config.n_dac:
        raise ShapeError("stream count must match n_dac")
    if precoder.n_ant != config.n_ant:
        raise ShapeError("precoder size must match n_ant")
    if params.schedule.n_iter != config.n_iter:
        raise ShapeError("schedule length must equal n_iter")

    t0 = time.perf_counter()
    if kernel is None:
        kernel = build_sinc(config.n_fft, config.n_sc)
        if params.window_len is not None:
            kernel = windowed_kernel(kernel, params.window_len)

    n_sym = z.n_symbols
    reduced = np.empty_like(z.data)
    papr_before = np.empty((n_sym, config.n_ant))
    papr_after = np.empty((n_sym, config.n_ant))
    evm_sym = np.empty(n_sym)
    peaks_sym = np.empty(n_sym, dtype=int)
    coef = params.schedule.coef

    for k in range(n_sym):
        zs = z.symbol(k)
        x = twin_array(precoder, zs)
        papr_before[k] = papr_per_stream(
            TimeSignal(x, n_fft=config.n_fft, domain=DOMAIN_ANTENNA))[0]
        dx_total, grid = iterate_str(x, params.schedule, config.n_b, kernel)
        if params.projection == PROJECTION_LS1:
            dz = ls1_project(dx_total, precoder, coef)
        else:
            dz = ls2_project(grid, precoder, coef, kernel)
        zhat = zs - dz
        reduced[:, k * config.n_fft:(k + 1) * config.n_fft] = zhat
        x_after = x - twin_array(precoder, dz)
        papr_after[k] = papr_per_stream(
            TimeSignal(x_after, n_fft=config.n_fft, domain=DOMAIN_ANTENNA))[0]
        evm_sym[k] = evm_fraction(dz, zs)
        peaks_sym[k] = len(grid)

    evm = evm_fraction(reduced - z.data, z.data)
    report = ReductionReport(
        papr_before_db=papr_before,
        papr_after_db=papr_after,
        evm_per_symbol=evm_sym,
        peaks_per_symbol=peaks_sym,
        evm=evm,
        evm_budget=config.evm_budget,
        evm_over_budget=bool(evm > config.evm_budget),
        projection=params.projection,
        runtime_s=time.perf_counter() - t0,
    )
    return TimeSignal(reduced, n_fft=z.n_fft, domain=DOMAIN_DAC), report
