"""Complex baseband containers, OFDM symbol generation, and evaluation metrics.

Conventions used throughout the package:

* Forward DFT is unscaled, inverse DFT carries the ``1/n_fft`` factor
  (``numpy.fft`` convention).
* The occupied subcarriers are the ``n_sc`` bins centered on DC,
  ``m in [-n_sc/2, n_sc/2 - 1]``, mapped into FFT order modulo ``n_fft``.
* With unit-power constellation symbols the mean time-domain sample power of
  one OFDM symbol is ``n_sc / n_fft**2`` (Parseval under the convention
  above); PAPR is scale invariant so no renormalization is applied.
* One PAPR value is measured per (stream, OFDM symbol) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SampleDeficitError, ShapeError, UndefinedMetricError

DOMAIN_DAC = "dac"
DOMAIN_ANTENNA = "antenna"

_QAM16_LEVELS = np.array([1.0, 3.0, -1.0, -3.0])  # Gray: 00,01,10,11 per axis
_QAM16_SCALE = 1.0 / np.sqrt(10.0)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based PRNG; (seed, stream) fully determines the draw sequence."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def centered_bins(n_fft: int, n_sc: int) -> np.ndarray:
    """Occupied subcarrier indices in FFT order, DC-centered."""
    if n_sc >= n_fft:
        raise ShapeError(f"n_sc={n_sc} must be smaller than n_fft={n_fft}")
    return np.arange(-(n_sc // 2), n_sc - n_sc // 2) % n_fft


@dataclass(frozen=True)
class SimConfig:
    """Simulation geometry and run parameters.

    ``n_lpf`` is stored for completeness but unused while ``n_up == 1``
    (the only supported upsampling factor).
    """

    n_fft: int = 1024
    n_sc: int = 240
    n_up: int = 1
    n_ant: int = 256
    n_dac: int = 64
    n_lpf: int = 15
    n_iter: int = 2
    n_b: int = 32
    n_ofdm: int = 120
    modulation: str = "qam16"
    evm_budget: float = 0.135
    rng_seed: int = 1

    def __post_init__(self):
        if self.n_sc >= self.n_fft:
            raise ShapeError("n_sc must be smaller than n_fft")
        if self.n_dac > self.n_ant:
            raise ShapeError("n_dac must not exceed n_ant")
        if self.n_fft % self.n_b != 0:
            raise ShapeError("n_b must divide n_fft")
        for name in ("n_fft", "n_ant"):
            v = getattr(self, name)
            if v < 2 or v & (v - 1):
                raise ShapeError(f"{name}={v} must be a power of two")
        if not 0.0 < self.evm_budget < 1.0:
            raise ShapeError("evm_budget must lie in (0, 1)")
        if self.modulation.lower() != "qam16":
            raise ShapeError(f"unsupported modulation {self.modulation!r}")
        if self.n_up != 1:
            raise ShapeError("only n_up=1 is supported")
        if self.n_iter < 1:
            raise ShapeError("n_iter must be positive")

    @property
    def subcarriers(self) -> np.ndarray:
        return centered_bins(self.n_fft, self.n_sc)


@dataclass
class TimeSignal:
    """Complex time-domain signal: ``data`` is (n_streams, k * n_fft).

    Streams are DAC chains or antennas depending on ``domain``; the sample
    axis concatenates ``k`` OFDM symbols of ``n_fft`` samples each.
    """

    data: np.ndarray
    n_fft: int
    domain: str = DOMAIN_DAC

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2:
            raise ShapeError("TimeSignal data must be 2-D (streams x samples)")
        if self.data.shape[1] % self.n_fft != 0:
            raise ShapeError("sample count must be a multiple of n_fft")
        if not np.all(np.isfinite(self.data)):
            raise ShapeError("TimeSignal data must be finite")
        if self.domain not in (DOMAIN_DAC, DOMAIN_ANTENNA):
            raise ShapeError(f"unknown domain tag {self.domain!r}")

    @property
    def n_streams(self) -> int:
        return self.data.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.data.shape[1] // self.n_fft

    def symbol(self, k: int) -> np.ndarray:
        """View of symbol ``k`` as a (n_streams, n_fft) array."""
        return self.data[:, k * self.n_fft:(k + 1) * self.n_fft]

    def by_symbol(self) -> np.ndarray:
        """Reshape to (n_symbols, n_streams, n_fft) without copying."""
        m, total = self.data.shape
        return self.data.reshape(m, total // self.n_fft, self.n_fft).transpose(1, 0, 2)


@dataclass
class FreqGrid:
    """Occupied-subcarrier amplitudes: ``data`` is (n_streams, n_sc)."""

    data: np.ndarray
    subcarrier_indices: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        self.subcarrier_indices = np.asarray(self.subcarrier_indices, dtype=np.intp)
        if self.data.ndim != 2:
            raise ShapeError("FreqGrid data must be 2-D (streams x subcarriers)")
        if self.data.shape[1] != self.subcarrier_indices.size:
            raise ShapeError("column count must match subcarrier index count")
        if np.unique(self.subcarrier_indices).size != self.subcarrier_indices.size:
            raise ShapeError("subcarrier indices must be distinct")


@dataclass
class CcdfCurve:
    """Empirical exceedance curve over distinct measured PAPR levels.

    ``exceed_prob[j]`` is P(PAPR >= papr_db[j]); levels ascend strictly,
    probabilities descend strictly and live in (0, 1].
    """

    papr_db: np.ndarray
    exceed_prob: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        self.papr_db = np.asarray(self.papr_db, dtype=float)
        self.exceed_prob = np.asarray(self.exceed_prob, dtype=float)
        if self.papr_db.shape != self.exceed_prob.shape or self.papr_db.ndim != 1:
            raise ShapeError("curve arrays must be 1-D and equally long")
        if self.papr_db.size == 0:
            raise ShapeError("curve must contain at least one level")
        if np.any(np.diff(self.papr_db) <= 0):
            raise ShapeError("papr_db must increase strictly")
        if np.any(np.diff(self.exceed_prob) >= 0):
            raise ShapeError("exceed_prob must decrease strictly")
        if self.exceed_prob[0] > 1.0 or self.exceed_prob[-1] <= 0.0:
            raise ShapeError("exceed_prob must lie in (0, 1]")
        if self.n_samples <= 0:
            self.n_samples = int(round(1.0 / self.exceed_prob[-1]))


def qam16_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped 16-QAM with unit average power.

    Bits are consumed four at a time, (b0 b1) -> I axis, (b2 b3) -> Q axis,
    levels 00->+1, 01->+3, 10->-1, 11->-3 (scaled by 1/sqrt(10)); the
    all-zeros nibble maps to (1+1j)/sqrt(10).
    """
    bits = np.asarray(bits).reshape(-1).astype(np.intp)
    if bits.size % 4 != 0:
        raise ShapeError(f"bit count {bits.size} is not a multiple of 4")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ShapeError("bits must be 0/1 valued")
    quads = bits.reshape(-1, 4)
    re = _QAM16_LEVELS[quads[:, 0] * 2 + quads[:, 1]]
    im = _QAM16_LEVELS[quads[:, 2] * 2 + quads[:, 3]]
    return _QAM16_SCALE * (re + 1j * im)


def random_qam16_grid(n_streams: int, n_sc: int, subcarriers: np.ndarray,
                      rng: np.random.Generator) -> FreqGrid:
    """Draw random data bits and map them onto a frequency grid."""
    bits = rng.integers(0, 2, size=n_streams * n_sc * 4)
    symbols = qam16_modulate(bits).reshape(n_streams, n_sc)
    return FreqGrid(symbols, subcarriers)


def ofdm_symbol(freq: FreqGrid, n_fft: int, domain: str = DOMAIN_DAC) -> TimeSignal:
    """Inverse DFT of the zero-padded grid (1/n_fft scaling)."""
    if np.any(freq.subcarrier_indices >= n_fft) or np.any(freq.subcarrier_indices < 0):
        raise ShapeError("subcarrier indices exceed the FFT size")
    full = np.zeros((freq.data.shape[0], n_fft), dtype=np.complex128)
    full[:, freq.subcarrier_indices] = freq.data
    return TimeSignal(np.fft.ifft(full, axis=-1), n_fft=n_fft, domain=domain)


def generate_dac_streams(config: SimConfig, n_ofdm: int | None = None,
                         seed: int | None = None) -> TimeSignal:
    """Seeded multi-symbol DAC signal: each stream carries independent QAM16 data."""
    n_ofdm = config.n_ofdm if n_ofdm is None else n_ofdm
    seed = config.rng_seed if seed is None else seed
    rng = make_rng(seed, stream=0)
    bins = config.subcarriers
    chunks = []
    for _ in range(n_ofdm):
        grid = random_qam16_grid(config.n_dac, config.n_sc, bins, rng)
        chunks.append(ofdm_symbol(grid, config.n_fft).data)
    return TimeSignal(np.concatenate(chunks, axis=1), n_fft=config.n_fft)


def papr_db(x: np.ndarray) -> float:
    """Peak-to-average power ratio of one symbol, in dB."""
    x = np.asarray(x).reshape(-1)
    power = np.abs(x) ** 2
    mean = power.mean()
    if mean == 0.0:
        raise UndefinedMetricError("PAPR is undefined for an all-zero symbol")
    return float(10.0 * np.log10(power.max() / mean))


def papr_per_stream(x: TimeSignal) -> np.ndarray:
    """PAPR of every (stream, symbol) pair, shape (n_symbols, n_streams)."""
    sym = x.by_symbol()
    power = np.abs(sym) ** 2
    mean = power.mean(axis=-1)
    if np.any(mean == 0.0):
        raise UndefinedMetricError("PAPR is undefined for an all-zero symbol")
    return 10.0 * np.log10(power.max(axis=-1) / mean)


def ccdf(papr_values: np.ndarray) -> CcdfCurve:
    """Empirical curve of P(PAPR >= level) over the distinct measured levels."""
    values = np.asarray(papr_values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ShapeError("need at least one PAPR sample")
    levels, counts = np.unique(values, return_counts=True)
    # count of samples >= each level = suffix sum of the histogram
    exceed = np.cumsum(counts[::-1])[::-1] / values.size
    return CcdfCurve(levels, exceed, n_samples=values.size)


def papr_at(curve: CcdfCurve, p: float) -> float:
    """Smallest measured level whose exceedance probability is <= p.

    Upper-tie convention: with samples {1..10} dB and p=0.2 the answer is
    9 dB (P(PAPR >= 9) = 0.2). Requires at least 1/p samples.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("probability must lie in (0, 1]")
    if curve.n_samples < 1.0 / p:
        raise SampleDeficitError(
            f"need >= {int(np.ceil(1.0 / p))} samples for p={p:g}, "
            f"have {curve.n_samples}")
    idx = np.searchsorted(-curve.exceed_prob, -p, side="left")
    # ties at the top level can leave no level with exceedance <= p
    # (e.g. every sample equal); the empirical quantile is then the maximum
    idx = min(idx, curve.papr_db.size - 1)
    return float(curve.papr_db[idx])


def evm_fraction(delta: TimeSignal | np.ndarray, ref: TimeSignal | np.ndarray) -> float:
    """Frobenius-norm ratio ||delta|| / ||ref||."""
    d = delta.data if isinstance(delta, TimeSignal) else np.asarray(delta)
    r = ref.data if isinstance(ref, TimeSignal) else np.asarray(ref)
    if d.shape != r.shape:
        raise ShapeError(f"shape mismatch {d.shape} vs {r.shape}")
    ref_norm = np.linalg.norm(r)
    if ref_norm == 0.0:
        raise UndefinedMetricError("EVM is undefined for a zero reference")
    return float(np.linalg.norm(d) / ref_norm)


PSD_FLOOR = 1e-30  # keeps log10 finite on structurally empty bins


def spectrum(x: TimeSignal) -> tuple[np.ndarray, np.ndarray]:
    """Mean power spectrum in dB per FFT bin, DC-centered.

    Returns (freq, psd_db): freq is the normalized bin frequency in
    [-0.5, 0.5) cycles/sample, psd_db the squared DFT magnitude averaged
    over all streams and symbols.
    """
    sym = x.by_symbol()
    mags = np.abs(np.fft.fft(sym, axis=-1)) ** 2
    psd = mags.mean(axis=(0, 1))
    psd_db = 10.0 * np.log10(np.maximum(np.fft.fftshift(psd), PSD_FLOOR))
    freq = (np.arange(x.n_fft) - x.n_fft // 2) / x.n_fft
    return freq, psd_db
