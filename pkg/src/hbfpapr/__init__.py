"""PAPR reduction laboratory for OFDM hybrid-beamforming transmitters."""

from .bounds import (ALL_VARIANTS, VARIANT_LIMITED, VARIANT_UNLIMITED_BAND,
                     VARIANT_UNLIMITED_SPACE, BoundProblem, BoundSolution,
                     bound_suite, make_bound_problem, reference_oracle,
                     solve_bound)
from .errors import (ConfigError, DomainMismatchError, OracleDimensionError,
                     SampleDeficitError, ShapeError, UndefinedMetricError)
from .experiment import BoundOptions, ExperimentSpec, load_spec, spec_to_text
from .hbf import (PipelineParams, Precoder, ReductionReport, build_precoder,
                  digital_twin, ls1_project, ls2_project, reduce_papr_hbf,
                  twin_array, twin_array_direct)
from .signal import (DOMAIN_ANTENNA, DOMAIN_DAC, CcdfCurve, FreqGrid,
                     SimConfig, TimeSignal, ccdf, centered_bins, evm_fraction,
                     generate_dac_streams, make_rng, ofdm_symbol, papr_at,
                     papr_db, papr_per_stream, qam16_modulate, spectrum)
from .str_engine import (AmplitudeGrid, PeakSet, SincKernel, ThresholdSchedule,
                         blockwise_peaks, build_sinc, dense_ls_project,
                         expand_peaks, iterate_str, sparse_reduce,
                         threshold_excess, windowed_kernel)
from .trainer import (GaConfig, TrainResult, ga_train, grid_scan, make_fitness,
                      minimize_ga)

__version__ = "0.1.0"
