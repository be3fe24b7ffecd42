"""Command-line front end: simulate | train | bound | selftest.

Exit codes: 0 success, 1 selftest failure, 2 I/O error, 3 invalid spec.
All artifacts land inside the chosen output directory; nothing else on the
filesystem is touched.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .bounds import (VARIANT_LIMITED, bound_suite, make_bound_problem,
                     reference_oracle, solve_bound)
from .errors import ConfigError, ShapeError
from .experiment import (ExperimentSpec, ensure_output_dir, load_spec,
                         provenance_line, spec_to_text, write_bound_records_csv,
                         write_ccdf_csv, write_genes_cfg, write_kernel_csv,
                         write_psd_csv, write_report_csv, write_training_log_csv)
from .hbf import (PipelineParams, build_precoder, digital_twin, ls1_project,
                  reduce_papr_hbf, twin_array, twin_array_direct)
from .signal import (DOMAIN_DAC, SimConfig, TimeSignal, ccdf,
                     generate_dac_streams, make_rng, papr_per_stream, spectrum)
from .str_engine import (ThresholdSchedule, blockwise_peaks, build_sinc,
                         dense_ls_project, sparse_reduce)
from .trainer import ga_train

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_IO = 2
EXIT_SPEC = 3


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    sim = spec.sim
    pipeline = spec.pipeline
    if args.seed is not None:
        sim = replace(sim, rng_seed=args.seed)
    if args.n_ofdm is not None:
        sim = replace(sim, n_ofdm=args.n_ofdm)
    if args.iters is not None:
        taus = pipeline.schedule.tau_norm
        if args.iters > len(taus):
            raise ConfigError(
                f"--iters {args.iters} exceeds the configured schedule "
                f"length {len(taus)}")
        sim = replace(sim, n_iter=args.iters)
        pipeline = replace(pipeline, schedule=ThresholdSchedule(
            tau_norm=taus[:args.iters], coef=pipeline.schedule.coef,
            norm_mode=pipeline.schedule.norm_mode))
    if args.projection is not None:
        pipeline = replace(pipeline, projection=args.projection)
    out_dir = args.out if args.out is not None else spec.output_dir
    return ExperimentSpec(sim=sim, pipeline=pipeline, ga=spec.ga,
                          bound=spec.bound, output_dir=out_dir,
                          emit_plots=spec.emit_plots or args.plots)


def _dump_resolved(spec: ExperimentSpec, out: str) -> None:
    with open(os.path.join(out, "resolved.cfg"), "w", encoding="utf-8") as fh:
        fh.write(spec_to_text(spec))


def _maybe_plot_ccdf(out: str, curves: dict, emit: bool) -> None:
    if not emit:
        return
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib unavailable; skipping plots")
        return
    fig, ax = plt.subplots()
    for label, curve in curves.items():
        ax.semilogy(curve.papr_db, curve.exceed_prob, label=label)
    ax.set_xlabel("PAPR [dB]")
    ax.set_ylabel("CCDF")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.savefig(os.path.join(out, "ccdf.png"), dpi=140)
    plt.close(fig)


def _maybe_plot_psd(out: str, freq, curves: dict, emit: bool) -> None:
    if not emit:
        return
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots()
    for label, psd in curves.items():
        ax.plot(freq, psd, label=label)
    ax.set_xlabel("normalized frequency [cycles/sample]")
    ax.set_ylabel("PSD [dB]")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.savefig(os.path.join(out, "spectrum.png"), dpi=140)
    plt.close(fig)


def cmd_simulate(spec: ExperimentSpec) -> int:
    out = ensure_output_dir(spec.output_dir)
    header = provenance_line(spec)
    _dump_resolved(spec, out)

    z = generate_dac_streams(spec.sim)
    precoder = build_precoder(spec.sim.n_ant, spec.sim.n_dac, spec.sim.rng_seed)
    zhat, report = reduce_papr_hbf(z, precoder, spec.pipeline, spec.sim)

    before = ccdf(report.papr_before_db.ravel())
    after = ccdf(report.papr_after_db.ravel())
    write_ccdf_csv(os.path.join(out, "ccdf_before.csv"), before, header)
    write_ccdf_csv(os.path.join(out, "ccdf_after.csv"), after, header)

    delta = TimeSignal(zhat.data - z.data, n_fft=z.n_fft, domain=DOMAIN_DAC)
    x_after = digital_twin(precoder, zhat)
    freq, psd_tx = spectrum(x_after)
    _, psd_noise = spectrum(digital_twin(precoder, delta)) if \
        np.linalg.norm(delta.data) > 0 else (freq, np.full_like(psd_tx, -300.0))
    write_psd_csv(os.path.join(out, "spectrum.csv"), freq, psd_tx, header)
    write_psd_csv(os.path.join(out, "spectrum_noise.csv"), freq, psd_noise, header)
    write_report_csv(os.path.join(out, "report.csv"), report, header)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    write_kernel_csv(os.path.join(out, "kernel.csv"),
                     build_sinc(spec.sim.n_fft, spec.sim.n_sc), header)

    _maybe_plot_ccdf(out, {"before": before, "after": after}, spec.emit_plots)
    _maybe_plot_psd(out, freq, {"tx": psd_tx, "reduction_noise": psd_noise},
                    spec.emit_plots)
    print(f"simulate: {spec.sim.n_ofdm} symbols, evm={report.evm:.4f} "
          f"(budget {spec.sim.evm_budget}), papr_before_max="
          f"{report.papr_before_db.max():.2f} dB, papr_after_max="
          f"{report.papr_after_db.max():.2f} dB")
    if report.evm_over_budget:
        print("warning: EVM exceeds the configured budget")
    return EXIT_OK


def cmd_train(spec: ExperimentSpec) -> int:
    out = ensure_output_dir(spec.output_dir)
    header = provenance_line(spec)
    _dump_resolved(spec, out)
    result = ga_train(spec.ga, spec.sim.n_iter, spec.sim,
                      projection=spec.pipeline.projection)
    write_training_log_csv(os.path.join(out, "training_log.csv"),
                           result.history, result.genes, header)
    write_genes_cfg(os.path.join(out, "trained_genes.cfg"), result.genes,
                    spec.pipeline.projection, header)
    genes_str = ", ".join(f"{g:.4f}" for g in result.genes)
    print(f"train: best genes [{genes_str}], fitness {result.fitness:.3f} dB, "
          f"evm {result.evm:.4f}")
    if result.fallback_ccdf is not None:
        print(f"note: target ccdf unreachable with "
              f"{spec.ga.training_n_ofdm * spec.sim.n_ant} samples; "
              f"used {result.fallback_ccdf:.3g}")
    return EXIT_OK


def cmd_bound(spec: ExperimentSpec) -> int:
    out = ensure_output_dir(spec.output_dir)
    header = provenance_line(spec)
    _dump_resolved(spec, out)
    z = generate_dac_streams(spec.sim)
    precoder = build_precoder(spec.sim.n_ant, spec.sim.n_dac, spec.sim.rng_seed)
    x = digital_twin(precoder, z)
    before = ccdf(papr_per_stream(x).ravel())
    write_ccdf_csv(os.path.join(out, "ccdf_before.csv"), before, header)

    curves, records = bound_suite(spec.sim, z, precoder, spec.sim.evm_budget,
                                  variants=spec.bound.variants,
                                  tol=spec.bound.tol,
                                  max_iters=spec.bound.max_iters)
    for variant, curve in curves.items():
        write_ccdf_csv(os.path.join(out, f"ccdf_bound_{variant}.csv"),
                       curve, header)
    write_bound_records_csv(os.path.join(out, "bound_report.csv"),
                            records, header)
    worst_gap = max(r[4] for r in records)
    print(f"bound: {len(records)} solves over {z.n_symbols} symbols, "
          f"worst certified gap {worst_gap:.3e}")
    _maybe_plot_ccdf(out, {"before": before, **curves}, spec.emit_plots)
    return EXIT_OK


def _selftest_checks(spec: ExperimentSpec, corrupt_kernel: bool):
    """Oracle-equivalence suite at desk scale; yields (name, passed, detail)."""
    sim = SimConfig(n_fft=128, n_sc=32, n_ant=16, n_dac=4, n_b=8, n_ofdm=4,
                    n_iter=2, rng_seed=spec.sim.rng_seed)
    rng = make_rng(sim.rng_seed, stream=11)
    kernel = build_sinc(sim.n_fft, sim.n_sc)
    if corrupt_kernel:
        kernel.values[sim.n_fft // 3] += 1e-3  # mutation hook

    # sparse kernel sum vs dense FFT projection
    worst = 0.0
    for _ in range(64):
        y = np.zeros((1, sim.n_fft), dtype=complex)
        k = int(rng.integers(1, sim.n_b + 1))
        idx = rng.choice(sim.n_fft, size=k, replace=False)
        y[0, idx] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        peaks = blockwise_peaks(y, sim.n_fft)  # one-sample blocks: keep all
        delta, _ = sparse_reduce(np.zeros_like(y), peaks, kernel)
        dense = dense_ls_project(y, sim.subcarriers)
        scale = np.abs(dense).max()
        worst = max(worst, np.abs(delta * (sim.n_sc / sim.n_fft) - dense).max()
                    / scale)
    yield "sparse_vs_dense_projection", worst < 1e-9, f"rel err {worst:.2e}"

    # twin fast path vs direct matrix product
    precoder = build_precoder(sim.n_ant, sim.n_dac, sim.rng_seed)
    z = rng.standard_normal((sim.n_dac, sim.n_fft)) \
        + 1j * rng.standard_normal((sim.n_dac, sim.n_fft))
    err = np.abs(twin_array(precoder, z) - twin_array_direct(precoder, z)).max()
    yield "twin_fast_path", err < 1e-9, f"abs err {err:.2e}"

    # projector identities
    gram = precoder.matrix.conj().T @ precoder.matrix
    gram_err = np.abs(gram - sim.n_ant * np.eye(sim.n_dac)).max()
    round_trip = ls1_project(twin_array(precoder, z), precoder, coef=1.0)
    rt_err = np.abs(round_trip - z).max()
    ok = gram_err < 1e-9 * sim.n_ant and rt_err < 1e-9
    yield "projector_identities", ok, f"gram {gram_err:.2e} roundtrip {rt_err:.2e}"

    # band limitation of an actual pipeline correction
    zsig = generate_dac_streams(sim, n_ofdm=2)
    params = PipelineParams(schedule=ThresholdSchedule((1.6, 1.5), coef=0.85))
    zhat, _ = reduce_papr_hbf(zsig, precoder, params, sim, kernel=kernel)
    dz = zhat.data - zsig.data
    spec_dz = np.fft.fft(dz.reshape(sim.n_dac, -1, sim.n_fft), axis=-1)
    occupied = np.zeros(sim.n_fft, dtype=bool)
    occupied[sim.subcarriers] = True
    inband = np.abs(spec_dz[..., occupied]).max()
    outband = np.abs(spec_dz[..., ~occupied]).max()
    ratio_ok = outband < 1e-5 * inband if inband > 0 else True
    yield "band_limitation", ratio_ok, \
        f"out/in {outband / inband if inband > 0 else 0.0:.2e}"

    # bound solver vs subgradient oracle on one tiny instance
    tiny = SimConfig(n_fft=16, n_sc=8, n_ant=4, n_dac=2, n_b=4, n_ofdm=1,
                     rng_seed=sim.rng_seed)
    tz = generate_dac_streams(tiny, n_ofdm=1)
    tp = build_precoder(tiny.n_ant, tiny.n_dac, tiny.rng_seed)
    tx = twin_array(tp, tz.data)
    tk = build_sinc(tiny.n_fft, tiny.n_sc)
    budget = 0.135 * np.linalg.norm(tz.data)
    problem = make_bound_problem(tx, tp, tk, budget, VARIANT_LIMITED)
    sol = solve_bound(problem, tol=1e-3, max_iters=20000)
    oracle = reference_oracle(problem, grid_density=3)
    rel = abs(sol.objective - oracle) / max(oracle, 1e-12)
    yield "bound_vs_oracle", rel < 1e-3, f"rel diff {rel:.2e}"


def cmd_selftest(spec: ExperimentSpec, corrupt_kernel: bool = False) -> int:
    t0 = time.perf_counter()
    failures = 0
    print(f"{'check':34s} {'status':8s} detail")
    for name, passed, detail in _selftest_checks(spec, corrupt_kernel):
        status = "PASS" if passed else "FAIL"
        failures += 0 if passed else 1
        print(f"{name:34s} {status:8s} {detail}")
    print(f"selftest finished in {time.perf_counter() - t0:.1f}s, "
          f"{failures} failure(s)")
    return EXIT_OK if failures == 0 else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbfpapr",
        description="PAPR reduction laboratory for hybrid-beamforming OFDM")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "train", "bound", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="config file (defaults are the standard setup)")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim rng_seed")
        p.add_argument("--out", type=str, default=None,
                       help="override output directory")
        p.add_argument("--n-ofdm", dest="n_ofdm", type=int, default=None,
                       help="override symbol count")
        p.add_argument("--iters", type=int, default=None,
                       help="override reduction iteration count "
                            "(truncates the threshold schedule)")
        p.add_argument("--projection", choices=("ls1", "ls2"), default=None)
        p.add_argument("--plots", action="store_true",
                       help="render PNG figures next to the CSVs")
        if name == "selftest":
            p.add_argument("--corrupt-kernel", action="store_true",
                           help=argparse.SUPPRESS)  # selftest mutation hook
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _apply_overrides(load_spec(args.config), args)
    except (ConfigError, ShapeError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "simulate":
            return cmd_simulate(spec)
        if args.command == "train":
            return cmd_train(spec)
        if args.command == "bound":
            return cmd_bound(spec)
        if args.command == "selftest":
            return cmd_selftest(spec, corrupt_kernel=args.corrupt_kernel)
    except (ConfigError, ShapeError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
