"""
Command-line interface for dd-sounder.

Verbs:
1. capability - sounding capability of a frame geometry
2. generate   - synthesize a sounding stream (optionally through a channel) as DDIQ
3. sound      - synchronize a DDIQ capture, extract CSFs and paths
4. estimate   - extract paths from a DDCF file
5. analyze    - channel statistics from an estimates CSV
6. experiment - run an experiment spec (JSON or YAML)
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .__version__ import __version__
from .analysis import dpsd, frame_statistics, pdp, statistics_table
from .channel import PathSet, emulate
from .config import (
    DEFAULT_OUTPUT_DIR,
    LOG_LEVEL_ENV,
    OUTPUT_DIR_ENV,
    ExperimentSpec,
    load_experiment_spec,
)
from .core import FrameConfig, capability_metrics, make_frame_config
from .estimation import EstimatorConfig, estimate_paths
from .exceptions import AcceptanceError, ConfigurationError, SounderError, jsonable
from .experiments import run_experiment
from .io import (
    estimates_to_csv,
    read_csf,
    read_estimates_by_frame,
    table_to_csv,
    write_iq,
)
from .waveform import isfft, papr, repeat_frame, sfft, synthesize_frame

logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per verb."""
    parser = argparse.ArgumentParser(
        prog='dd-sounder',
        description='Delay-Doppler channel sounder - OTFS sounding, CSF estimation and channel analytics',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Sounding capability of a (2048, 256) frame at 100 MHz
  dd-sounder capability --M 2048 --N 256 --bandwidth-hz 100e6 --l-tau 512

  # Two frames through a 3-path channel at 20 dB SNR
  dd-sounder generate --M 512 --N 64 --bandwidth-hz 20e6 --frames 2 \\
    --channel paths.json --snr-db 20 --output-dir run1

  # Synchronize the capture, extract CSF and paths
  dd-sounder sound run1/rx.ddiq --M 512 --N 64 --bandwidth-hz 20e6 --output-dir run1

  # Re-estimate with a finer search, then compute statistics
  dd-sounder estimate run1/csf.ddcf --M 512 --N 64 --bandwidth-hz 20e6 --doppler-step 0.01
  dd-sounder analyze run1/estimates.csv --output-dir run1

  # Run an experiment spec with acceptance checks
  dd-sounder experiment specs/pure_doppler.yaml --check

Experiment kinds: papr_sweep, sync_gain_sweep, dynamic_range_cfo, nmse_sweep,
verify_rayleigh, verify_pure_doppler, sound, los_nlos_demo
        """,
    )
    parser.add_argument('--version', action='version', version=f'dd-sounder {__version__}')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--output-dir', help=f'Result directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})')
    common.add_argument('--seed', type=int, help='Seed for noise and random channels')
    common.add_argument('--check', action='store_true', help='Run built-in acceptance assertions')
    common.add_argument(
        '--log-level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help=f'Log level (default: ${LOG_LEVEL_ENV} or WARNING)',
    )

    frame = argparse.ArgumentParser(add_help=False)
    frame.add_argument('--M', type=int, required=True, help='Delay taps (power of two)')
    frame.add_argument('--N', type=int, required=True, help='Doppler taps (power of two)')
    frame.add_argument('--bandwidth-hz', type=float, required=True, help='Bandwidth B in Hz')
    frame.add_argument('--l-tau', type=int, help='Measurable delay span in taps (default: M/4)')
    frame.add_argument('--a-pn', type=float, default=1.0, help='PN amplitude (default: 1.0)')

    estimator = argparse.ArgumentParser(add_help=False)
    estimator.add_argument('--delay-step', type=float, default=0.1, help='Fractional delay step (default: 0.1)')
    estimator.add_argument('--doppler-step', type=float, default=0.01, help='Fractional Doppler step (default: 0.01)')
    estimator.add_argument('--power-threshold', type=float, help='Absolute extraction threshold (default: dynamic)')
    estimator.add_argument('--max-paths', type=int, default=60, help='Maximum paths per frame (default: 60)')
    estimator.add_argument(
        '--search', choices=['exhaustive', 'coarse_to_fine'], default='exhaustive',
        help='Fractional search mode (default: exhaustive)',
    )

    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('capability', parents=[common, frame], help='Sounding capability metrics')

    gen = sub.add_parser('generate', parents=[common, frame], help='Synthesize a sounding stream')
    gen.add_argument('--pattern', choices=['designed', 'single_pilot', 'full_pn'], default='designed')
    gen.add_argument('--frames', type=int, default=1, help='Frames to transmit (default: 1)')
    gen.add_argument('--channel', help='PathSet JSON file; writes rx.ddiq through this channel')
    gen.add_argument('--snr-db', type=float, default=math.inf, help='Receiver SNR in dB (default: noise-free)')
    gen.add_argument('--cfo-hz', type=float, default=0.0, help='Carrier frequency offset in Hz')

    snd = sub.add_parser('sound', parents=[common, frame, estimator], help='Process a DDIQ capture')
    snd.add_argument('iq_file', help='DDIQ capture')
    snd.add_argument('--frames', type=int, default=1, help='Frames to process (default: 1)')

    est = sub.add_parser('estimate', parents=[common, frame, estimator], help='Extract paths from a CSF')
    est.add_argument('csf_file', help='DDCF file')

    ana = sub.add_parser('analyze', parents=[common], help='Channel statistics from estimates')
    ana.add_argument('estimates_file', help='Estimates CSV')
    ana.add_argument('--threshold-db', type=float, default=20.0, help='MPC threshold (default: 20 dB)')
    ana.add_argument('--delay-bin-s', type=float, default=1e-9, help='PDP bin width (default: 1 ns)')
    ana.add_argument('--doppler-bin-hz', type=float, default=1.0, help='DPSD bin width (default: 1 Hz)')

    exp = sub.add_parser('experiment', parents=[common], help='Run an experiment spec')
    exp.add_argument('spec', help='Experiment spec (.json, .yaml, .yml)')
    exp.add_argument('--env-file', help='.env file (default: .env)')
    return parser


# ==================== Helpers ====================


def configure_logging(level: Optional[str]) -> None:
    """Configure root logging from --log-level, then $DD_SOUNDER_LOG_LEVEL."""
    try:
        from dotenv import load_dotenv
        load_dotenv(override=False)
    except ImportError:
        pass
    name = (level or os.getenv(LOG_LEVEL_ENV) or 'WARNING').upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.WARNING),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def output_dir(args: argparse.Namespace) -> Path:
    path = Path(args.output_dir or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def frame_from_args(args: argparse.Namespace) -> FrameConfig:
    return make_frame_config(args.M, args.N, args.bandwidth_hz, l_tau=args.l_tau, A_pn=args.a_pn)


def estimator_from_args(args: argparse.Namespace) -> EstimatorConfig:
    return EstimatorConfig(
        delay_step=args.delay_step,
        doppler_step=args.doppler_step,
        power_threshold=args.power_threshold,
        max_paths=args.max_paths,
        search=args.search,
    )


def require(condition: bool, check: str, observed, expected) -> None:
    """Raise AcceptanceError when a --check assertion fails."""
    if not condition:
        raise AcceptanceError(f"Acceptance check '{check}' failed", check, observed, expected)


def write_error_record(error: BaseException, directory: Path) -> Path:
    if isinstance(error, SounderError):
        record = error.to_record()
    else:
        record = {'error': type(error).__name__, 'message': str(error), 'component': None, 'details': {}}
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / 'error.json'
    path.write_text(json.dumps(jsonable(record), indent=2))
    return path


# ==================== Commands ====================


def cmd_capability(args: argparse.Namespace) -> None:
    cfg = frame_from_args(args)
    cap = capability_metrics(cfg)
    for name, value in cap.to_display().items():
        print(f"{name:<22} {value:>14.4f}")
    (output_dir(args) / 'capability.json').write_text(
        json.dumps({'frame': cfg.to_dict(), 'capability': cap.to_dict()}, indent=2)
    )
    if args.check:
        require(math.isclose(cap.max_doppler, cfg.B / (2 * cfg.M)), 'max_doppler', cap.max_doppler, cfg.B / (2 * cfg.M))
        require(math.isclose(cap.min_si, cap.frame_length), 'min_si', cap.min_si, cap.frame_length)
        require(math.isclose(cap.frame_length, cfg.N * cfg.T), 'frame_length', cap.frame_length, cfg.N * cfg.T)


def cmd_generate(args: argparse.Namespace) -> None:
    cfg = frame_from_args(args)
    root = output_dir(args)
    grid, frame = synthesize_frame(cfg, pattern=args.pattern)
    tx = repeat_frame(frame, args.frames)
    write_iq(tx, root / 'tx.ddiq')
    print(f"✅ {args.frames} frame(s), PAPR {papr(frame):.2f} dB -> {root / 'tx.ddiq'}", file=sys.stderr)

    if args.channel:
        paths = PathSet.from_json(args.channel)
        rx = emulate(tx, paths, snr_db=args.snr_db, cfo_hz=args.cfo_hz, seed=args.seed or 0)
        write_iq(rx, root / 'rx.ddiq')
        paths.to_json(root / 'paths.json')
        print(f"✅ Through {paths.P} paths -> {root / 'rx.ddiq'}", file=sys.stderr)

    if args.check:
        error = float(np.max(np.abs(sfft(isfft(grid)).data - grid.data)))
        require(error < 1e-10, 'transform_round_trip', error, '< 1e-10')


def cmd_sound(args: argparse.Namespace) -> None:
    spec = ExperimentSpec(
        kind='sound',
        frame=frame_from_args(args),
        channel={'type': 'iq_file', 'path': args.iq_file},
        estimator=estimator_from_args(args),
        seeds=[args.seed] if args.seed is not None else [],
        output_dir=str(output_dir(args)),
        params={'frames': args.frames},
    )
    result = run_experiment(spec, check=args.check)
    gain = result.summary['sync_gain_db']
    gain_text = 'n/a' if gain is None else f"{gain:.2f} dB"
    print(
        f"✅ Frame start {result.summary['frame_start']}, sync gain {gain_text}, "
        f"paths per frame {result.summary['paths_per_frame']}",
        file=sys.stderr,
    )


def cmd_estimate(args: argparse.Namespace) -> None:
    cfg = frame_from_args(args)
    csf = read_csf(args.csf_file, cfg)
    estimates = estimate_paths(csf, estimator_from_args(args))
    path = estimates_to_csv(estimates, output_dir(args) / 'estimates.csv')
    print(f"✅ {len(estimates)} paths -> {path}", file=sys.stderr)
    if args.check:
        require(len(estimates) > 0, 'paths_extracted', len(estimates), '>= 1')


def cmd_analyze(args: argparse.Namespace) -> None:
    root = output_dir(args)
    frames = read_estimates_by_frame(args.estimates_file)
    rows = [
        frame_statistics(estimates, index, threshold_db=args.threshold_db)
        for index, estimates in frames.items() if estimates
    ]
    if not rows:
        raise ConfigurationError(f"No path estimates in {args.estimates_file}", component='cli')
    stats = statistics_table(rows)
    table_to_csv(stats, root / 'statistics.csv')

    all_estimates = [e for estimates in frames.values() for e in estimates]
    table_to_csv(pdp(all_estimates, bin_width=args.delay_bin_s).to_frame(), root / 'pdp.csv')
    table_to_csv(dpsd(all_estimates, bin_width=args.doppler_bin_hz).to_frame(), root / 'dpsd.csv')
    print(stats.to_string(index=False))

    if args.check:
        finite = stats[['rms_ds_s', 'rms_dps_hz']].replace([np.inf, -np.inf], np.nan).notna().all().all()
        require(bool(finite), 'finite_spreads', stats[['rms_ds_s', 'rms_dps_hz']].values.tolist(), 'finite')


def cmd_experiment(args: argparse.Namespace) -> None:
    spec = load_experiment_spec(args.spec, env_file=args.env_file)
    if args.output_dir:
        spec.output_dir = args.output_dir
    if args.seed is not None:
        spec.seeds = [args.seed]
    result = run_experiment(spec, check=args.check)
    print(f"✅ {spec.kind}: {len(result.outputs)} outputs in {result.output_dir}", file=sys.stderr)
    for name in result.outputs:
        print(f"  • {name}", file=sys.stderr)


COMMANDS = {
    'capability': cmd_capability,
    'generate': cmd_generate,
    'sound': cmd_sound,
    'estimate': cmd_estimate,
    'analyze': cmd_analyze,
    'experiment': cmd_experiment,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        COMMANDS[args.command](args)
    except AcceptanceError as e:
        path = write_error_record(e, _error_dir(args))
        print(f"❌ {e}", file=sys.stderr)
        print(f"   observed: {e.observed}, expected: {e.expected} ({path})", file=sys.stderr)
        sys.exit(EXIT_CHECK_FAILED)
    except (SounderError, OSError) as e:
        path = write_error_record(e, _error_dir(args))
        print(f"❌ {e} ({path})", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    return 0


def _error_dir(args: argparse.Namespace) -> Path:
    if args.command == 'experiment' and not args.output_dir:
        try:
            return Path(load_experiment_spec(args.spec, env_file=args.env_file).output_dir)
        except SounderError:
            pass
    return Path(args.output_dir or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


if __name__ == '__main__':
    sys.exit(main())
