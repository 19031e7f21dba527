"""Command-line entry point for rotatable-IRS experiments.

Subcommands:
    single     optimize one scheme for the area-center user
    area       optimize one scheme for the worst point of the target area
    sweep      run schemes across values of one parameter
    field      export the per-point delta/SNR field of a scheme's rotation
    landscape  export delta1, delta2 and fitness over the rotation lattice
    benchmark  run every scheme in point or area mode

Exit codes: 0 on success, 1 on validation/config/usage errors, 2 on I/O errors.
"""
import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from harness import (
    SCHEME_KINDS, SWEEP_VARIABLES, OutputError, SchemeSpec, SweepSpec, UsageError, default_output_dir,
    emit_field, emit_landscape, reports_frame, run_benchmark, run_scheme, run_sweep, write_json, write_table
)
from models import DomainError, ValidationError
from objective import area_grid
from scenario_config import ConfigError, ConfigReadError, LoadedConfig, RunSettings, load_config, scenario_from_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Scenario JSON file (defaults to the reference setup)')
    common.add_argument('--scheme', default='proposed', choices=SCHEME_KINDS, help='Scheme to run')
    common.add_argument('--seed', type=int, help='PSO seed')
    common.add_argument('--out', help='Output directory (overrides IRS_ROTATION_OUT_DIR)')
    common.add_argument('--grid-step', type=float, help='Area grid step in meters')
    common.add_argument('--es-step', type=float, help='Exhaustive-search step in degrees')
    common.add_argument('--workers', type=int, help='Parallel workers for sweeps and swarm scoring')
    common.add_argument('--verbose', action='store_true', help='Log per-iteration progress')

    parser = argparse.ArgumentParser(description='Rotatable IRS rotation optimizer and link simulator')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('single', parents=[common], help='Single-target optimization')
    sub.add_parser('area', parents=[common], help='Worst-case area optimization')

    sweep = sub.add_parser('sweep', parents=[common], help='Parameter sweep')
    sweep.add_argument('--variable', required=True, choices=SWEEP_VARIABLES)
    sweep.add_argument('--values', required=True, help='Comma-separated increasing values')
    sweep.add_argument('--schemes', help='Comma-separated schemes (default: --scheme)')
    sweep.add_argument('--mode', default='point', choices=('point', 'area'))

    sub.add_parser('field', parents=[common], help='Export the delta/SNR field over the area grid')

    landscape = sub.add_parser('landscape', parents=[common], help='Export delta terms over the rotation lattice')
    landscape.add_argument('--step', type=float, help='Lattice step in degrees (default: the exhaustive-search step)')

    bench = sub.add_parser('benchmark', parents=[common], help='Run every scheme')
    bench.add_argument('--mode', default='point', choices=('point', 'area'))
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')


def _load(args: argparse.Namespace) -> LoadedConfig:
    if args.config:
        loaded = load_config(args.config)
    else:
        scenario, defaulted = scenario_from_config({})
        loaded = LoadedConfig(scenario, RunSettings(), defaulted)

    settings = loaded.settings
    pso = settings.pso
    if args.seed is not None:
        pso = replace(pso, seed=args.seed)
    if args.workers is not None:
        pso = replace(pso, workers=args.workers)
        settings = replace(settings, workers=args.workers)
    settings = replace(settings, pso=pso)
    if args.grid_step is not None:
        settings = replace(settings, grid_step=args.grid_step)
    if args.es_step is not None:
        settings = replace(settings, es_step=math.radians(args.es_step))
    return LoadedConfig(loaded.scenario, settings, loaded.defaulted)


def _parse_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise UsageError(f"Invalid --values list: {text!r}")


def run(args: argparse.Namespace) -> None:
    loaded = _load(args)
    scn, settings = loaded.scenario, loaded.settings
    out_dir = Path(args.out) if args.out else default_output_dir()

    if args.command in ('single', 'area'):
        mode = 'point' if args.command == 'single' else 'area'
        report = run_scheme(scn, SchemeSpec.from_settings(args.scheme, settings), mode, settings)
        write_table(reports_frame([report]), out_dir / f'{args.command}_{args.scheme}.csv')
        write_json(report.to_dict(), out_dir / f'{args.command}_{args.scheme}.json')
        theta_deg, phi_deg = report.rotation.to_degrees()
        print(f"{report.scheme}: theta={theta_deg:.3f} deg, phi={phi_deg:.3f} deg, SNR={report.snr_db:.4f} dB")

    elif args.command == 'sweep':
        names = args.schemes.split(',') if args.schemes else [args.scheme]
        schemes = [SchemeSpec.from_settings(name.strip(), settings) for name in names]
        sweep = SweepSpec(args.variable, tuple(_parse_values(args.values)))
        frame = run_sweep(scn, schemes, sweep, args.mode, settings)
        csv_path = write_table(frame, out_dir / f'sweep_{args.variable}.csv')
        write_json({'variable': args.variable, 'mode': args.mode, 'values': list(sweep.values),
                    'schemes': names, 'note': frame.attrs.get('note')},
                   csv_path.with_suffix('.json'))
        print(f"Wrote {len(frame)} sweep rows to {csv_path}")

    elif args.command == 'field':
        report = run_scheme(scn, SchemeSpec.from_settings(args.scheme, settings),
                            'point' if args.scheme == 'closed_form' else 'area', settings)
        csv_path, _ = emit_field(scn.with_changes(p_c=report.irs_center), report.rotation,
                                 area_grid(scn, settings.grid_step), out_dir / f'field_{args.scheme}.csv')
        print(f"Wrote field for {args.scheme} to {csv_path}")

    elif args.command == 'landscape':
        step = math.radians(args.step) if args.step is not None else None
        csv_path, _ = emit_landscape(scn, settings, out_dir / 'landscape.csv', step)
        print(f"Wrote rotation landscape to {csv_path}")

    elif args.command == 'benchmark':
        reports = run_benchmark(scn, args.mode, settings)
        csv_path = write_table(reports_frame(reports), out_dir / f'benchmark_{args.mode}.csv')
        write_json({'mode': args.mode, 'reports': [report.to_dict() for report in reports]},
                   csv_path.with_suffix('.json'))
        for report in reports:
            print(f"{report.scheme:>15}: SNR={report.snr_db:.4f} dB")


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map errors to exit codes."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        run(args)
        return 0
    except (ConfigReadError, OutputError, OSError) as e:
        logger.error(f"I/O error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (ValidationError, DomainError, ConfigError, UsageError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
