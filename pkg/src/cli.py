"""
cavicrys command-line interface.

    cavicrys coupling  [--config PATH | --preset NAME] [--mode MN] [--method M] [--seed N] [--out PATH]
    cavicrys sweep     [--config PATH | --preset NAME] [--mode MN] [--method M] [--seed N] [--out PATH] [--format F]
    cavicrys synth-fit [--config PATH | --preset NAME] [--mode MN] [--seed N] [--out PATH] [--format F]
    cavicrys selftest

Exit status: 0 on success, 1 on usage or configuration errors, 2 on
computation or fit errors. Every failure also prints a single JSON line
on stderr: {"error": <class>, "exit_status": <n>, "message": <text>}.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import List, Optional

from beam_optics import ModeIndex
from config import DEFAULT_GRIDS, RunConfig, load_config, parse_config
from coupling import CouplingMethod, compute_coupling
from env_validator import validate_env_vars
from error_handler import (
    CavicrysError, ComputationError, ConfigurationError, UsageError,
    configure_logging, log_error_with_context,
)
from output_writer import open_output, write_coupling_json, write_outcome
from presets import PRESETS, load_preset
from selftest import run_selftest
from sweeps import (
    DetuningSweepResult, SweepOutcome, calibrated_coupling_config, request_from_config, run_sweep,
)
from version import __version__

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPUTATION = 2


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog='cavicrys',
        description="Collective coupling of ion Coulomb crystals to TEM_mn cavity modes",
    )
    parser.add_argument('--version', action='version', version=f"cavicrys {__version__}")
    parser.add_argument('-q', '--quiet', action='store_true', help="Only log warnings and errors")
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND',
                                       parser_class=CliArgumentParser)
    subparsers.required = True

    def add_source(sub):
        source = sub.add_mutually_exclusive_group()
        source.add_argument('--config', metavar='PATH', help="Configuration file")
        source.add_argument('--preset', choices=sorted(PRESETS), help="Built-in configuration")
        sub.add_argument('--mode', metavar='MN', help="Mode as two digits, e.g. 10")
        sub.add_argument('--seed', type=int, metavar='N', help="Random seed")
        sub.add_argument('--out', metavar='PATH', help="Output file (default: stdout)")

    coupling = subparsers.add_parser('coupling', help="Compute G_mn for one crystal and mode")
    add_source(coupling)
    coupling.add_argument('--method', choices=[m.value for m in CouplingMethod])

    sweep = subparsers.add_parser('sweep', help="Run the configured sweep")
    add_source(sweep)
    sweep.add_argument('--method', choices=[m.value for m in CouplingMethod])
    sweep.add_argument('--format', choices=['csv', 'json'])

    synth = subparsers.add_parser('synth-fit',
                                  help="End-to-end detuning pipeline: spectra, fits, (G, gamma)")
    add_source(synth)
    synth.add_argument('--format', choices=['csv', 'json'])

    subparsers.add_parser('selftest', help="Run the built-in cross-validation suite")
    return parser


def _load_run_config(args, default_preset: Optional[str] = None) -> RunConfig:
    if args.config:
        try:
            return load_config(args.config)
        except OSError as e:
            raise UsageError(f"cannot read config file {args.config}: {e.strerror}") from None
    if args.preset:
        return load_preset(args.preset)
    if default_preset:
        return load_preset(default_preset)
    return parse_config("")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    coupling = cfg.coupling
    sweep = cfg.sweep
    output = cfg.output
    if getattr(args, 'method', None):
        coupling = replace(coupling, method=CouplingMethod.parse(args.method))
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError(f"--seed must be non-negative, got {args.seed}")
        coupling = replace(coupling, mc_seed=args.seed)
        sweep = replace(sweep, seed=args.seed)
    if args.mode:
        sweep = replace(sweep, modes=(ModeIndex.parse(args.mode),))
    if getattr(args, 'format', None):
        output = replace(output, format=args.format)
    if args.out:
        output = replace(output, path=None if args.out == '-' else args.out)
    return replace(cfg, coupling=coupling, sweep=sweep, output=output)


def _outcome_failures(outcome: SweepOutcome) -> int:
    if isinstance(outcome, DetuningSweepResult):
        return (sum(1 for p in outcome.points if p.error)
                + sum(1 for f in outcome.fits if f.error))
    return sum(1 for r in outcome if r.error)


def cmd_coupling(args) -> int:
    cfg = _apply_overrides(_load_run_config(args), args)
    mode = ModeIndex.parse(args.mode) if args.mode else cfg.target_mode
    result = compute_coupling(cfg.beam, mode, cfg.crystal, calibrated_coupling_config(cfg))
    with open_output(cfg.output.path) as stream:
        write_coupling_json(result, mode, stream, cfg.output.precision)
    return EXIT_OK


def _write_sweep(cfg: RunConfig, outcome: SweepOutcome, kind: str) -> int:
    with open_output(cfg.output.path) as stream:
        write_outcome(outcome, kind, cfg.output.format, stream, cfg.output.precision)
    failures = _outcome_failures(outcome)
    if failures:
        _report_error('PartialFailure', EXIT_COMPUTATION,
                      f"{failures} sweep point(s) or fit(s) failed; see the error column")
        return EXIT_COMPUTATION
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(_load_run_config(args), args)
    outcome = run_sweep(request_from_config(cfg))
    return _write_sweep(cfg, outcome, cfg.sweep.kind)


def cmd_synth_fit(args) -> int:
    cfg = _apply_overrides(_load_run_config(args, default_preset='fig5'), args)
    if cfg.sweep.kind != 'detuning':
        start, stop, count = DEFAULT_GRIDS['detuning']
        step = (stop - start) / (count - 1)
        grid = tuple(start + i * step for i in range(count))
        cfg = replace(cfg, sweep=replace(cfg.sweep, kind='detuning', grid=grid))
        logging.info("[CLI] Configuration has no detuning sweep; using the default detuning grid")
    outcome = run_sweep(request_from_config(cfg, end_to_end=True))
    return _write_sweep(cfg, outcome, 'detuning')


def cmd_selftest(args) -> int:
    _, failed = run_selftest(sys.stderr)
    if failed:
        _report_error('SelfTestFailure', EXIT_COMPUTATION, f"{failed} self-test check(s) failed")
        return EXIT_COMPUTATION
    return EXIT_OK


COMMANDS = {
    'coupling': cmd_coupling,
    'sweep': cmd_sweep,
    'synth-fit': cmd_synth_fit,
    'selftest': cmd_selftest,
}


def _report_error(error: str, exit_status: int, message: str):
    print(json.dumps({'error': error, 'exit_status': exit_status, 'message': message},
                     sort_keys=True), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return the exit status."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(logging.WARNING if args.quiet else logging.INFO)
        is_valid, errors = validate_env_vars()
        if not is_valid:
            raise UsageError("; ".join(errors))
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logging.error(f"[CLI] {type(e).__name__}: {e}")
        _report_error(type(e).__name__, EXIT_USAGE, str(e))
        return EXIT_USAGE
    except ComputationError as e:
        logging.error(f"[CLI] {type(e).__name__}: {e}")
        _report_error(type(e).__name__, EXIT_COMPUTATION, str(e))
        return EXIT_COMPUTATION
    except CavicrysError as e:
        _report_error(type(e).__name__, EXIT_COMPUTATION, str(e))
        return EXIT_COMPUTATION
    except Exception as e:
        log_error_with_context(e, context="Running cavicrys command",
                               additional_info={'argv': argv if argv is not None else sys.argv[1:]})
        _report_error(type(e).__name__, EXIT_COMPUTATION, str(e))
        return EXIT_COMPUTATION


if __name__ == "__main__":
    raise SystemExit(main())
