"""
CSV and JSON serialisation of coupling results and sweep outcomes.

Every rate is written twice, in rad/s and as the X of (2 pi) X MHz, with the
unit spelled out in the field name. Numbers are printed with a fixed number
of significant digits and nothing time-dependent is written, so the same
inputs always produce byte-identical output.
"""
import contextlib
import csv
import json
import math
import sys
from typing import IO, Any, Dict, Iterator, List, Optional

from beam_optics import ModeIndex
from config import DEFAULT_PRECISION
from coupling import CouplingResult
from error_handler import UsageError
from spectroscopy import to_mhz
from sweeps import DetuningSweepResult, SweepOutcome, SweepRecord
from version import SCHEMA_VERSION

SCHEMA_LINE = f"# cavicrys-schema={SCHEMA_VERSION}"

SWEEP_COLUMNS = [
    'sweep_value', 'mode', 'raw_G_squared', 'normalized_value', 'est_rel_error',
    'G_rad_per_s', 'G_mhz_over_2pi', 'error',
]

DETUNING_COLUMNS = [
    'record', 'mode',
    'delta_rad_per_s', 'delta_mhz_over_2pi',
    'value_rad_per_s', 'value_mhz_over_2pi',
    'uncertainty_rad_per_s', 'uncertainty_mhz_over_2pi',
    'error',
]


def format_number(value: Optional[float], precision: int = DEFAULT_PRECISION) -> str:
    """Fixed significant-digit text; empty for a missing value."""
    if value is None:
        return ''
    value = float(value)
    if math.isnan(value):
        return 'nan'
    return f"{value:.{precision}g}"


def json_number(value: Optional[float], precision: int = DEFAULT_PRECISION) -> Optional[float]:
    """Rounded to ``precision`` significant digits; NaN and infinities become null."""
    if value is None or not math.isfinite(value):
        return None
    return float(f"{float(value):.{precision}g}")


def _dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, allow_nan=False)


def _rate_fields(prefix: str, rate: Optional[float], precision: int) -> Dict[str, Optional[float]]:
    mhz = None if rate is None else to_mhz(rate)
    return {
        f"{prefix}_rad_per_s": json_number(rate, precision),
        f"{prefix}_mhz_over_2pi": json_number(mhz, precision),
    }


def coupling_to_dict(result: CouplingResult, mode: ModeIndex,
                     precision: int = DEFAULT_PRECISION) -> Dict[str, Any]:
    payload = {
        'schema': SCHEMA_VERSION,
        'mode': mode.label,
        'method': result.method_used.value,
        'g_squared': json_number(result.g_squared, precision),
        'g_rate': json_number(result.g_rate, precision),
        'g_squared_rad2_per_s2': json_number(result.g_squared, precision),
        'est_rel_error': json_number(result.est_rel_error, precision),
        'evaluations': int(result.evaluations),
    }
    payload.update(_rate_fields('g_rate', result.g_rate, precision))
    return payload


def write_coupling_json(result: CouplingResult, mode: ModeIndex, stream: IO[str],
                        precision: int = DEFAULT_PRECISION):
    """One JSON object on one line."""
    stream.write(_dumps(coupling_to_dict(result, mode, precision)) + "\n")


def _record_row(record: SweepRecord, precision: int) -> List[str]:
    rate = record.G_rate
    return [
        format_number(record.sweep_value, precision),
        record.mode.label,
        format_number(record.raw_G_squared, precision),
        format_number(record.normalized_value, precision),
        format_number(record.est_rel_error, precision),
        format_number(rate, precision),
        format_number(to_mhz(rate), precision),
        record.error or '',
    ]


def write_sweep_csv(records: List[SweepRecord], stream: IO[str],
                    precision: int = DEFAULT_PRECISION):
    stream.write(SCHEMA_LINE + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for record in records:
        writer.writerow(_record_row(record, precision))


def record_to_dict(record: SweepRecord, precision: int = DEFAULT_PRECISION) -> Dict[str, Any]:
    payload = {
        'sweep_value': json_number(record.sweep_value, precision),
        'mode': record.mode.label,
        'raw_G_squared': json_number(record.raw_G_squared, precision),
        'normalized_value': json_number(record.normalized_value, precision),
        'est_rel_error': json_number(record.est_rel_error, precision),
        'error': record.error,
    }
    payload.update(_rate_fields('G', record.G_rate, precision))
    return payload


def write_sweep_json(records: List[SweepRecord], kind: str, stream: IO[str],
                     precision: int = DEFAULT_PRECISION):
    payload = {
        'schema': SCHEMA_VERSION,
        'kind': kind,
        'records': [record_to_dict(r, precision) for r in records],
    }
    stream.write(_dumps(payload) + "\n")


def _detuning_row(record: str, mode: ModeIndex, delta: Optional[float], value: Optional[float],
                  uncertainty: Optional[float], error: Optional[str], precision: int) -> List[str]:
    row = [record, mode.label]
    for rate in (delta, value, uncertainty):
        row.append(format_number(rate, precision))
        row.append(format_number(None if rate is None else to_mhz(rate), precision))
    row.append(error or '')
    return row


def write_detuning_csv(result: DetuningSweepResult, stream: IO[str],
                       precision: int = DEFAULT_PRECISION):
    """
    Long format: one ``broadening`` row per (mode, detuning), then per mode the
    ``model_G`` row and the ``fit_G`` / ``fit_gamma`` rows (empty delta).
    """
    stream.write(SCHEMA_LINE + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(DETUNING_COLUMNS)
    for p in result.points:
        writer.writerow(_detuning_row('broadening', p.mode, p.delta, p.broadening,
                                      p.uncertainty, p.error, precision))
    for mf in result.fits:
        writer.writerow(_detuning_row('model_G', mf.mode, None, mf.model_G, None, None, precision))
        if mf.fit is None:
            writer.writerow(_detuning_row('fit_G', mf.mode, None, None, None,
                                          f"{mf.error_type}: {mf.error}", precision))
            continue
        warning = '; '.join(mf.fit.warnings) or None
        writer.writerow(_detuning_row('fit_G', mf.mode, None, mf.fit.G, mf.fit.G_err,
                                      warning, precision))
        writer.writerow(_detuning_row('fit_gamma', mf.mode, None, mf.fit.gamma_fit,
                                      mf.fit.gamma_err, warning, precision))


def detuning_to_dict(result: DetuningSweepResult,
                     precision: int = DEFAULT_PRECISION) -> Dict[str, Any]:
    points = []
    for p in result.points:
        entry = {'mode': p.mode.label, 'error': p.error}
        entry.update(_rate_fields('delta', p.delta, precision))
        entry.update(_rate_fields('broadening', p.broadening, precision))
        entry.update(_rate_fields('uncertainty', p.uncertainty, precision))
        points.append(entry)

    fits = []
    for mf in result.fits:
        entry: Dict[str, Any] = {'mode': mf.mode.label, 'error': mf.error,
                                 'error_type': mf.error_type}
        entry.update(_rate_fields('model_G', mf.model_G, precision))
        fit = mf.fit
        entry.update(_rate_fields('G', fit.G if fit else None, precision))
        entry.update(_rate_fields('G_err', fit.G_err if fit else None, precision))
        entry.update(_rate_fields('gamma', fit.gamma_fit if fit else None, precision))
        entry.update(_rate_fields('gamma_err', fit.gamma_err if fit else None, precision))
        entry['optical_depth'] = json_number(fit.optical_depth, precision) if fit else None
        entry['residual_norm'] = json_number(fit.residual_norm, precision) if fit else None
        entry['warnings'] = list(fit.warnings) if fit else []
        fits.append(entry)

    return {'schema': SCHEMA_VERSION, 'kind': 'detuning', 'points': points, 'fits': fits}


def write_detuning_json(result: DetuningSweepResult, stream: IO[str],
                        precision: int = DEFAULT_PRECISION):
    stream.write(_dumps(detuning_to_dict(result, precision)) + "\n")


def write_outcome(outcome: SweepOutcome, kind: str, fmt: str, stream: IO[str],
                  precision: int = DEFAULT_PRECISION):
    """Write any sweep outcome in csv or json."""
    if isinstance(outcome, DetuningSweepResult):
        if fmt == 'json':
            write_detuning_json(outcome, stream, precision)
        else:
            write_detuning_csv(outcome, stream, precision)
    elif fmt == 'json':
        write_sweep_json(outcome, kind, stream, precision)
    else:
        write_sweep_csv(outcome, stream, precision)


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[IO[str]]:
    """The file at ``path``, or stdout when path is None or '-'."""
    if path in (None, '-'):
        yield sys.stdout
        sys.stdout.flush()
        return
    try:
        f = open(path, 'w', encoding='utf-8', newline='')
    except OSError as e:
        raise UsageError(f"cannot write output file {path}: {e.strerror}") from None
    with f:
        yield f
