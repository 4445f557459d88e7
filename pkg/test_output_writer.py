#!/usr/bin/env python3
"""
Tests for CSV / JSON serialisation of results.
"""

import io
import json
import math
import os
import sys

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from beam_optics import ModeIndex
from coupling import CouplingMethod, CouplingResult
from output_writer import (
    DETUNING_COLUMNS, SCHEMA_LINE, SWEEP_COLUMNS, format_number, json_number, write_coupling_json,
    write_detuning_csv, write_detuning_json, write_outcome, write_sweep_csv, write_sweep_json,
)
from spectroscopy import MHZ, CouplingFit
from sweeps import DetuningPoint, DetuningSweepResult, ModeFit, SweepRecord

TEM00 = ModeIndex(0, 0)
TEM10 = ModeIndex(1, 0)

RECORDS = [
    SweepRecord(-1e-5, TEM00, (11.6 * MHZ) ** 2, 0.8123456789123, 2.5e-6),
    SweepRecord(-1e-5, TEM10, math.nan, None, math.nan, error="AccuracyError: no luck"),
]


def test_number_formatting():
    assert format_number(1.23456789012345) == "1.23456789"
    assert format_number(1.23456789012345, 4) == "1.235"
    assert format_number(None) == ""
    assert format_number(math.nan) == "nan"
    assert json_number(math.nan) is None
    assert json_number(math.inf) is None
    assert json_number(2.0 / 3.0, 3) == 0.667


def test_sweep_csv_schema():
    print("\n" + "=" * 60)
    print("TEST: Sweep CSV")
    print("=" * 60)

    out = io.StringIO()
    write_sweep_csv(RECORDS, out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "# cavicrys-schema=1" == SCHEMA_LINE
    assert lines[1].startswith("sweep_value,mode,raw_G_squared,normalized_value,est_rel_error")
    assert lines[1].split(",") == SWEEP_COLUMNS
    first = lines[2].split(",")
    assert first[1] == "00"
    assert float(first[6]) == pytest.approx(11.6, rel=1e-8)
    assert float(first[5]) == pytest.approx(11.6 * MHZ, rel=1e-8)
    assert first[3] == "0.812345679"
    second = lines[3].split(",")
    assert second[1] == "10"
    assert second[3] == ""
    assert second[-1] == "AccuracyError: no luck"
    print("✓ Header, mode labels and both rate units present")


def test_sweep_json_fields():
    out = io.StringIO()
    write_sweep_json(RECORDS, 'displacement', out)
    payload = json.loads(out.getvalue())
    assert payload['schema'] == 1
    assert payload['kind'] == 'displacement'
    first, second = payload['records']
    assert first['G_mhz_over_2pi'] == pytest.approx(11.6)
    assert first['normalized_value'] == 0.812345679
    assert second['raw_G_squared'] is None
    assert second['error'] == "AccuracyError: no luck"


def test_output_is_byte_stable():
    a, b = io.StringIO(), io.StringIO()
    write_sweep_json(RECORDS, 'radius', a)
    write_sweep_json(RECORDS, 'radius', b)
    assert a.getvalue() == b.getvalue()


def test_coupling_json():
    result = CouplingResult((2 * math.pi * 5e6) ** 2, 2 * math.pi * 5e6, 3e-5,
                            CouplingMethod.OSCILLATORY, 1234)
    out = io.StringIO()
    write_coupling_json(result, TEM10, out)
    text = out.getvalue()
    assert text.count("\n") == 1
    payload = json.loads(text)
    assert payload['mode'] == "10"
    assert payload['method'] == "oscillatory"
    assert payload['g_rate_mhz_over_2pi'] == pytest.approx(5.0)
    assert payload['g_rate_rad_per_s'] == pytest.approx(2 * math.pi * 5e6)
    assert payload['g_squared_rad2_per_s2'] == pytest.approx((2 * math.pi * 5e6) ** 2)
    assert payload['g_squared'] == payload['g_squared_rad2_per_s2']
    assert payload['g_rate'] == payload['g_rate_rad_per_s']
    assert payload['est_rel_error'] == 3e-5
    assert payload['evaluations'] == 1234


def _detuning_result():
    points = [DetuningPoint(TEM00, -30 * MHZ, 1.5 * MHZ, 0.05 * MHZ),
              DetuningPoint(TEM00, 0.0, math.nan, math.nan, error="FitDegenerateError: flat")]
    fit = CouplingFit(G=11.6 * MHZ, gamma_fit=11.3 * MHZ, G_err=0.1 * MHZ, gamma_err=0.3 * MHZ,
                      residual_norm=1.0, optical_depth=5.59)
    fits = [ModeFit(TEM00, 11.6 * MHZ, fit),
            ModeFit(TEM10, 11.5 * MHZ, None, error="too few", error_type="IllConditionedError")]
    return DetuningSweepResult(points, fits)


def test_detuning_csv():
    out = io.StringIO()
    write_detuning_csv(_detuning_result(), out)
    lines = out.getvalue().splitlines()
    assert lines[0] == SCHEMA_LINE
    assert lines[1].split(",") == DETUNING_COLUMNS
    rows = [line.split(",") for line in lines[2:]]
    assert [r[0] for r in rows] == ['broadening', 'broadening', 'model_G', 'fit_G', 'fit_gamma',
                                    'model_G', 'fit_G']
    assert float(rows[0][3]) == pytest.approx(-30.0)
    assert float(rows[0][5]) == pytest.approx(1.5)
    assert float(rows[3][5]) == pytest.approx(11.6)
    assert float(rows[3][7]) == pytest.approx(0.1)
    assert rows[6][-1] == "IllConditionedError: too few"


def test_detuning_json():
    out = io.StringIO()
    write_detuning_json(_detuning_result(), out)
    payload = json.loads(out.getvalue())
    assert payload['kind'] == 'detuning'
    assert payload['points'][1]['broadening_rad_per_s'] is None
    good, bad = payload['fits']
    assert good['G_mhz_over_2pi'] == pytest.approx(11.6)
    assert good['gamma_err_mhz_over_2pi'] == pytest.approx(0.3)
    assert good['optical_depth'] == pytest.approx(5.59)
    assert bad['G_rad_per_s'] is None
    assert bad['error_type'] == 'IllConditionedError'


def test_write_outcome_dispatch():
    csv_out, json_out = io.StringIO(), io.StringIO()
    write_outcome(_detuning_result(), 'detuning', 'csv', csv_out)
    write_outcome(RECORDS, 'displacement', 'json', json_out)
    assert csv_out.getvalue().splitlines()[1].startswith("record,")
    assert json.loads(json_out.getvalue())['kind'] == 'displacement'


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
