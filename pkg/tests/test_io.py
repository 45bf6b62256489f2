import math

import numpy as np
import pytest

from gfridge.errors import InputError
from gfridge.io import (
    CURVE_COLUMNS,
    dumps,
    format_value,
    read_config,
    read_curve_csv,
    read_design_csv,
    write_curve_csv,
)


def test_format_value_round_trips():
    for v in [0.1, 1 / 3, 1e-300, 2.0**-10, 123456789.123]:
        assert float(format_value(v)) == v
    assert format_value(math.inf) == "inf" and format_value(math.nan) == "nan"
    assert format_value(True) == "true" and format_value(np.int64(3)) == "3"


def test_curve_csv_round_trip(tmp_path):
    rows = [
        {"estimator": "flow", "flavor": "estimation", "calibration": "inverse", "tuning": 0.1,
         "bias_sq": 1 / 3, "variance": 2 / 7, "total": 1 / 3 + 2 / 7, "l2_norm": math.nan},
        {"estimator": "ridge", "flavor": "estimation", "calibration": "inverse", "tuning": math.inf,
         "bias_sq": 1.0, "variance": 0.0, "total": 1.0, "l2_norm": 0.0},
    ]
    path = tmp_path / "c.csv"
    write_curve_csv(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(CURVE_COLUMNS)
    back = read_curve_csv(path)
    for a, b in zip(rows, back):
        for k in CURVE_COLUMNS:
            if isinstance(a[k], float) and math.isnan(a[k]):
                assert math.isnan(b[k])
            else:
                assert a[k] == b[k]
    write_curve_csv(path, [dict(rows[0], limit=True)])
    assert path.read_text().splitlines()[0].endswith(",limit")
    assert read_curve_csv(path)[0]["limit"] is True


def test_curve_csv_errors(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(InputError):
        read_curve_csv(p)
    p.write_text(",".join(CURVE_COLUMNS) + "\n")
    with pytest.raises(InputError, match="no data rows"):
        read_curve_csv(p)
    p.write_text("estimator,flavor\nflow,estimation\n")
    with pytest.raises(InputError, match="missing"):
        read_curve_csv(p)


def test_design_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n")
    X, y = read_design_csv(p)
    np.testing.assert_array_equal(X, [[1, 2, 3], [4, 5, 6]])
    assert y is None
    X, y = read_design_csv(p, response_column=-1)
    np.testing.assert_array_equal(y, [3, 6])
    p.write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(read_design_csv(p)[0], [[1, 2], [3, 4]])
    for bad in ("", "a,b\n", "1,2\n3\n", "1,2\nx,3\n", "1,nan\n"):
        p.write_text(bad)
        with pytest.raises(InputError):
            read_design_csv(p)


def test_config_and_json(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nn = 20\ngrid-n=5\nflavor = in-sample\n")
    assert read_config(p) == {"n": "20", "grid_n": "5", "flavor": "in-sample"}
    p.write_text("no equals sign here\n")
    with pytest.raises(InputError):
        read_config(p)
    out = dumps({"a": math.inf, "b": [np.float64(1.5), math.nan], "c": np.arange(2)})
    assert '"inf"' in out and '"nan"' in out and "NaN" not in out
