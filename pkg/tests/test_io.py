import json
import math
import os

import numpy as np

from mfspec import GridFunction, UniformGrid, legendre_conjugate
from mfspec.cli import main
from mfspec.io import (
    format_value,
    grid_function_from_csv,
    grid_function_rows,
    read_csv,
    write_csv_atomic,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")
COIN = os.path.join(CONFIG_DIR, "coin.toml")


def test_float_formatting_round_trips():
    for x in (0.1, 1 / 3, math.pi, 1e-300, -2.5e17, math.inf, -math.inf):
        assert float(format_value(x)) == x or (math.isinf(x))
        if math.isfinite(x):
            assert float(format_value(x)) == x


def test_grid_function_csv_round_trip_is_bit_exact(tmp_path):
    grid = UniformGrid(-20.0, 20.0, 0.05)
    phi = GridFunction(grid, np.logaddexp(0.0, grid.values()) - math.log(2))
    conj = legendre_conjugate(phi, UniformGrid(-0.05, 1.05, 0.005)).function
    for func, axis in ((phi, "q"), (conj, "alpha")):
        path = str(tmp_path / f"{axis}.csv")
        header, rows = grid_function_rows(func, axis)
        write_csv_atomic(path, header, rows)
        back = grid_function_from_csv(path)
        assert np.array_equal(back.grid.values(), func.grid.values())
        finite = ~func.is_inf
        assert np.array_equal(back.is_inf, func.is_inf)
        assert np.array_equal(back.values[finite], func.values[finite])


def test_csv_dialect(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv_atomic(path, ["A", "B"], [[0.1, 1], [math.inf, "txt"]])
    raw = open(path, "rb").read()
    assert b"\r" not in raw
    assert raw.decode().splitlines()[0] == "a,b"
    header, rows = read_csv(path)
    assert header == ["a", "b"]
    assert float(rows[0][0]) == 0.1
    assert rows[1][0] == "inf"


def test_environment_overrides(tmp_path, monkeypatch):
    out = tmp_path / "env"
    monkeypatch.setenv("MFSPEC_BUDGET", "1024")
    assert main(["spectrum", "--config", COIN, "--out", str(out)]) == 2
    monkeypatch.setenv("MFSPEC_BUDGET", str(1 << 26))
    monkeypatch.setenv("MFSPEC_SHARDS", "4")
    out2 = tmp_path / "env2"
    assert main(["spectrum", "--config", COIN, "--out", str(out2)]) == 0
    doc = json.loads((out2 / "spectrum.json").read_text())
    assert doc["config"]["budget"] == 1 << 26


def test_flag_overrides_beat_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MFSPEC_BUDGET", "1024")
    out = tmp_path / "flag"
    assert main(["spectrum", "--config", COIN, "--out", str(out),
                 "--budget", str(1 << 26)]) == 0
