import math

import numpy as np

from frontdoor.citest import CiMethod
from frontdoor.experiments import (
    COLUMNS,
    SimulationRow,
    simulate,
    summarize,
    twostage_roles,
    write_rows,
)
from frontdoor.fixtures import load_fixture
from frontdoor.search import SearchConfig

CFG = SearchConfig(n_r=2, ci_method=CiMethod("fisher_z"))


def test_twostage_roles_detection():
    assert twostage_roles(load_fixture("fig3left")) == {
        "t": "T", "z1": ["Z1"], "b_cols": ["B"], "z2": ["Z2"], "y": "Y",
    }
    assert twostage_roles(load_fixture("rnd1")) is None


def test_simulate_rows_and_summary(tmp_path):
    rows = simulate(load_fixture("rnd1"), 1000, 3, CFG, seed=2)
    assert [r.run for r in rows] == [0, 1, 2]
    assert all(math.isnan(r.ate_twostage) for r in rows)
    s = summarize(rows)
    assert s["n_runs"] == 3 and s["err_twostage"] is None
    assert s["err_naive"] > 0
    path = tmp_path / "rows.csv"
    write_rows(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 4
    again = tmp_path / "again.csv"
    write_rows(simulate(load_fixture("rnd1"), 1000, 3, CFG, seed=2), again)
    assert again.read_bytes() == path.read_bytes()


def test_summary_skips_failed_searches():
    rows = [
        SimulationRow(0, 1.0, math.nan, math.nan, 1.5, math.nan, 0),
        SimulationRow(1, 1.0, 1.2, 0.9, 2.0, math.nan, 3),
    ]
    s = summarize(rows)
    assert s["search_failures"] == 1
    assert np.isclose(s["err_z"], 0.2) and np.isclose(s["err_naive"], 0.75)
