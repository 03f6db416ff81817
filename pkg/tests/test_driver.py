import csv

import numpy as np
import pytest

from conftest import make_config, make_sim
from fenetherm import driver
from fenetherm.checkpoint import read_checkpoint
from fenetherm.config import ConfigError
from fenetherm.thermo import COLUMNS

SHEAR = dict(init__v="shear(1)", init__theta="profile(hot_spot)", time__t_end=0.02)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_csv_layout(tmp_path):
    res = make_sim(**SHEAR).run(tmp_path)
    raw = open(res.csv_path, "rb").read()
    assert raw.count(b"\r\n") == raw.count(b"\n") == 6
    rows = read_rows(res.csv_path)
    assert tuple(rows[0]) == tuple(COLUMNS)
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0, 0.005, 0.01, 0.015, 0.02])
    # every float survives the text round trip
    for r, rep in zip(rows[1:], res.reports):
        assert [float(x) for x in r] == list(rep.as_row())


def test_identical_runs_identical_bytes(tmp_path):
    a = make_sim(**SHEAR).run(tmp_path / "a")
    b = make_sim(**SHEAR).run(tmp_path / "b")
    assert open(a.csv_path, "rb").read() == open(b.csv_path, "rb").read()
    assert open(a.checkpoint_path, "rb").read() == open(b.checkpoint_path, "rb").read()


def test_restart_matches_single_run(tmp_path):
    full = make_sim(**SHEAR).run(tmp_path / "full")
    half = make_sim(**{**SHEAR, "time__t_end": 0.01}).run(tmp_path / "split")
    rest = driver.resume(half.checkpoint_path, tmp_path / "split", t_end=0.02)
    assert rest.status == driver.EXIT_OK
    a, b = read_checkpoint(full.checkpoint_path), read_checkpoint(rest.checkpoint_path)
    for name in ("u", "v", "p", "theta", "phi", "accumulators"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes(), name
    assert (a.step, a.t) == (b.step, b.t)
    assert read_rows(full.csv_path) == read_rows(rest.csv_path)


def test_midrun_checkpoint_check_equals_loop_row(tmp_path):
    res = make_sim(**SHEAR, run__checkpoint_every=10).run(tmp_path)
    path = tmp_path / "scenario.step00000010.pkin"
    rep = driver.check(path)
    loop = [r for r in res.reports if abs(r.t - 0.01) < 1e-12][0]
    np.testing.assert_array_equal(rep.as_row(), loop.as_row())


def test_equilibrium_checkpoint_deterministic_and_at_rest(tmp_path):
    cfg = make_config(init__theta="constant(1.3)")
    driver.equilibrium(cfg, tmp_path / "a.pkin")
    driver.equilibrium(cfg, tmp_path / "b.pkin")
    assert (tmp_path / "a.pkin").read_bytes() == (tmp_path / "b.pkin").read_bytes()
    rep = driver.check(tmp_path / "a.pkin")
    assert abs(rep.xi_rate) <= 1e-10
    snap = read_checkpoint(tmp_path / "a.pkin")
    assert np.all(snap.u == 0) and np.all(snap.theta == 1.3)


def test_equilibrium_rejects_nonuniform_temperature():
    with pytest.raises(ConfigError, match="uniform"):
        driver.equilibrium(make_config(init__theta="profile(hot_spot)"))


def test_shear_run_produces_entropy_and_keeps_bounds():
    res = make_sim(**SHEAR).run()
    assert res.status == driver.EXIT_OK and not res.audit_failures
    xi = [r.xi_total for r in res.reports]
    assert xi[-1] > 0 and np.all(np.diff(xi) >= 0)
    assert res.min_xi_cell >= 0
    assert res.max_div <= 1e-10


def test_unsafe_potential_needs_flag(monkeypatch):
    # every built-in kind passes; force a failing report to exercise the guard
    real = driver.validate_assumptions

    def failing(spec):
        rep = real(spec)
        rep.convex = False
        rep.messages.append("U_e'' takes negative values")
        return rep

    monkeypatch.setattr(driver, "validate_assumptions", failing)
    cfg = make_config(time__t_end=0.002)
    with pytest.raises(ConfigError, match="allow-unsafe-potential"):
        driver.run(cfg)
    assert driver.run(cfg, allow_unsafe_potential=True).status == driver.EXIT_OK


def test_invariant_failure_writes_last_good(tmp_path):
    # an absurd time step drives the heat solve negative or the CFL check over
    sim = make_sim(init__v="shear(400)", time__dt=0.05, time__t_end=0.5)
    res = sim.run(tmp_path)
    assert res.status == driver.EXIT_INVARIANT
    assert res.checkpoint_path.endswith("scenario.lastgood.pkin")
    assert read_checkpoint(res.checkpoint_path).step == 0


def test_strict_turns_audit_failures_into_exit_code(tmp_path):
    sim = make_sim(**SHEAR, audit__energy_rel_tol=1e-14)
    res = sim.run(strict=True)
    assert res.status == driver.EXIT_AUDIT
    assert "energy" in res.message


def test_summarize_csv(tmp_path):
    res = make_sim(**SHEAR).run(tmp_path)
    summary = driver.summarize_csv(res.csv_path)
    assert summary.rows == 5 and summary.passed
    names = [c[0] for c in summary.checks]
    assert "energy equality" in names
