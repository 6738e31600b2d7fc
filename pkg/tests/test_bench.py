import math

import numpy as np
import pytest

from slgfm.bench import cli, harness
from slgfm.bench.cases import (builtin_tests, get_case, pde_residual,
                               problem_spec, simulation_config, validate_case)
from slgfm.bench.harness import (CSV_HEADER, ConvergenceReport, SweepRow,
                                 convergence_sweep, report_to_csv, write_csv)
from slgfm.grid import read_field_text


# ----------------------------------------------------------------------
# closed-form validation

def test_builtin_cases_validate():
    for case in builtin_tests():
        rep = validate_case(case, n_points=400)
        assert rep.passed, rep.line()


def test_as_printed_system_rotation_fails_continuity():
    # the verbatim second component uses a different log center, which
    # breaks [u] = 0 by exactly log(2) on the interface
    rep = validate_case(get_case(5, test5_as_printed=True), n_points=400)
    assert not rep.passed
    # the sampled sup approaches log(2) from below as points are added
    assert abs(rep.max_jump_u - np.log(2.0)) <= 5e-3


def test_closed_forms_satisfy_the_pde():
    # finite-difference residual of the governing equation at random
    # off-interface points; tolerances scale with rho
    for case, tol in ((get_case(1), 1e-4), (get_case(2), 1e-4),
                      (get_case(3), 1e-4), (get_case(4), 1e-4),
                      (get_case(5), 1e-2)):
        res = pde_residual(case, n_points=80)
        assert res <= tol, f"test {case.index}: residual {res:.3e}"


def test_problem_spec_wiring():
    case = get_case(4)
    prob = problem_spec(case, 40)
    assert prob.grid.nx == 41 and prob.grid.ny == 41
    assert prob.ncomp == 2
    assert prob.velocity is None          # self-advected
    assert prob.rho_minus == 1000.0 and prob.mu_plus == 0.1
    cfg = simulation_config(case)
    assert cfg.mode == "self-advected"
    assert cfg.dt_factor == 0.125
    assert cfg.final_time == 1.0
    cfg2 = simulation_config(case, final_time=0.25, dt_factor=0.5)
    assert cfg2.final_time == 0.25 and cfg2.dt_factor == 0.5

    case1 = get_case(1)
    prob1 = problem_spec(case1, 20)
    V = prob1.velocity(*prob1.grid.meshgrid(), 0.0)
    assert np.asarray(V).shape == (2, 21, 21)


def test_get_case_rejects_unknown_id():
    with pytest.raises(KeyError):
        get_case(6)
    with pytest.raises(KeyError):
        get_case(0)


# ----------------------------------------------------------------------
# harness

# the 10/20-cell grids used to keep these tests fast are too coarse for the
# reinitialization quality check, which (correctly) warns there
pytestmark_coarse = pytest.mark.filterwarnings(
    "ignore:reinitialization left:RuntimeWarning")


def test_sweep_requires_dyadic_grids():
    with pytest.raises(ValueError):
        convergence_sweep(get_case(1), [40, 60])
    # no grids is not an error, just an empty (complete) report
    empty = convergence_sweep(get_case(1), [])
    assert empty.complete and empty.rows == []


@pytestmark_coarse
def test_sweep_failure_produces_partial_report():
    # an absurd step-size factor trips the characteristics guard right on
    # the first grid; the report records the failure instead of raising
    case = get_case(1)
    report = convergence_sweep(case, [10, 20], dt_factor=10.0)
    assert not report.complete
    assert report.failure is not None
    assert report.failure.startswith("grid 10:")
    assert "StepSizeError" in report.failure
    assert report.rows == []


@pytestmark_coarse
def test_csv_format_and_determinism(tmp_path):
    case = get_case(1)
    report = convergence_sweep(case, [10, 20], final_time=0.2)
    assert report.complete
    text = report_to_csv(report)
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "10"
    assert first[2] == "nan"                  # no order on the coarsest grid
    assert first[5] == "nan"                  # wall time blanked for determinism
    assert "e" in first[1] and len(first[1].split("e")[0]) == 18  # 17 digits
    # orders recomputable from the table itself
    e10, e20 = float(lines[1].split(",")[1]), float(lines[2].split(",")[1])
    assert abs(float(lines[2].split(",")[2]) - math.log2(e10 / e20)) <= 1e-12
    # a rerun serializes to the identical byte sequence
    report2 = convergence_sweep(case, [10, 20], final_time=0.2)
    assert report_to_csv(report2) == text
    p1 = tmp_path / "a.csv"
    write_csv(report, p1)
    assert p1.read_text() == text


def test_sweep_row_line_override():
    row = SweepRow(grid=40, error_u=1.0, order_u=math.nan, error_phi=0.5,
                   order_phi=math.nan, runtime_s=12.5, gmres_iters_mean=3.0)
    with_time = row.csv_line()
    blanked = row.csv_line(runtime=math.nan)
    assert "1.2500000000000000e+01" in with_time
    assert ",nan," in blanked


# ----------------------------------------------------------------------
# command-line interface

@pytestmark_coarse
def test_cli_run_writes_report_and_fields(tmp_path, capsys):
    out = tmp_path / "report.csv"
    dump = tmp_path / "fields"
    rc = cli.main(["run", "--test", "1", "--nx", "10",
                   "--levelset", "exact",
                   "--out", str(out), "--dump-fields", str(dump)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "error_u" in printed
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    cells = lines[1].split(",")
    assert cells[0] == "10"
    assert not math.isnan(float(cells[5]))    # single runs keep wall time
    for name in ("phi", "u", "u_exact", "phi_exact"):
        fld = read_field_text(dump / f"{name}.txt")
        assert fld.grid.nx == 11


@pytestmark_coarse
def test_cli_config_file(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "# comment line\n"
        "test = 1\n"
        "nx = 10          # tiny grid\n"
        "levelset = exact\n"
        "method = slbdf2\n")
    rc = cli.main(["run", "--config", str(cfgfile)])
    assert rc == 0
    assert "method=slbdf2" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("workers = 4\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    ugly = tmp_path / "ugly.cfg"
    ugly.write_text("test: 1\n")
    assert cli.main(["run", "--config", str(ugly)]) == 2


@pytestmark_coarse
def test_cli_sweep_table(tmp_path, capsys):
    out = tmp_path / "table.csv"
    rc = cli.main(["sweep", "--test", "1", "--grids", "10,20",
                   "--levelset", "exact", "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "error_u" in printed
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER and len(lines) == 3


def test_cli_validate(capsys):
    rc = cli.main(["validate", "--points", "100"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert printed.count("PASS") == 5
    assert "as-printed variant, informational" in printed
    assert "FAIL" in printed                  # the informational line


def test_cli_usage_errors(capsys):
    assert cli.main(["run", "--test", "9"]) == 2
    assert cli.main(["run"]) == 2             # neither --test nor --config
    assert cli.main(["sweep", "--test", "1", "--grids", "40,70"]) == 2
    assert cli.main(["run", "--test", "1", "--nx", "1"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep"])                   # --test is required
    assert exc.value.code == 2
