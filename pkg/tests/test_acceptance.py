"""Acceptance gate: the full benchmark tables and invariants, end to end.

Each test covers one acceptance item and prints a single [PASS]/[FAIL]
summary line with the measured numbers (visible with ``pytest -s``, or in
the captured-stdout section when an item fails).  The convergence sweeps
make this file the slow part of the suite; the fine-grained properties
live in the per-module test files and are re-run here as item 6.

Item 2 has two tiers: the default stops at 160 cells, and setting
``SLGFM_ACCEPT_FULL=1`` in the environment adds the 320-cell run with its
order and runtime requirements.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time

import test_assemble
import test_driver
import test_extend
import test_gfm
import test_levelset
import test_semilag

from slgfm import driver
from slgfm.bench.cases import get_case, validate_case
from slgfm.bench.harness import convergence_sweep

RUN_FULL_TIER = os.environ.get("SLGFM_ACCEPT_FULL", "") == "1"


def _within3x(err: float, pin: float) -> bool:
    """Two-sided factor-of-three agreement with a reference error level."""
    return pin / 3.0 <= err <= 3.0 * pin


def _emit(tag: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
    return ok


def _sweep(test_id: int, grids, **overrides):
    rep = convergence_sweep(get_case(test_id), grids, **overrides)
    assert rep.complete, f"test {test_id} sweep aborted: {rep.failure}"
    return rep


def test_criterion_1_translation_tables():
    t0 = time.perf_counter()
    gfm = _sweep(1, [40, 80, 160])
    t_gfm = time.perf_counter() - t0
    bdf = _sweep(1, [40, 80, 160], interpolation=driver.INTERP_SLBDF2)

    errs = [r.error_u for r in gfm.rows]
    orders = [r.order_u for r in gfm.rows[1:]]
    orders_b = [r.order_u for r in bdf.rows[1:]]
    pins = (1.05e-2, 2.62e-3, 7.02e-4)

    ok = (all(_within3x(e, p) for e, p in zip(errs, pins))
          and all(o >= 1.7 for o in orders)
          and all(0.7 <= o <= 1.3 for o in orders_b)
          and t_gfm <= 120.0)
    _emit("criterion 1", ok,
          "slgfm errors " + "/".join(f"{e:.3e}" for e in errs)
          + ", orders " + "/".join(f"{o:.2f}" for o in orders)
          + "; slbdf2 orders " + "/".join(f"{o:.2f}" for o in orders_b)
          + f"; slgfm sweep {t_gfm:.0f}s")
    assert ok


def test_criterion_2_rotation_tables():
    grids = [80, 160, 320] if RUN_FULL_TIER else [80, 160]
    rep = _sweep(2, grids)
    rows = {r.grid: r for r in rep.rows}
    err160 = rows[160].error_u

    ok = _within3x(err160, 2.15e-2)
    if RUN_FULL_TIER:
        ok = ok and rows[320].order_u >= 1.6 and rows[320].runtime_s <= 900.0
        detail = (f"error(160)={err160:.3e}, "
                  f"order 160->320 {rows[320].order_u:.2f}, "
                  f"320-cell run {rows[320].runtime_s:.0f}s [full tier]")
    else:
        ok = ok and rows[160].order_u >= 1.5
        detail = (f"error(160)={err160:.3e}, "
                  f"order 80->160 {rows[160].order_u:.2f} "
                  "[reduced tier; SLGFM_ACCEPT_FULL=1 adds the 320-cell run]")
    _emit("criterion 2", ok, detail)
    assert ok


def test_criterion_3_deformation_tables():
    rep = _sweep(3, [40, 80, 160])
    errs = [r.error_u for r in rep.rows]
    orders = [r.order_u for r in rep.rows[1:]]
    pins = (2.72e-2, 7.93e-3, 2.18e-3)

    ok = (all(_within3x(e, p) for e, p in zip(errs, pins))
          and all(o >= 1.6 for o in orders))
    _emit("criterion 3", ok,
          "errors " + "/".join(f"{e:.3e}" for e in errs)
          + ", orders " + "/".join(f"{o:.2f}" for o in orders))
    assert ok


def test_criterion_4_extension_ablation():
    variants = (driver.LS_NO_EXTENSION, driver.LS_COMPUTED, driver.LS_EXACT)
    reps = {src: _sweep(4, [80, 160], levelset_source=src)
            for src in variants}
    ua = [r.error_u for r in reps[driver.LS_NO_EXTENSION].rows]
    ub = [r.error_u for r in reps[driver.LS_COMPUTED].rows]
    uc = [r.error_u for r in reps[driver.LS_EXACT].rows]

    ordering = all(c < b < a for c, b, a in zip(uc, ub, ua))
    order_phi_b = reps[driver.LS_COMPUTED].rows[1].order_phi
    order_phi_a = reps[driver.LS_NO_EXTENSION].rows[1].order_phi
    pins_ok = _within3x(ub[0], 3.19e-3) and _within3x(ub[1], 9.13e-4)

    ok = (ordering and order_phi_b >= 1.7 and order_phi_a <= 1.4 and pins_ok)
    _emit("criterion 4", ok,
          f"u errors at 80/160: exact {uc[0]:.2e}/{uc[1]:.2e} < "
          f"computed {ub[0]:.2e}/{ub[1]:.2e} < "
          f"unextended {ua[0]:.2e}/{ua[1]:.2e} "
          f"({'holds' if ordering else 'violated'}); "
          f"phi orders computed {order_phi_b:.2f} vs unextended {order_phi_a:.2f}")
    assert ok


def test_criterion_5_system_rotation_tables():
    # run whichever variant passes the closed-form validator (the corrected
    # one does; the as-printed one is internally inconsistent and its
    # failure is documented by the validator and in test_bench)
    corrected = validate_case(get_case(5), n_points=200)
    as_printed = validate_case(get_case(5, test5_as_printed=True),
                               n_points=200)
    assert corrected.passed, corrected.line()
    assert not as_printed.passed, as_printed.line()

    rep = _sweep(5, [80, 160])
    order_u = rep.rows[1].order_u
    order_phi = rep.rows[1].order_phi
    ok = order_u >= 1.5 and order_phi >= 1.5
    _emit("criterion 5", ok,
          f"validating variant '{get_case(5).name}': "
          f"orders 80->160 u {order_u:.2f}, band phi {order_phi:.2f}")
    assert ok


def test_criterion_6_property_suite():
    checks = [
        ("a", test_gfm.test_flat_interface_linear_exact),
        ("b", test_assemble.test_shortley_weller_reduces_to_five_point_at_unit_theta),
        ("c", test_driver.test_constant_state_preserved_over_50_steps),
        ("d", test_levelset.test_crossing_fraction_against_bisection),
        ("e", test_semilag.test_rotation_flow_map_third_order),
        ("f", test_extend.test_idempotence_on_extended_field),
        ("f", test_extend.test_interface_pinning_and_band_freeze),
        ("g", test_assemble.test_gmres_matches_dense_oracle_on_assembled_pattern),
    ]
    failures = []
    for letter, fn in checks:
        try:
            fn()
        except Exception as exc:  # keep going; report every broken letter
            failures.append((letter, f"{type(exc).__name__}: {exc}"))
    ok = not failures
    _emit("criterion 6", ok,
          "properties a-g re-run: "
          + ("all hold" if ok
             else "failed " + ", ".join(sorted({f[0] for f in failures}))))
    assert ok, failures


def test_criterion_7_bitwise_identical_sweep_csv(tmp_path):
    blobs = []
    for name in ("first.csv", "second.csv"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "slgfm.bench", "sweep", "--test", "1",
             "--grids", "40,80", "--out", str(out)],
            capture_output=True, text=True, timeout=600, cwd=tmp_path)
        assert proc.returncode == 0, proc.stderr
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1]
    _emit("criterion 7", ok,
          f"two sweep CSVs of {len(blobs[0])} bytes each, "
          + ("bitwise identical" if ok else "DIFFER"))
    assert ok
