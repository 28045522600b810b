"""Acceptance criteria, one test each, at the default tolerances.

Every test prints a single ``[PASS]``/``[FAIL]`` line so the outcome of each
criterion is visible in ``pytest -v`` output.
"""
import filecmp
import json

import pytest

from dtnlab.cli import main
from dtnlab.verify import DEFAULT_TOLERANCES, RUNTIME_LIMITS, run_check

SEED = 0


def _check(name, capsys, **kwargs):
    result = run_check(name, SEED, **kwargs)
    with capsys.disabled():
        print("\n" + result.line())
    detail = json.dumps({k: v for k, v in result.values.items() if k != "traceback"}, default=str)
    assert result.passed, f"{result.line()}\nvalues: {detail[:2000]}"
    return result


def test_criterion_01_kirchhoff_equivalence(capsys):
    r = _check("kirchhoff-equivalence", capsys)
    assert r.values["max_l2_difference"] <= 5e-8
    assert RUNTIME_LIMITS["kirchhoff-equivalence"] <= 30


def test_criterion_02_manufactured_convergence(capsys):
    r = _check("manufactured-convergence", capsys)
    assert 1.8 <= r.values["l2_order"] <= 2.2


def test_criterion_03_conormal_identity(capsys):
    r = _check("conormal-identity", capsys)
    assert DEFAULT_TOLERANCES["conormal"] <= 1e-9
    assert r.values["max_defect"] <= 1e-9


def test_criterion_04_linearization_limit(capsys):
    r = _check("linearization-limit", capsys, threads=2)
    assert r.values["slope"] >= 0.8
    assert r.values["tail_monotone"]
    assert r.values["constant_max_deviation"] <= 1e-9


def test_criterion_05_orthogonality(capsys):
    r = _check("orthogonality", capsys)
    assert r.values["max_relative_residual"] <= 1e-6


def test_criterion_06_a0_dichotomy(capsys):
    r = _check("a0-dichotomy", capsys)
    assert r.values["I_grad_increasing"]
    assert r.values["I_low_ratio"] <= 4


def test_criterion_07_cap_integrals(capsys):
    r = _check("cap-integrals", capsys)
    assert r.values["max_error_3d"] <= 1e-8
    assert r.values["max_error_2d"] <= 1e-8


def test_criterion_08_nonlinear_identity(capsys):
    r = _check("nonlinear-identity", capsys)
    assert r.values["max_relative_residual"] <= 1e-6


def test_criterion_09_cap_blowup(capsys):
    r = _check("cap-blowup", capsys)
    assert abs(r.values["cap_slope"] + 1.0) <= 0.2
    assert r.values["ring_ratio_decreasing"] and r.values["ring_ratio_final"] < 0.1
    assert r.values["probe_l1_spread"] <= 2
    assert r.values["volume_bound_growth"] <= 2


def test_criterion_10_reconstruction(capsys):
    r = _check("reconstruction", capsys, threads=4)
    assert r.values["a0_abs"] <= 1e-3
    assert r.values["c_rel_l2"] <= 0.10
    assert r.values["a_swept_max"] <= 5e-2
    assert r.values["gradient_c_max"] <= 1e-4
    assert r.values["gradient_a_max"] <= 1e-4
    assert r.seconds <= 600


@pytest.mark.slow
def test_criterion_11_verify_all_byte_identical(tmp_path, capsys):
    outs = [tmp_path / "first", tmp_path / "second"]
    codes = [main(["verify-all", "--seed", str(SEED), "--out", str(o)]) for o in outs]
    tables = sorted(p.name for p in (outs[0] / "tables").glob("*.csv"))
    match, mismatch, errors = filecmp.cmpfiles(outs[0] / "tables", outs[1] / "tables", tables, shallow=False)
    passed = codes == [0, 0] and bool(tables) and not mismatch and not errors
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] verify-all determinism: {len(match)}/{len(tables)} "
              f"tables byte-identical, exit codes {codes}")
    assert codes == [0, 0]
    assert tables
    assert not mismatch and not errors
