"""Acceptance battery: one test per verification criterion, run at full
scale with the stated tolerances and runtime budgets.  Each test prints a
single PASS/FAIL line (visible with `pytest -s` or on failure)."""

import json
import time

import pytest

from carnotlab.cli import main as cli_main
from carnotlab.suite import SCALES, run_suite

SEED = 7
FULL = SCALES["full"]


def _run(check_name: str, budget_seconds: float, label: str) -> dict:
    t0 = time.perf_counter()
    report, _ = run_suite(seed=SEED, scale="full", names={check_name})
    elapsed = time.perf_counter() - t0
    (check,) = report["checks"]
    status = "PASS" if check["passed"] else "FAIL"
    print(f"{status} {label} [{elapsed:.1f}s / budget {budget_seconds:.0f}s]")
    assert check["passed"], check["details"]
    assert elapsed < budget_seconds, f"runtime {elapsed:.1f}s exceeds {budget_seconds}s"
    return check


def test_criterion_01_algebra_laws():
    check = _run("check_algebra_laws", 5.0, "criterion 1: group laws at 1e-12, Q = 4 and 7")
    assert check["details"]["heisenberg1"]["Q"] == 4
    assert check["details"]["engel"]["Q"] == 7


def test_criterion_02_tangent_cone():
    check = _run("check_tangent_cone", 10.0, "criterion 2: tangent cone exact + quadratic blow-up")
    assert check["details"]["constants_exact"]


def test_criterion_03_ball_box():
    check = _run("check_ball_box", 300.0, "criterion 3: ball-box slope 4 +- 0.2 at 1e6 samples")
    assert abs(check["details"]["fitted_slope"] - 4.0) <= 0.2
    assert check["details"]["samples_per_radius"] == 1_000_000


def test_criterion_04_distance_laws():
    check = _run(
        "check_distance_laws", 600.0, "criterion 4: dilation/left-invariance within 2% (50 points)"
    )
    assert check["details"]["points"] == 50


def test_criterion_05_modulus_oracle():
    _run("check_modulus_oracle", 120.0, "criterion 5: rectangle moduli 5%, oracle gap 1e-3")


def test_criterion_06_lip_equals_differential_norm():
    check = _run(
        "check_lip_equals_differential_norm",
        900.0,
        "criterion 6: |Lip - |Df|| / |Df| <= 3% on the catalog",
    )
    assert check["details"]["points"] == 40  # 4 maps x 10 points


def test_criterion_07_jacobian_agreement():
    check = _run(
        "check_jacobian_agreement", 900.0, "criterion 7: morphism vs volume-ratio Jacobians"
    )
    assert check["details"]["automorphism_morphism_jacobian"] == pytest.approx(36.0, abs=1e-9)


def test_criteria_08_09_norm_ratio_and_type_equivalence():
    check = _run(
        "check_norm_ratio_bound",
        900.0,
        "criteria 8+9: |Df|/|Df|_s <= 1.1 H_f and |H - H'|/H <= 10%",
    )
    assert check["details"]["worst_norm_ratio_over_H"] <= 1.1
    assert check["details"]["worst_type_gap"] <= 0.1


def test_criterion_10_branch_locus():
    check = _run(
        "check_branch_locus", 1200.0, "criterion 10: 17^3 scan flags only the t-axis cells"
    )
    assert check["details"]["scanned"] == 17**3
    assert check["details"]["max_flagged_radius"] <= 0.2


def test_criterion_11_area_formula():
    check = _run(
        "check_area_formula", 600.0, "criterion 11: area formula gap <= 10%, multiplicity 2 exact"
    )
    assert check["details"]["multiplicity_exact"]
    assert check["details"]["targets"] == 100


def test_criterion_12_ko_inequality():
    _run("check_ko_inequality", 600.0, "criterion 12: implied K sanity + refinement stability")


def test_criterion_13_suite_determinism(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "suite-run"
    argv = ["suite", "--seed", "7", "--out", str(out), "--format", "json"]
    assert cli_main(argv) == 0
    first = (out / "suite.json").read_bytes()
    assert cli_main(argv) == 0
    second = (out / "suite.json").read_bytes()
    elapsed = time.perf_counter() - t0
    status = "PASS" if first == second else "FAIL"
    print(f"{status} criterion 13: suite --seed 7 twice is byte-identical [{elapsed:.1f}s]")
    assert first == second
    payload = json.loads(first)
    assert payload["result"]["passed"]
