"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json

import pytest

from coupled_superposition import verify
from coupled_superposition.cli import main


def test_fixed_point_anchor(acceptance):
    r = acceptance("fixed-point anchor", verify.check_fixed_point_anchor())
    assert r.ok, r.detail


def test_potential_anchors(acceptance):
    r = acceptance("potential-threshold anchors", verify.check_potential_anchors())
    assert r.ok, r.detail


def test_block_saturation(acceptance):
    r = acceptance("block saturation", verify.check_block_saturation())
    assert r.ok, r.detail


def test_coupled_gap_sandwich(acceptance):
    r = acceptance("coupled gap sandwich", verify.check_gap_sandwich())
    assert r.ok, r.detail


def test_coupled_gap_asymptotics(acceptance):
    r = acceptance("coupled gap asymptotics", verify.check_gap_asymptotics())
    assert r.ok, r.detail


def test_hard_feedback_gap(acceptance):
    r = acceptance("hard-feedback gap", verify.check_hard_feedback_gap())
    assert r.ok, r.detail


@pytest.mark.xfail(strict=True, reason="the tight upper bound on the smallest root fails "
                   "for moderate noise (counterexample in test_fixed_points)")
def test_fixed_point_bounds_grid(acceptance):
    r = acceptance("fixed-point inequality grid", verify.check_fixed_point_bounds_grid())
    assert r.ok, r.detail


def test_mmse_capacity_identity(acceptance):
    r = acceptance("mmse-capacity identity", verify.check_mmse_identity())
    assert r.ok, r.detail


def test_de_structure(acceptance):
    r = acceptance("DE structure", verify.check_de_structure())
    assert r.ok, r.detail


def test_mc_vs_de(acceptance):
    r = acceptance("MC vs DE", verify.check_mc_vs_de())
    assert r.ok, r.detail


def test_negative_control(acceptance, tmp_path, capsys):
    # checks are memoized, so after the suite above only the perturbed one reruns
    base_code = main(["verify", "--out", str(tmp_path / "base")])
    code = main(["verify", "--gap_constant", "0.3", "--out", str(tmp_path / "neg")])
    capsys.readouterr()
    base = json.loads((tmp_path / "base" / "verify.json").read_text())
    summary = json.loads((tmp_path / "neg" / "verify.json").read_text())
    added = sorted(set(summary["failed"]) - set(base["failed"]))
    passed = (code == 1 and added == ["gap_sandwich"]
              and "gap_sandwich" not in base["failed"])
    r = verify.CheckResult("negative_control", passed, 0.0, float("inf"),
                           {"exit": code, "base_exit": base_code, "added": added})
    acceptance("negative control", r)
    assert passed, (base, summary)
