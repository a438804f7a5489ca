#!/usr/bin/env python3
"""
Refinement sweeps checking the observed orders of convergence (run with -m slow).

Orders are read from the finest pair of levels; the postprocessed scalar must
beat u_h on the two finest levels whenever k >= 1.
"""
import math
import sys

import pytest

from transfer_hdg.tools.convergence_tools import run_convergence
from transfer_hdg.utils.config_utils import load_run_config

pytestmark = pytest.mark.slow

DEGREES = [0, 1, 2, 3]


def sweep(tmp_path, **flags):
    config = load_run_config({"out": str(tmp_path), **flags}, environ={})
    result = run_convergence(config)
    assert result["success"], result.get("error")
    return result["rows"]


def assert_band(value, low, high):
    assert value is not None
    assert low <= value <= high, f"order {value:.3f} outside [{low}, {high}]"


def assert_postprocessing_wins(rows, k):
    if k >= 1:
        for row in rows[-2:]:
            assert row["e_ustar"] <= row["e_u"]


@pytest.mark.parametrize("k", DEGREES)
def test_immersed_square(tmp_path, k):
    rows = sweep(tmp_path, case="ex1", k=k)
    assert len(rows) == 4
    finest = rows[-1]
    assert_band(finest["ord_u"], k + 0.8, k + 1.3)
    assert_band(finest["ord_q"], k + 0.8, k + 1.3)
    assert finest["ord_uhat"] >= k + 0.8
    assert finest["ord_ustar"] >= k + 0.8
    assert_postprocessing_wins(rows, k)


@pytest.mark.parametrize("k", DEGREES)
def test_fitted_annulus_with_neumann_hole(tmp_path, k):
    rows = sweep(tmp_path, case="ex4", k=k)
    finest = rows[-1]
    assert_band(finest["ord_u"], k + 0.8, k + 1.5)
    assert_band(finest["ord_q"], k + 0.8, k + 1.5)
    assert_postprocessing_wins(rows, k)


@pytest.mark.parametrize("k", DEGREES)
def test_ellipse_interface(tmp_path, k):
    rows = sweep(tmp_path, case="ex6", k=k, levels="32,64")
    finest = rows[-1]
    assert_band(finest["ord_u"], k + 0.7, k + 1.4)
    assert_band(finest["ord_q"], k + 0.7, k + 1.4)
    assert_postprocessing_wins(rows, k)


def test_high_contrast_interface_k1(tmp_path):
    rows = sweep(tmp_path, case="ex8", k=1, levels="64,128")
    assert_band(rows[-1]["ord_u"], 1.8, 2.2)
    assert_postprocessing_wins(rows, 1)


@pytest.mark.parametrize("k", [2, 3])
def test_high_contrast_interface(tmp_path, k):
    rows = sweep(tmp_path, case="ex8", k=k, levels="32,64")
    assert_band(rows[-1]["ord_u"], k + 0.7, k + 1.4)
    assert_postprocessing_wins(rows, k)


def test_ring_with_vertex_paths_runs_every_level(tmp_path):
    rows = sweep(tmp_path, case="ex3", k=3, paths="p1")
    assert [row["level"] for row in rows] == [8, 16, 32, 64]
    for row in rows:
        for key in ("e_u", "e_q", "e_uhat", "e_ustar"):
            assert math.isfinite(row[key]) and row[key] > 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-m", "slow"]))
