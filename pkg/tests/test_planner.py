import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezerkit.core import ParameterError
from tweezerkit.planner import (Rect, RydbergBudget, TimingConfig, ZoneLayout, budget_csv, budget_table, c6_from_shift,
                                effective_rabi, rydberg_budget, single_photon_rabi, time_budget, zone_reach)


def test_zero_config_gives_zero():
    cfg = TimingConfig.zero()
    assert time_budget(cfg, "parallel") == 0.0
    assert time_budget(cfg, "sequential") == 0.0


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0.1, 10))
@settings(max_examples=40, deadline=None)
def test_budget_is_linear_in_times(move, pick, k):
    base = TimingConfig(move_us=move, pickup_dropoff_us=pick)
    scaled = TimingConfig(**{f.name: (getattr(base, f.name) * k if f.name.endswith("_us") else getattr(base, f.name))
                             for f in dataclasses.fields(base)})
    for mode in ("parallel", "sequential"):
        assert time_budget(scaled, mode) == pytest.approx(k * time_budget(base, mode), rel=1e-12, abs=1e-12)


def test_budget_table_and_csv_totals():
    text = budget_table()
    assert "136.9ms" in text.replace(" ", "") and "521.7ms" in text.replace(" ", "")
    rows = budget_csv().strip().splitlines()
    assert rows[0] == "operation,time_ms,parallel,sequential"
    assert rows[-1].startswith("Total")
    assert len(rows) == 9


def test_budget_rejects_bad_input():
    with pytest.raises(ParameterError):
        time_budget(TimingConfig(), "both")
    with pytest.raises(ParameterError):
        TimingConfig(move_us=-1.0)
    with pytest.raises(ParameterError):
        TimingConfig(parallel={"image": 1})


def test_default_zones_fit_in_fov():
    rep = zone_reach()
    assert rep.passed, rep.message
    assert max(rep.max_distance.values()) == pytest.approx(420 + 420, rel=1) or rep.max_distance


def test_zone_reach_hand_example():
    layout = ZoneLayout(storage=Rect(-100, -50, 100, 50), interaction=Rect(-100, 100, 100, 150),
                        readout=Rect(-100, -150, 100, -100), aod_fov=500.0, n_aod_pairs=1)
    rep = zone_reach(layout)
    # farthest storage corner from the interaction strip is (x, -50) at 150 um
    assert rep.max_distance["interaction"] == pytest.approx(150.0)
    assert rep.max_distance["readout"] == pytest.approx(150.0)
    assert rep.passed


def test_zone_reach_flags_missing_aod_pairs():
    layout = ZoneLayout(n_aod_pairs=1)
    rep = zone_reach(layout)
    assert not rep.passed
    assert "needs 2 AOD pairs" in rep.message


def test_empty_storage_passes():
    rep = zone_reach(ZoneLayout(storage=Rect(0, 0, 0, 0)))
    assert rep.passed and rep.aod_pairs_needed == 0


def test_overlapping_zones_rejected():
    with pytest.raises(ParameterError):
        ZoneLayout(storage=Rect(-100, -100, 100, 300))


def test_effective_rabi_scaling():
    base = effective_rabi(1e8, 1e9)
    assert effective_rabi(2e8, 1e9) == pytest.approx(4 * base)
    assert effective_rabi(1e8, 2e9) == pytest.approx(base / 2)
    assert effective_rabi(1e8, -1e9) == pytest.approx(base)
    assert single_photon_rabi(base, 1e9) == pytest.approx(1e8)


def test_rydberg_budget_residual_interaction():
    omega_eff = effective_rabi(1e8, 1e9)
    c6 = c6_from_shift(300 * omega_eff, 2.5)
    rep = rydberg_budget(RydbergBudget(1e8, 1e9, c6=c6))
    assert rep.blockade_ratio == pytest.approx(300)
    assert rep.residual_ratio == pytest.approx(300 * (2.5 / 11.4) ** 6)
    assert rep.residual_ratio < 0.05
    assert rydberg_budget(RydbergBudget(1e8, 1e9)).blockade_ratio is None


def test_rydberg_rejects_bad_eta():
    with pytest.raises(ParameterError):
        RydbergBudget(1e8, 1e9, eta1=0.9)
