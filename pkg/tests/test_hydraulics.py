"""Element laws, schedule checker, energy audit and scenario files."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PUMP_A, TOY, case_pump, make_network, toy_schedule
from hydroharvest.errors import MalformedInputError
from hydroharvest.hydraulics import (
    Schedule,
    SlotInput,
    check_schedule,
    darcy_head_loss,
    energy_audit,
    load_scenario,
    pump_energy,
    pump_head_gain,
    scenario_from_dict,
    scenario_to_dict,
)
from hydroharvest.network import build_active_subgraph, load_network
from hydroharvest.relax import build_N1, embed_schedule

RHO_G_DELTA = 1000.0 * 9.81 * 300.0


def make_toy():
    return load_network(TOY)


class TestElementLaws:
    def test_pump_shutoff(self):
        assert pump_head_gain(0.0, 1.0, case_pump()) == pytest.approx(223.32, abs=1e-12)

    def test_pump_at_ten(self):
        # a*100 + b*10 + c
        assert pump_head_gain(10.0, 1.0, case_pump()) == pytest.approx(223.824219, abs=1e-6)

    def test_pump_zero_speed(self):
        assert pump_head_gain(1.0, 0.0, case_pump()) == pytest.approx(PUMP_A)

    def test_darcy(self):
        assert darcy_head_loss(0.0, 0.001) == 0.0
        assert darcy_head_loss(2.0, 0.001) == pytest.approx(0.004)
        assert darcy_head_loss(0.2, 0.001) == pytest.approx(4.0e-5)

    def test_pump_energy(self):
        assert pump_energy(10.0, 0.0, 0.8, 1000.0, 9.81, 300.0) == 0.0
        assert pump_energy(10.0, 0.1, 1.0, 1000.0, 9.81, 300.0) == pytest.approx(2.943e6)
        assert pump_energy(10.0, 0.1, 0.5, 1000.0, 9.81, 300.0) == pytest.approx(2 * 2.943e6)

    @given(st.floats(-50, 50), st.floats(1e-4, 1.0))
    def test_darcy_even(self, q, f):
        assert darcy_head_loss(q, f) == darcy_head_loss(-q, f)

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(1e-4, 1.0))
    def test_darcy_monotone(self, q1, q2, f):
        lo, hi = sorted((q1, q2))
        assert darcy_head_loss(lo, f) <= darcy_head_loss(hi, f)

    @given(st.floats(0, 20), st.floats(0.1, 1.0), st.floats(1e-3, 1.0))
    def test_pump_concave_in_flow(self, q, w, h):
        p = case_pump(w_min=0.1, w_max=1.0)
        second = pump_head_gain(q + h, w, p) - 2 * pump_head_gain(q, w, p) + pump_head_gain(q - h, w, p)
        assert second == pytest.approx(2 * PUMP_A * h * h, abs=1e-9)
        assert second < 0


class TestChecker:
    def test_forward_toy_is_feasible(self, toy, toy_graph):
        sched = toy_schedule(toy, 0.1, 0.3)
        assert check_schedule(toy, toy_graph, SlotInput.initial(toy), sched) == []

    def test_idle_network(self, toy):
        g = build_active_subgraph(toy, {"P": 0, "L": 1})
        tank = toy.node("T").tank
        sched = Schedule(
            H={"J": 0.0, "Tf": 0.0, "T": tank.initial_head},
            Q={"L": 0.0, "F": 0.0},
            G={"L": 0.0},
            V={"T": tank.initial},
        )
        # junction below its 2 m floor is the only defect
        bad = check_schedule(toy, g, SlotInput.initial(toy), sched)
        assert [v.constraint for v in bad] == ["min_pressure"]
        sched.H["J"] = sched.H["Tf"] = 2.0
        assert check_schedule(toy, g, SlotInput.initial(toy), sched) == []

    def test_unsupported_demand(self, toy, toy_graph):
        sched = toy_schedule(toy, 0.1, 0.3)
        slot = SlotInput.initial(toy, {"J": 0.05})
        bad = check_schedule(toy, toy_graph, slot, sched)
        cons = [v for v in bad if v.constraint == "flow_conservation"]
        assert len(cons) == 1 and cons[0].element == "J"
        assert cons[0].residual == pytest.approx(-0.05)

    def test_speed_outside_window(self, toy, toy_graph):
        sched = toy_schedule(toy, 0.1, 0.5)
        names = {v.constraint for v in check_schedule(toy, toy_graph, SlotInput.initial(toy), sched)}
        assert "pump_speed_bounds" in names

    def test_dimension_mismatch(self, toy, toy_graph):
        sched = toy_schedule(toy, 0.1, 0.3)
        del sched.H["J"]
        with pytest.raises(MalformedInputError, match="missing"):
            check_schedule(toy, toy_graph, SlotInput.initial(toy), sched)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.02, 0.2), st.floats(0.149, 0.42), st.sampled_from(["", "J", "T", "G"]), st.sampled_from([-1.0, -1e-3, 1e-3, 0.5]))
    def test_agrees_with_program_rows(self, q, w, what, shift):
        """Checker and assembled exact program accept the same points."""
        toy = make_toy()
        graph = build_active_subgraph(toy)
        slot = SlotInput.initial(toy, r=1e9)
        sched = toy_schedule(toy, q, w)
        if what == "G":
            sched.G["P"] += shift
        elif what:
            sched.H[what] += shift
        prog = build_N1(toy, graph, slot)
        x = embed_schedule(prog, sched)
        ours = check_schedule(toy, graph, slot, sched)
        rows = prog.violations(x, tol=1e-6)
        assert (not ours) == (not rows)


class TestAudit:
    def test_zero_flow(self, toy):
        g = build_active_subgraph(toy, {"P": 0, "L": 1})
        tank = toy.node("T").tank
        sched = Schedule(
            {"J": 2.0, "Tf": 2.0, "T": tank.initial_head}, {"L": 0.0, "F": 0.0}, {"L": 0.0}, {"T": tank.initial}
        )
        rep = energy_audit(toy, g, SlotInput.initial(toy), sched)
        assert (rep.E_p, rep.E_r, rep.E_l, rep.E_t, rep.E_d) == (0.0, 0.0, 0.0, 0.0, 0.0)
        assert rep.closes()

    def test_reservoir_energy(self):
        net = make_network(
            [("R", "R", {"elevation": 10.0}), ("J", "J", {"elevation": 10.0})],
            [("V", "R", "J", "valve")],
        )
        g = build_active_subgraph(net)
        sched = Schedule({"R": 0.0, "J": 0.0}, {"V": 0.1}, {"V": 0.0}, {})
        slot = SlotInput.initial(net, {"J": 0.1})
        assert check_schedule(net, g, slot, sched) == []
        rep = energy_audit(net, g, slot, sched)
        assert rep.E_r == pytest.approx(RHO_G_DELTA * 0.1 * 10.0)
        assert rep.E_d == pytest.approx(rep.E_r)
        assert rep.closes()

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.02, 0.2), st.floats(0.149, 0.42), st.floats(0.0, 20.0))
    def test_forward_toy_closes(self, q, w, v0):
        toy = make_toy()
        graph = build_active_subgraph(toy)
        slot = SlotInput(1, {}, 0.0, 0.0, {"T": v0})
        sched = toy_schedule(toy, q, w, prev_volume=v0)
        assert check_schedule(toy, graph, slot, sched) == []
        rep = energy_audit(toy, graph, slot, sched)
        assert abs(rep.imbalance) <= 1e-4 * rep.max_term
        assert rep.E_pump_electric == pytest.approx(rep.E_p / 0.85)

    def test_tank_coupling(self, toy):
        sched = toy_schedule(toy, 0.15, 0.35)
        assert sched.V["T"] / toy.node("T").tank.area == pytest.approx(sched.H["T"])

    def test_csv_row(self, toy, toy_graph):
        rep = energy_audit(toy, toy_graph, SlotInput.initial(toy), toy_schedule(toy, 0.1, 0.3))
        row = rep.csv_row()
        assert len(row) == len(rep.CSV_FIELDS)
        assert row[-1] == rep.imbalance


class TestSlotAndScenario:
    def test_negative_demand(self):
        with pytest.raises(MalformedInputError):
            SlotInput(1, {"J": -1.0}, 0.0, 0.0, {})

    def test_signal_above_cap(self):
        with pytest.raises(MalformedInputError):
            SlotInput(1, {}, 0.0, 3.0, {}, r_bar=2.0)

    def test_units_and_round_trip(self):
        raw = {
            "r_bar_watt": 2e5,
            "delta_s": 300,
            "seed": 4,
            "slots": [{"k": 1, "demands_m3_per_h": {"9": 720.0}, "price_per_kwh": 0.05, "r_watt": 1e5}],
        }
        scen = scenario_from_dict(raw)
        assert scen.slots[0].demands["9"] == pytest.approx(0.2)
        assert scen.slots[0].price == pytest.approx(0.05 / 3.6e6)
        back = scenario_to_dict(scen)
        assert back["slots"][0]["demands_m3_per_h"]["9"] == pytest.approx(720.0)
        assert back["seed"] == 4

    def test_unknown_key(self):
        with pytest.raises(MalformedInputError, match="unknown"):
            scenario_from_dict({"r_bar_watt": 1, "delta_s": 1, "slots": [], "extra": 1})

    def test_signal_outside_range(self):
        raw = {"r_bar_watt": 1.0, "delta_s": 300, "slots": [{"k": 1, "price_per_kwh": 0.1, "r_watt": 2.0}]}
        with pytest.raises(MalformedInputError):
            scenario_from_dict(raw)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{")
        with pytest.raises(MalformedInputError):
            load_scenario(p)

    def test_schedule_round_trip(self, toy):
        sched = toy_schedule(toy, 0.1, 0.3)
        again = Schedule.from_dict(json.loads(json.dumps(sched.to_dict())))
        assert again == sched

    def test_schedule_malformed(self):
        with pytest.raises(MalformedInputError):
            Schedule.from_dict({"H": {}})

    def test_demand_conversion_is_exact_for_table_values(self):
        assert math.isclose(576.0 / 3600.0, 0.16)
        assert np.isclose(scenario_from_dict(
            {"r_bar_watt": 1, "delta_s": 1, "slots": [{"k": 1, "demands_m3_per_h": {"9": 576}, "price_per_kwh": 0, "r_watt": 0}]}
        ).slots[0].demands["9"], 0.16)
