import json

import pytest

from slopt.errors import EmissionInvariantError, UnsupportedSignatureError
from slopt.ir import parse_function
from slopt.regalloc import ALLOC_ORDER, OUT_PTR_REG, MachineState


def make_state(next_use=None):
    emitted = []
    table = dict(next_use or {})
    state = MachineState(emitted.append, lambda v: table.get(v))
    return state, emitted, table


class TestAllocation:
    def test_prefers_free_registers_in_order(self):
        state, _, _ = make_state()
        assert state.request_register() == ALLOC_ORDER[0]
        state.bind("x", "rax")
        assert state.request_register() == "rcx"

    def test_exclude_respected(self):
        state, _, _ = make_state()
        assert state.request_register(exclude={"rax", "rcx"}) == "rdx"

    def test_pinned_never_handed_out(self):
        state, _, _ = make_state()
        state.pinned.update(ALLOC_ORDER[:-1])
        assert state.request_register() == ALLOC_ORDER[-1]

    def test_callee_saved_usage_tracked(self):
        state, _, _ = make_state()
        for _ in range(9):
            state.bind(f"v{_}", state.request_register())
        assert "rbx" in state.callee_used


class TestBeladySpilling:
    def test_victim_is_farthest_next_use(self):
        state, emitted, table = make_state({"x": 1, "y": 9, "z": 4})
        for v in ("x", "y", "z"):
            state.bind(v, state.request_register())
        state.pinned.update(set(ALLOC_ORDER) - {"rax", "rcx", "rdx"})
        assert state.choose_spill_victim(exclude=state.pinned) == "y"

    def test_dead_value_beats_live_values(self):
        state, _, table = make_state({"x": 1, "z": 4})  # y has no next use
        for v in ("x", "y", "z"):
            state.bind(v, state.request_register())
        state.pinned.update(set(ALLOC_ORDER) - {"rax", "rcx", "rdx"})
        assert state.choose_spill_victim(exclude=state.pinned) == "y"

    def test_mirrored_value_preferred_on_tie(self):
        state, _, table = make_state({"x": 5, "y": 5})
        for v in ("x", "y"):
            state.bind(v, state.request_register())
        state.mirror["x"] = 3
        state.stack[3] = "x"
        state.pinned.update(set(ALLOC_ORDER) - {"rax", "rcx"})
        assert state.choose_spill_victim(exclude=state.pinned) == "x"

    def test_spill_emits_store_and_reload_restores(self):
        state, emitted, table = make_state({v: 100 for v in "abcdefghijklmnopq"})
        for i, v in enumerate("abcdefghijklmn"):  # all 14 allocatable regs
            state.bind(v, state.request_register())
        state.bind("o", state.request_register())  # forces one spill
        assert state.spill_count == 1
        assert any(i.mnemonic == "mov" and "spill" in i.comment for i in emitted)
        spilled = next(v for v, loc in state.loc.items() if loc[0] == "stack")
        r = state.ensure_reg(spilled)
        assert state.loc[spilled] == ("reg", r)
        assert state.mirror[spilled] == 0  # slot kept as a free second copy
        state.audit()

    def test_dead_values_dropped_not_spilled(self):
        state, emitted, _ = make_state()  # nothing has a next use
        for v in "abcdefghijklmn":
            state.bind(v, state.request_register())
        state.request_register()
        assert state.spill_count == 0 and not emitted


class TestFlags:
    def test_flag_binding_and_materialization(self):
        state, emitted, table = make_state({"c": 5})
        state.bind_flag("c", "CF")
        assert state.loc["c"] == ("flag", "CF")
        r = state.materialize_flag("CF")
        assert state.flags["CF"] is None
        assert state.loc["c"] == ("reg", r)
        assert [i.mnemonic for i in emitted] == ["setc", "movzx"]

    def test_of_uses_seto(self):
        state, emitted, _ = make_state({"o": 5})
        state.bind_flag("o", "OF")
        state.materialize_flag("OF")
        assert emitted[0].mnemonic == "seto"

    def test_occupied_flag_rejected(self):
        state, _, _ = make_state({"c": 5, "d": 6})
        state.bind_flag("c", "CF")
        with pytest.raises(EmissionInvariantError):
            state.bind_flag("d", "CF")

    def test_two_flags_independent(self):
        state, _, table = make_state({"c": 5, "o": 6})
        state.bind_flag("c", "CF")
        state.bind_flag("o", "OF")
        state.audit()
        state.clear_flag("CF")
        assert state.flags == {"CF": None, "OF": "o"}


class TestArgumentBinding:
    def _spec(self, n_args):
        doc = {
            "name": "t",
            "args": [{"name": f"x{i}", "type": "u64[2]"} for i in range(n_args)],
            "returns": ["r"],
            "body": [{"out": ["r"], "op": "+", "in": ["x0[0]", "x0[1]"]}],
        }
        return parse_function(json.dumps(doc))

    def test_out_pointer_pinned_to_rdi(self):
        state, _, _ = make_state({"&out": 99})
        state.bind_arguments(self._spec(2))
        assert state.regs[OUT_PTR_REG] == "&out"
        assert state.loc["x0[1]"] == ("argmem", "&x0", 8)

    def test_too_many_arguments_rejected(self):
        state, _, _ = make_state()
        with pytest.raises(UnsupportedSignatureError):
            state.bind_arguments(self._spec(6))

    def test_lazy_argument_load(self):
        state, emitted, table = make_state({"&x0": 5, "x0[1]": 3})
        state.bind_arguments(self._spec(1))
        r = state.ensure_reg("x0[1]")
        assert state.loc["x0[1]"] == ("reg", r)
        load = emitted[-1]
        assert load.mnemonic == "mov" and "load" in load.comment
        state.audit()


def test_audit_catches_corruption():
    state, _, _ = make_state()
    state.bind("x", "rax")
    state.loc["x"] = ("reg", "rcx")
    with pytest.raises(EmissionInvariantError):
        state.audit()
