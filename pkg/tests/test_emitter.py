import ctypes
import random

import pytest

from slopt.emitter import assemble_ir, catalog_for
from slopt.interp import inputs_from_rng, run
from slopt.ir import dependency_graph
from slopt.jit import FunctionRunner, guarded_array
from slopt.model import Model, TemplateId
from slopt.x86 import encode
from conftest import requires_exec
from shapes import template_shapes
from specgen import random_spec

SHAPES = template_shapes()


def rand_topo_order(dep, n, rng):
    preds = {i: {p for (p, c) in dep.edges if c == i} for i in range(n)}
    done, order = set(), []
    while len(order) < n:
        ready = [i for i in range(n) if i not in done and preds[i] <= done]
        pick = rng.choice(ready)
        order.append(pick)
        done.add(pick)
    return order


def check_against_oracle(spec, model, n_cases, seed, debug=False):
    prog = assemble_ir(model, debug=debug)
    assert not prog.branch_mnemonics()
    fn = FunctionRunner(encode(prog.instrs), spec)
    rng = random.Random(seed)
    for _ in range(n_cases):
        inputs = inputs_from_rng(rng, spec)
        assert fn(inputs) == run(spec, inputs), prog.text
    return prog


@requires_exec
class TestTemplateDifferential:
    @pytest.mark.parametrize(
        "label,spec,op_index", SHAPES, ids=[s[0] for s in SHAPES]
    )
    def test_every_variant_matches_oracle(self, label, spec, op_index, host_features):
        model = Model(spec, features=host_features)
        variants = model.catalogs[op_index]
        assert variants, f"empty catalog for {label}"
        op = spec.body[op_index].operator.value
        for v in range(len(variants)):
            model.templates[op_index] = TemplateId(op, v)
            check_against_oracle(spec, model, 300, seed=v, debug=True)

    def test_shapes_cover_whole_catalog(self):
        # every template name reachable with full features shows up in the shapes
        seen = set()
        for _, spec, op_index in SHAPES:
            for t in catalog_for(spec, op_index):
                seen.add(t.name)
        all_names = set()
        for _, spec, op_index in SHAPES:
            for i in range(len(spec.body)):
                for t in catalog_for(spec, i):
                    all_names.add(t.name)
        assert seen == all_names


class TestFeatureGating:
    def _names(self, label, features):
        _, spec, op_index = next(s for s in SHAPES if s[0] == label)
        return [t.name for t in catalog_for(spec, op_index, frozenset(features))]

    def test_mulx_needs_bmi2(self):
        assert "mulx" in self._names("mulx", ("adx", "bmi2"))
        assert "mulx" not in self._names("mulx", ("adx",))

    def test_adcx_adox_need_adx(self):
        with_adx = self._names("addcarryx_0x0", ("adx", "bmi2"))
        without = self._names("addcarryx_0x0", ("bmi2",))
        assert any("adcx" in n or "adox" in n for n in with_adx)
        assert not any("adcx" in n or "adox" in n for n in without)

    def test_catalog_never_empty(self):
        for _, spec, op_index in SHAPES:
            assert catalog_for(spec, op_index, frozenset())


@requires_exec
class TestWholeFunctions:
    def test_fixtures_match_oracle(self, fixture_specs, host_features):
        for spec in fixture_specs.values():
            check_against_oracle(spec, Model(spec, features=host_features), 200, 1)

    def test_random_specs_match_oracle(self, host_features):
        rng = random.Random(2)
        for s in range(25):
            spec = random_spec(rng, n_ops=14, name=f"emit{s}")
            check_against_oracle(spec, Model(spec, features=host_features), 60, s)

    def test_mutated_models_match_oracle(self, fixture_specs, host_features):
        spec = fixture_specs["modmul61"]
        rng = random.Random(3)
        model = Model(spec, features=host_features)
        for i in range(60):
            model.mutate(rng)
            check_against_oracle(spec, model, 40, i, debug=True)

    def test_reordering_neutrality(self, fixture_specs, host_features):
        spec = fixture_specs["modmul61"]
        dep = dependency_graph(spec)
        rng = random.Random(4)
        for i in range(30):
            model = Model(spec, features=host_features)
            model.order = rand_topo_order(dep, len(spec.body), rng)
            check_against_oracle(spec, model, 50, i)

    def test_spilling_function_is_correct(self, host_features):
        # 20 long-lived values consumed in reverse order force stack traffic
        body = [
            {"out": [f"v{i}"], "op": "+", "in": ["a[0]", hex(i + 1)]}
            for i in range(20)
        ]
        acc = "v19"
        for i in reversed(range(19)):
            body.append({"out": [f"s{i}"], "op": "*", "in": [acc, f"v{i}"]})
            acc = f"s{i}"
        import json

        from slopt.ir import parse_function

        spec = parse_function(
            json.dumps(
                {
                    "name": "spilly",
                    "args": [{"name": "a", "type": "u64[1]"}],
                    "returns": [acc],
                    "body": body,
                }
            )
        )
        prog = check_against_oracle(
            spec, Model(spec, features=host_features), 100, 5, debug=True
        )
        assert prog.spill_count > 0


class TestProgramProperties:
    def test_no_conditional_branches_anywhere(self, fixture_specs):
        for spec in fixture_specs.values():
            prog = assemble_ir(Model(spec))
            assert prog.branch_mnemonics() == []

    def test_cmovznz_lowers_to_cmovcc(self):
        _, spec, op_index = next(s for s in SHAPES if s[0] == "cmovznz")
        model = Model(spec)
        for v in range(len(model.catalogs[op_index])):
            model.templates[op_index] = TemplateId("cmovznz", v)
            prog = assemble_ir(model)
            assert any(i.mnemonic.startswith("cmov") for i in prog.instrs)
            assert not prog.branch_mnemonics()

    def test_emission_is_deterministic(self, fixture_specs):
        spec = fixture_specs["fe_mul"]
        a = assemble_ir(Model(spec))
        b = assemble_ir(Model(spec))
        assert a.text == b.text
        assert encode(a.instrs) == encode(b.instrs)

    def test_text_has_one_line_per_instruction(self, fixture_specs):
        prog = assemble_ir(Model(fixture_specs["modmul61"]))
        assert len(prog.text.strip().splitlines()) == prog.instruction_count


@requires_exec
class TestMemorySafety:
    def test_stores_stay_inside_output_buffer(self, fixture_specs, host_features):
        from slopt.jit import CodeBuffer

        for spec in fixture_specs.values():
            prog = assemble_ir(Model(spec, features=host_features))
            buf = CodeBuffer(encode(prog.instrs))
            out = guarded_array(len(spec.returns))
            ins = [guarded_array(arg.length) for arg in spec.args]
            rng = random.Random(6)
            inputs = inputs_from_rng(rng, spec)
            for arr, vals in zip(ins, inputs):
                for i, v in enumerate(vals):
                    arr[i] = v
            fn = buf.callable(1 + len(spec.args))
            fn(ctypes.addressof(out), *(ctypes.addressof(a) for a in ins))
            assert tuple(out) == run(spec, inputs)
