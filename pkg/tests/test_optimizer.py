import csv
import random

from slopt.emitter import assemble_ir
from slopt.interp import random_inputs, run
from slopt.jit import FunctionRunner, host_executable
from slopt.measure import MeasurementConfig
from slopt.model import Model
from slopt.optimizer import (
    OptimizerConfig,
    optimize,
    status_line,
    write_outputs,
)
from slopt.x86 import encode


def sim_config(evals, seed=0, **kw):
    return OptimizerConfig(
        evals=evals,
        seed=seed,
        measurement=MeasurementConfig(backend="simulated"),
        log_every=0,
        **kw,
    )


class TestSearch:
    def test_zero_evals_returns_initial(self, fixture_specs):
        spec = fixture_specs["mul8"]
        result = optimize(spec, sim_config(0))
        baseline = assemble_ir(Model(spec))
        assert result.history == []
        assert result.cycles_best == result.cycles_first
        assert result.program.text == baseline.text

    def test_history_length_matches_evals(self, fixture_specs):
        result = optimize(fixture_specs["modmul61"], sim_config(120))
        assert [h.mutation for h in result.history] == list(range(1, 121))

    def test_incumbent_weakly_decreasing_and_improves(self, fixture_specs):
        result = optimize(fixture_specs["mul8"], sim_config(1000))
        cycles = [h.incumbent_cycles for h in result.history]
        assert all(a >= b for a, b in zip(cycles, cycles[1:]))
        assert result.cycles_best < result.cycles_first
        assert result.ratio > 1.0

    def test_deterministic_given_seed(self, fixture_specs):
        r1 = optimize(fixture_specs["modmul61"], sim_config(300, seed=7))
        r2 = optimize(fixture_specs["modmul61"], sim_config(300, seed=7))
        assert r1.history == r2.history
        assert r1.program.text == r2.program.text

    def test_different_seeds_explore_differently(self, fixture_specs):
        r1 = optimize(fixture_specs["fe_mul"], sim_config(40, seed=1))
        r2 = optimize(fixture_specs["fe_mul"], sim_config(40, seed=2))
        assert [h.kind for h in r1.history] != [h.kind for h in r2.history]

    def test_accept_count_matches_history(self, fixture_specs):
        result = optimize(fixture_specs["mul8"], sim_config(500))
        assert result.accepted == sum(h.accepted for h in result.history)

    def test_exhausted_search_space_stops_early(self, fixture_specs):
        # a single operation with a one-entry catalog admits no mutation
        result = optimize(fixture_specs["add1"], sim_config(50))
        assert len(result.history) < 50

    def test_final_program_still_correct(self, fixture_specs):
        if not host_executable():
            return
        spec = fixture_specs["modmul61"]
        result = optimize(fixture_specs["modmul61"], sim_config(400))
        fn = FunctionRunner(encode(result.program.instrs), spec)
        for seed in range(200):
            inputs = random_inputs(seed, spec)
            assert fn(inputs) == run(spec, inputs)


class TestStatusLine:
    def test_contains_the_key_numbers(self, fixture_specs):
        prog = assemble_ir(Model(fixture_specs["modmul61"]))
        line = status_line(42, 100, prog, 123.456, 1.25)
        assert str(prog.instruction_count) in line
        assert str(prog.spill_count) in line
        assert "123.46" in line and "x1.250" in line and "42" in line


class TestArtifacts:
    def test_write_outputs(self, fixture_specs, tmp_path):
        spec = fixture_specs["mul8"]
        result = optimize(spec, sim_config(200))
        paths = write_outputs(result, str(tmp_path))
        for p in paths.values():
            assert (tmp_path / p.split("/")[-1]).exists()

        with open(paths["csv"], newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["mutation", "accepted", "kind", "incumbent_cycles", "ratio"]
        assert len(rows) - 1 == len(result.history)
        assert all(row[2] in ("reorder", "template") for row in rows[1:])

        with open(paths["svg"]) as f:
            assert "<svg" in f.read()

        asm = open(paths["asm"]).read()
        assert f"# function: {spec.name}" in asm
        assert "# seed: 0" in asm

    def test_model_json_reproduces_asm(self, fixture_specs, tmp_path):
        spec = fixture_specs["modmul61"]
        result = optimize(spec, sim_config(300))
        paths = write_outputs(result, str(tmp_path))
        with open(paths["model"]) as f:
            again = Model.from_json(spec, f.read())
        assert assemble_ir(again).text == result.program.text

    def test_csv_final_row_matches_result(self, fixture_specs, tmp_path):
        result = optimize(fixture_specs["mul8"], sim_config(100))
        paths = write_outputs(result, str(tmp_path))
        with open(paths["csv"], newline="") as f:
            last = list(csv.DictReader(f))[-1]
        assert float(last["incumbent_cycles"]) == round(result.cycles_best, 4)
        assert float(last["ratio"]) == round(result.ratio, 6)
