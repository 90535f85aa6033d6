"""Command-line interface.

    slopt optimize --jsonFile f.json --evals 1000 --seed 7 --out out/
    slopt emit     --jsonFile f.json
    slopt eval     --jsonFile f.json --seed 3
    slopt selftest

Exit codes: 0 success, 2 invalid input function, 3 platform unsupported,
4 file/IO error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys

from . import interp, measure, optimizer
from .emitter import assemble_ir
from .errors import (
    PlatformUnsupportedError,
    SchemaError,
    SloptError,
    ValidationError,
)
from .ir import parse_function, stats
from .jit import cpu_features, host_executable
from .model import Model

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_PLATFORM = 3
EXIT_IO = 4

log = logging.getLogger("slopt")


def _features(args) -> tuple:
    feats = set(cpu_features()) if host_executable() else {"adx", "bmi2"}
    if getattr(args, "no_adx", False):
        feats.discard("adx")
    if getattr(args, "no_bmi2", False):
        feats.discard("bmi2")
    return tuple(sorted(feats))


def _load_spec(path: str):
    with open(path) as f:
        return parse_function(f.read())


def _measurement_config(args) -> measure.MeasurementConfig:
    return measure.MeasurementConfig(
        target_cycles=args.target_cycles,
        repetitions=args.repetitions,
        backend=args.backend,
    )


def cmd_optimize(args) -> int:
    spec = _load_spec(args.jsonFile)
    config = optimizer.OptimizerConfig(
        evals=args.evals,
        seed=args.seed,
        features=_features(args),
        measurement=_measurement_config(args),
    )
    result = optimizer.optimize(spec, config)
    paths = optimizer.write_outputs(result, args.out)
    print(
        f"{spec.name}: {result.cycles_first:.2f} -> {result.cycles_best:.2f} "
        f"cycles (x{result.ratio:.3f}), {result.accepted} of "
        f"{len(result.history)} mutations accepted"
    )
    for kind, path in sorted(paths.items()):
        print(f"  {kind}: {path}")
    return EXIT_OK


def cmd_emit(args) -> int:
    spec = _load_spec(args.jsonFile)
    model = Model(spec, features=_features(args))
    if args.model:
        with open(args.model) as f:
            model = Model.from_json(spec, f.read())
    prog = assemble_ir(model)
    text = f"{spec.name}:\n{prog.text}\n"
    if args.out and args.out != "-":
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if args.external_assembler:
        from .jit import assemble_external
        from .x86 import encode

        mine = encode(prog.instrs)
        ref = assemble_external(prog.text, assembler=args.external_assembler)
        if mine != ref:
            print("encoder disagrees with external assembler", file=sys.stderr)
            return EXIT_ERROR
        print(f"# {len(mine)} bytes, identical to {args.external_assembler}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _load_spec(args.jsonFile)
    if args.validate_only:
        print(json.dumps({"name": spec.name, "valid": True, **stats(spec)}))
        return EXIT_OK
    rng = random.Random(args.seed)
    inputs = interp.inputs_from_rng(rng, spec)
    outputs = interp.run(spec, inputs)
    doc = {
        "name": spec.name,
        "inputs": {a.name: v for a, v in zip(spec.args, inputs)},
        "outputs": {n: v for n, v in zip(spec.returns, outputs)},
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


SELFTEST_SPEC = """
{
  "name": "selftest",
  "args": [{"name": "a", "type": "u64[2]"}, {"name": "b", "type": "u64[2]"}],
  "returns": ["r0", "r1", "r2"],
  "body": [
    {"out": ["lo", "hi"], "op": "mulx", "in": ["a[0]", "b[0]"]},
    {"out": ["s0", "c0"], "op": "addcarryx", "in": ["0x0", "lo", "a[1]"]},
    {"out": ["s1", "c1"], "op": "addcarryx", "in": ["c0", "hi", "b[1]"]},
    {"out": ["r0"], "op": "cmovznz", "in": ["c1", "s0", "s1"]},
    {"out": ["r1"], "op": "&", "in": ["s1", "0xffffffff"]},
    {"out": ["r2"], "op": ">>", "in": ["s0", "0x7"]}
  ]
}
"""


def cmd_selftest(args) -> int:
    spec = parse_function(SELFTEST_SPEC)
    print(f"host executable: {host_executable()}")
    print(f"cpu features: {sorted(cpu_features())}")
    model = Model(spec, features=_features(args))
    prog = assemble_ir(model)
    print(f"emitted {prog.instruction_count} instructions, {prog.spill_count} spills")
    if not host_executable():
        print("skipping execution checks on this host")
        return EXIT_OK
    from .x86 import encode

    code = encode(prog.instrs)
    tp = measure.TimedProgram(code, spec, measure.ArgBlock(spec))
    rng = random.Random(0)
    for _ in range(1000):
        inputs = interp.inputs_from_rng(rng, spec)
        if tp.call_once(inputs) != interp.run(spec, inputs):
            print("FAIL: generated code disagrees with the interpreter")
            return EXIT_ERROR
    print("generated code matches the interpreter on 1000 random inputs")
    backend = measure.pick_backend(args.backend)
    cfg = measure.MeasurementConfig(backend=backend)
    cycles = measure.measure_program(spec, prog, cfg, rng)
    unit = "cost units" if backend == "simulated" else "cycles/call"
    print(f"{backend} backend: {cycles:.2f} {unit}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="slopt",
        description="Randomized local search over straightline u64 arithmetic, "
        "assembled and measured on the host.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_file=True):
        if needs_file:
            sp.add_argument("--jsonFile", required=True, help="function description (JSON)")
        sp.add_argument("--backend", default="auto",
                        choices=["auto", "rdtsc", "simulated", "simulate"],
                        help="cycle measurement backend")
        sp.add_argument("--no-adx", action="store_true",
                        help="exclude adcx/adox templates")
        sp.add_argument("--no-bmi2", action="store_true",
                        help="exclude mulx templates")

    sp = sub.add_parser("optimize", help="search for a faster instruction sequence")
    common(sp)
    sp.add_argument("--evals", type=int, default=200, help="mutations to evaluate")
    sp.add_argument("--seed", type=int, default=0, help="search PRNG seed")
    sp.add_argument("--out", default="slopt-out", help="output directory")
    sp.add_argument("--repetitions", type=int, default=31,
                    help="measurement repetitions per comparison")
    sp.add_argument("--target-cycles", type=int, default=10_000,
                    help="approximate cycles per timed batch")
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("emit", help="assemble the baseline (or a saved model)")
    common(sp)
    sp.add_argument("--model", help="saved model.json to re-emit")
    sp.add_argument("--out", default="-", help="output file ('-' for stdout)")
    sp.add_argument("--external-assembler", metavar="AS",
                    help="cross-check encoding against this assembler")
    sp.set_defaults(fn=cmd_emit)

    sp = sub.add_parser("eval", help="run the reference interpreter")
    sp.add_argument("--jsonFile", required=True, help="function description (JSON)")
    sp.add_argument("--seed", type=int, default=0, help="input PRNG seed")
    sp.add_argument("--validate-only", action="store_true",
                    help="only parse and validate, print stats")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("selftest", help="check codegen and measurement on this host")
    common(sp, needs_file=False)
    sp.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except (SchemaError, ValidationError) as e:
        print(f"invalid function: {e}", file=sys.stderr)
        return EXIT_INVALID
    except PlatformUnsupportedError as e:
        print(f"platform unsupported: {e}", file=sys.stderr)
        return EXIT_PLATFORM
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except SloptError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
