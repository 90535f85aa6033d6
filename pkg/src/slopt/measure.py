"""Cycle measurement backends and the A/B comparison protocol.

The hardware backend times batches of calls with rdtsc behind lfence
barriers, sizing each batch so one sample costs roughly ``target_cycles``
(about 10,000 by default); that amortizes timer overhead without letting a
sample run long enough to span scheduler noise. A comparison takes the
median over ``repetitions`` (default 31) samples per program, regenerates
random inputs every repetition, shuffles the order of {candidate, incumbent,
truth check} each repetition, and vetoes any candidate whose outputs ever
disagree with the reference interpreter. Ties go to the incumbent.

The simulated backend charges a fixed per-mnemonic cost and is fully
deterministic; it exists for tests and hosts where rdtsc is unusable.
"""

from __future__ import annotations

import os
import statistics
from dataclasses import dataclass, field

from . import interp
from .errors import UnknownMnemonicError, VerificationError
from .jit import host_executable, require_host
from .x86 import Imm, Mem, Reg, encode, ins

# Rough Skylake-and-later latencies; relative order is what matters.
DEFAULT_LATENCY = {
    "mov": 1, "movzx": 1, "lea": 1, "push": 1, "pop": 1,
    "add": 1, "sub": 1, "and": 1, "or": 1, "xor": 1, "not": 1,
    "adc": 1, "sbb": 1, "adcx": 1, "adox": 1,
    "shl": 1, "shr": 1, "shld": 3, "shrd": 3,
    "imul": 3, "mul": 4, "mulx": 4,
    "test": 1, "cmp": 1, "bt": 1, "stc": 1, "clc": 1,
    "cmovz": 1, "cmovnz": 1, "cmovc": 1, "cmovnc": 1,
    "setz": 1, "setnz": 1, "setc": 1, "seto": 1,
    "ret": 1,
}

BATCH_MAX = 1 << 20


@dataclass(frozen=True)
class MeasurementConfig:
    target_cycles: int = 10_000
    repetitions: int = 31
    backend: str = "auto"  # auto | rdtsc | simulated
    latency: dict = field(default_factory=lambda: dict(DEFAULT_LATENCY))
    check_outputs: bool = True
    # Hardware medians wobble by a few tenths of a percent between runs of
    # identical code; a candidate must beat the incumbent by more than that
    # resolution, otherwise neutral mutations win coin flips and accumulate.
    tie_margin: float = 0.01
    tie_margin_cycles: float = 0.3  # absolute floor, matters for tiny functions


@dataclass(frozen=True)
class ComparisonResult:
    winner: str            # "A" (incumbent) or "B" (candidate)
    cycles_a: float        # median cycles per call
    cycles_b: float
    vetoed: bool           # candidate produced a wrong output
    samples_a: tuple = ()
    samples_b: tuple = ()
    # Median of per-repetition B/A ratios. Each repetition times A and B
    # back to back, so slow machine-state drift (frequency steps, cache
    # modes) hits both sides of a pair equally and cancels here, where it
    # would skew the two independent medians above.
    ratio: float = 1.0


def pick_backend(name: str = "auto") -> str:
    name = os.environ.get("SLOPT_BACKEND", name)
    if name == "simulate":
        name = "simulated"
    if name == "auto":
        return "rdtsc" if host_executable() else "simulated"
    return name


def simulated_cost(prog, latency=None) -> int:
    """Deterministic cost of a program: the sum of per-mnemonic latencies."""
    table = latency or DEFAULT_LATENCY
    total = 0
    for i in prog.instrs:
        try:
            total += table[i.mnemonic]
        except KeyError:
            raise UnknownMnemonicError(
                f"no latency entry for {i.mnemonic!r}"
            ) from None
    return total


# -- hardware timing -----------------------------------------------------------


def _timer_stub() -> bytes:
    """Machine code for: u64 f(fn, iters, argblock).

    Calls ``fn`` ``iters`` times, reloading the six parameter registers from
    ``argblock`` before every call, and returns elapsed rdtsc cycles.
    """
    pre = [
        ins("push", Reg("rbx")), ins("push", Reg("r12")),
        ins("push", Reg("r13")), ins("push", Reg("r14")),
        ins("mov", Reg("rbx"), Reg("rdi")),
        ins("mov", Reg("r12"), Reg("rsi")),
        ins("mov", Reg("r13"), Reg("rdx")),
        ins("lfence"), ins("rdtsc"), ins("lfence"),
        ins("shl", Reg("rdx"), Imm(32)),
        ins("or", Reg("rax"), Reg("rdx")),
        ins("mov", Reg("r14"), Reg("rax")),
    ]
    loop = [
        ins("mov", Reg("rdi"), Mem("r13", 0)),
        ins("mov", Reg("rsi"), Mem("r13", 8)),
        ins("mov", Reg("rdx"), Mem("r13", 16)),
        ins("mov", Reg("rcx"), Mem("r13", 24)),
        ins("mov", Reg("r8"), Mem("r13", 32)),
        ins("mov", Reg("r9"), Mem("r13", 40)),
        ins("call", Reg("rbx")),
        ins("dec", Reg("r12")),
    ]
    loop_len = len(encode(loop))
    loop.append(ins("jnz", Imm(-(loop_len + 2))))
    post = [
        ins("lfence"), ins("rdtsc"), ins("lfence"),
        ins("shl", Reg("rdx"), Imm(32)),
        ins("or", Reg("rax"), Reg("rdx")),
        ins("sub", Reg("rax"), Reg("r14")),
        ins("pop", Reg("r14")), ins("pop", Reg("r13")),
        ins("pop", Reg("r12")), ins("pop", Reg("rbx")),
        ins("ret"),
    ]
    return encode(pre + loop + post)


class ArgBlock:
    """Shared input/output buffers plus the pointer block the timing loop
    reads.

    Programs racing in one comparison must use the *same* buffers: the
    physical placement of data relative to the stack and to each other
    shifts timings by double-digit percentages (4K aliasing, set conflicts),
    so per-program buffers would hand one side an address-lottery edge.
    """

    def __init__(self, spec):
        import ctypes

        self.spec = spec
        self.out = (ctypes.c_uint64 * max(1, len(spec.returns)))()
        self.arrays = []
        self.block = (ctypes.c_uint64 * 6)()
        self.block[0] = ctypes.addressof(self.out)
        for i, arg in enumerate(spec.args):
            if arg.is_array:
                buf = (ctypes.c_uint64 * arg.length)()
                self.block[1 + i] = ctypes.addressof(buf)
            else:
                buf = None
            self.arrays.append(buf)
        self.block_address = ctypes.addressof(self.block)

    def set_inputs(self, inputs) -> None:
        for i, (arg, buf, value) in enumerate(
            zip(self.spec.args, self.arrays, inputs)
        ):
            if arg.is_array:
                for k, v in enumerate(value):
                    buf[k] = v
            else:
                self.block[1 + i] = value

    def outputs(self) -> tuple:
        return tuple(self.out[i] for i in range(len(self.spec.returns)))


class TimedProgram:
    """A jitted program bound to a (possibly shared) argument block."""

    def __init__(self, code: bytes, spec, args: ArgBlock):
        import ctypes

        from .jit import CodeBuffer

        self.spec = spec
        self.args = args
        self.buffer = CodeBuffer(code)
        self.fn_address = self.buffer.address
        self.block_address = args.block_address
        self._fn = self.buffer.callable(1 + len(spec.args))

    def set_inputs(self, inputs) -> None:
        self.args.set_inputs(inputs)

    def call_once(self, inputs):
        import ctypes

        self.args.set_inputs(inputs)
        ptrs = [ctypes.addressof(self.args.out)]
        for i in range(len(self.spec.args)):
            ptrs.append(self.args.block[1 + i])
        self._fn(*ptrs)
        return self.args.outputs()


class RdtscCounter:
    """Times programs with the timestamp counter; one instance per process."""

    def __init__(self):
        import ctypes

        require_host()
        from .jit import CodeBuffer

        self._buf = CodeBuffer(_timer_stub())
        self._timer = self._buf.raw_callable(
            ctypes.c_uint64, ctypes.c_void_p, ctypes.c_uint64, ctypes.c_void_p
        )

    def cycles(self, tp: TimedProgram, iters: int) -> float:
        return self._timer(tp.fn_address, iters, tp.block_address) / iters

    def calibrate(self, tp: TimedProgram, target_cycles: int) -> int:
        """Batch size so one timed sample costs about ``target_cycles``."""
        est = self.cycles(tp, 64)
        batch = max(1, int(target_cycles // max(est, 1.0)))
        return min(batch, BATCH_MAX)


_counter = None


def shared_counter() -> RdtscCounter:
    global _counter
    if _counter is None:
        _counter = RdtscCounter()
    return _counter


# -- comparison ----------------------------------------------------------------


def _verify(tag, tp, spec, inputs, expected):
    # Poison the shared output buffer first; otherwise a program that stores
    # nothing would inherit the previous runner's correct results.
    for i in range(len(tp.args.out)):
        tp.args.out[i] = 0xA5A5A5A5A5A5A5A5
    got = tp.call_once(inputs)
    if got != expected:
        if tag == "A":
            raise VerificationError(
                f"incumbent disagrees with the interpreter on {inputs!r}"
            )
        return False
    return True


def compare(spec, prog_a, prog_b, config: MeasurementConfig, rng) -> ComparisonResult:
    """Race incumbent (A) against candidate (B).

    B wins only by a strictly lower median; a single wrong B output vetoes it.
    """
    backend = pick_backend(config.backend)
    if backend == "simulated":
        return _compare_simulated(spec, prog_a, prog_b, config, rng)

    counter = shared_counter()
    args = ArgBlock(spec)
    tp_a = TimedProgram(encode(prog_a.instrs), spec, args)
    tp_b = TimedProgram(encode(prog_b.instrs), spec, args)

    tp_a.set_inputs(interp.inputs_from_rng(rng, spec))
    batch = counter.calibrate(tp_a, config.target_cycles)
    counter.cycles(tp_b, batch)  # warm both caches before sampling

    samples_a, samples_b = [], []
    for _ in range(config.repetitions):
        inputs = interp.inputs_from_rng(rng, spec)
        expected = interp.run(spec, inputs) if config.check_outputs else None
        tp_a.set_inputs(inputs)
        jobs = ["A", "B", "truth"] if config.check_outputs else ["A", "B"]
        rng.shuffle(jobs)
        for job in jobs:
            if job == "A":
                samples_a.append(counter.cycles(tp_a, batch))
            elif job == "B":
                samples_b.append(counter.cycles(tp_b, batch))
            else:
                if not _verify("A", tp_a, spec, inputs, expected):
                    pass  # _verify raises for A
                if not _verify("B", tp_b, spec, inputs, expected):
                    return ComparisonResult(
                        "A", statistics.median(samples_a) if samples_a else 0.0,
                        float("inf"), vetoed=True,
                        samples_a=tuple(samples_a), samples_b=tuple(samples_b),
                    )
        # timing set_inputs is avoided by rewriting arrays before the jobs
    med_a = statistics.median(samples_a)
    med_b = statistics.median(samples_b)
    # Decide on paired per-repetition statistics: the two samples of one
    # repetition ran microseconds apart and share whatever state the machine
    # was in, so their difference isolates the programs' own costs.
    diffs = [a - b for a, b in zip(samples_a, samples_b)]
    ratio = statistics.median(b / a for a, b in zip(samples_a, samples_b))
    needed = max(config.tie_margin * med_a, config.tie_margin_cycles)
    winner = "B" if statistics.median(diffs) > needed else "A"
    return ComparisonResult(
        winner, med_a, med_b, vetoed=False,
        samples_a=tuple(samples_a), samples_b=tuple(samples_b), ratio=ratio,
    )


def _compare_simulated(spec, prog_a, prog_b, config, rng) -> ComparisonResult:
    cost_a = simulated_cost(prog_a, config.latency)
    cost_b = simulated_cost(prog_b, config.latency)
    vetoed = False
    if config.check_outputs and host_executable():
        args = ArgBlock(spec)
        tp_a = TimedProgram(encode(prog_a.instrs), spec, args)
        tp_b = TimedProgram(encode(prog_b.instrs), spec, args)
        for _ in range(3):
            inputs = interp.inputs_from_rng(rng, spec)
            expected = interp.run(spec, inputs)
            _verify("A", tp_a, spec, inputs, expected)
            if not _verify("B", tp_b, spec, inputs, expected):
                vetoed = True
                break
    if vetoed:
        return ComparisonResult("A", float(cost_a), float("inf"), vetoed=True)
    winner = "B" if cost_b < cost_a else "A"
    return ComparisonResult(
        winner, float(cost_a), float(cost_b), vetoed=False,
        ratio=cost_b / cost_a if cost_a else 1.0,
    )


def measure_program(spec, prog, config: MeasurementConfig, rng) -> float:
    """Median cycles per call for one program (no comparison)."""
    backend = pick_backend(config.backend)
    if backend == "simulated":
        return float(simulated_cost(prog, config.latency))
    counter = shared_counter()
    tp = TimedProgram(encode(prog.instrs), spec, ArgBlock(spec))
    tp.set_inputs(interp.inputs_from_rng(rng, spec))
    batch = counter.calibrate(tp, config.target_cycles)
    samples = []
    for _ in range(config.repetitions):
        tp.set_inputs(interp.inputs_from_rng(rng, spec))
        samples.append(counter.cycles(tp, batch))
    return statistics.median(samples)
