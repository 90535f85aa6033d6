"""Random local search over instruction order and template choice.

Each step applies one mutation to the model, lowers it, and races the
candidate against the current incumbent under the measurement protocol.
Only a strictly faster (and correct) candidate is accepted; everything else
is reverted, so the incumbent's cycle count decreases monotonically.
"""

from __future__ import annotations

import csv
import logging
import os
import random
from dataclasses import dataclass, field

from . import measure
from .emitter import assemble_ir
from .errors import SloptError
from .model import Model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    evals: int = 200
    seed: int = 0
    features: tuple = ("adx", "bmi2")
    measurement: measure.MeasurementConfig = field(
        default_factory=measure.MeasurementConfig
    )
    log_every: int = 25


@dataclass(frozen=True)
class HistoryPoint:
    mutation: int          # 1-based mutation counter
    accepted: bool
    kind: str              # reorder | template
    incumbent_cycles: float
    ratio: float           # first incumbent cycles / current incumbent cycles


@dataclass
class OptimizationResult:
    spec: object
    model: Model
    program: object        # best AsmProgram
    history: list
    cycles_first: float
    cycles_best: float
    seed: int
    accepted: int

    @property
    def ratio(self) -> float:
        return self.cycles_first / self.cycles_best if self.cycles_best else 1.0


def status_line(i, total, prog, cycles, ratio) -> str:
    return (
        f"[{i:>6}/{total}] {prog.instruction_count:>4} instrs "
        f"{prog.spill_count:>3} spills  {cycles:10.2f} cyc  x{ratio:.3f}"
    )


def optimize(spec, config: OptimizerConfig) -> OptimizationResult:
    rng = random.Random(config.seed)
    model = Model(spec, features=config.features)
    incumbent = assemble_ir(model)
    cycles = measure.measure_program(spec, incumbent, config.measurement, rng)
    first = cycles
    history = []
    accepted = 0
    log.info("start: %s", status_line(0, config.evals, incumbent, cycles, 1.0))

    for i in range(1, config.evals + 1):
        try:
            record = model.mutate(rng)
        except SloptError:
            log.info("search space exhausted after %d mutations", i - 1)
            break
        try:
            candidate = assemble_ir(model)
            result = measure.compare(spec, incumbent, candidate, config.measurement, rng)
        except SloptError as e:
            raise type(e)(f"mutation {i}: {e}") from e
        if result.winner == "B":
            incumbent = candidate
            cycles = result.cycles_b
            accepted += 1
        else:
            model.revert(record)
            # cycles_a is a fresh incumbent measurement; keep the running
            # value monotone so noise cannot inflate the reported ratio
            cycles = min(cycles, result.cycles_a)
        history.append(
            HistoryPoint(i, result.winner == "B", record.kind, cycles, first / cycles)
        )
        if config.log_every and i % config.log_every == 0:
            log.info("%s", status_line(i, config.evals, incumbent, cycles, first / cycles))

    return OptimizationResult(
        spec=spec,
        model=model,
        program=incumbent,
        history=history,
        cycles_first=first,
        cycles_best=cycles,
        seed=config.seed,
        accepted=accepted,
    )


# -- artifacts -----------------------------------------------------------------


def write_asm(result: OptimizationResult, path: str) -> None:
    prog = result.program
    with open(path, "w") as f:
        f.write(f"# function: {result.spec.name}\n")
        f.write(f"# seed: {result.seed}\n")
        f.write(f"# mutations: {len(result.history)} ({result.accepted} accepted)\n")
        f.write(
            f"# cycles: {result.cycles_best:.2f} "
            f"(from {result.cycles_first:.2f}, x{result.ratio:.3f})\n"
        )
        f.write(f"# instructions: {prog.instruction_count}, spills: {prog.spill_count}\n")
        f.write(f"{result.spec.name}:\n")
        f.write(prog.text)
        f.write("\n")


def write_history_csv(result: OptimizationResult, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mutation", "accepted", "kind", "incumbent_cycles", "ratio"])
        for h in result.history:
            w.writerow(
                [h.mutation, int(h.accepted), h.kind,
                 f"{h.incumbent_cycles:.4f}", f"{h.ratio:.6f}"]
            )


def write_convergence_svg(result: OptimizationResult, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [h.mutation for h in result.history]
    ys = [h.incumbent_cycles for h in result.history]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if xs:
        ax.plot(xs, ys, drawstyle="steps-post", linewidth=1.2)
        acc_x = [h.mutation for h in result.history if h.accepted]
        acc_y = [h.incumbent_cycles for h in result.history if h.accepted]
        ax.plot(acc_x, acc_y, "o", markersize=3)
        ax.set_xscale("log")
    ax.set_xlabel("mutation (log scale)")
    ax.set_ylabel("incumbent cycles")
    ax.set_title(f"{result.spec.name}: x{result.ratio:.3f} over {len(xs)} mutations")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_outputs(result: OptimizationResult, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    name = result.spec.name
    paths = {
        "asm": os.path.join(out_dir, f"{name}.asm"),
        "csv": os.path.join(out_dir, "history.csv"),
        "svg": os.path.join(out_dir, "convergence.svg"),
        "model": os.path.join(out_dir, "model.json"),
    }
    write_asm(result, paths["asm"])
    write_history_csv(result, paths["csv"])
    write_convergence_svg(result, paths["svg"])
    with open(paths["model"], "w") as f:
        f.write(result.model.to_json())
        f.write("\n")
    return paths
