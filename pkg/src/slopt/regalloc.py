"""Virtual CPU state during emission: general-purpose registers, the two
independently modeled carry flags (CF for adc/adcx chains, OF for adox),
and spill slots. Register requests are greedy; when everything is live the
spill victim is the value whose next use lies farthest ahead (Belady), with
values that already have a stack copy preferred on ties.

rsp is never allocatable; rdi is pinned to the out-pointer for the whole
function. Values are identified by name: IR variables, argument elements
(``a[0]``), and the synthetic pointer values ``&a`` / ``&out``.
"""

from __future__ import annotations

from .errors import EmissionInvariantError, SloptError, UnsupportedSignatureError
from .x86 import Instr, Mem, Reg, Reg8, ins

# caller-saved first so small functions never pay push/pop
ALLOC_ORDER = [
    "rax", "rcx", "rdx", "rsi", "r8", "r9", "r10", "r11",
    "rbx", "rbp", "r12", "r13", "r14", "r15",
]
CALLEE_SAVED = frozenset(["rbx", "rbp", "r12", "r13", "r14", "r15"])
ARG_REGS = ["rdi", "rsi", "rdx", "rcx", "r8", "r9"]
OUT_PTR_REG = "rdi"

INF = float("inf")


class MachineState:
    def __init__(self, emit_sink, next_use_fn):
        self.regs = {}        # reg name -> value
        self.flags = {"CF": None, "OF": None}
        self.stack = {}       # slot index -> value
        self.loc = {}         # value -> ("reg", r) | ("stack", s) | ("flag", f) | ("argmem", ptr, off)
        self.mirror = {}      # value -> stack slot holding a second copy
        self.pinned = set()   # regs untouchable until end of current operation
        self.n_slots = 0
        self.spill_count = 0
        self.callee_used = set()
        self.emit_sink = emit_sink      # callable(Instr)
        self.next_use_fn = next_use_fn  # callable(value) -> position | None

    # -- setup --------------------------------------------------------------

    def bind_arguments(self, spec) -> None:
        """System V binding: rdi = out pointer, remaining args in order."""
        if len(spec.args) > len(ARG_REGS) - 1:
            raise UnsupportedSignatureError(
                f"{len(spec.args)} arguments need more than "
                f"{len(ARG_REGS) - 1} parameter registers"
            )
        self.regs[OUT_PTR_REG] = "&out"
        self.loc["&out"] = ("reg", OUT_PTR_REG)
        for arg, reg in zip(spec.args, ARG_REGS[1:]):
            value = f"&{arg.name}" if arg.is_array else arg.name
            self.regs[reg] = value
            self.loc[value] = ("reg", reg)
            if arg.is_array:
                for i, elem in enumerate(arg.element_names()):
                    self.loc[elem] = ("argmem", value, 8 * i)

    # -- queries ------------------------------------------------------------

    def reg_of(self, value):
        kind, *rest = self.loc.get(value, (None,))
        return rest[0] if kind == "reg" else None

    def is_live(self, value) -> bool:
        return self.next_use_fn(value) is not None

    def _distance(self, value):
        nu = self.next_use_fn(value)
        return INF if nu is None else nu

    # -- allocation ---------------------------------------------------------

    def request_register(self, exclude=()) -> str:
        """A free register, spilling the Belady victim if none is free."""
        blocked = self.pinned | set(exclude)
        for r in ALLOC_ORDER:
            if r not in self.regs and r not in blocked:
                if r in CALLEE_SAVED:
                    self.callee_used.add(r)
                return r
        victim = self.choose_spill_victim(exclude=blocked)
        return self._evict(victim)

    def choose_spill_victim(self, exclude=()):
        """Register-resident value with the farthest next use; dead values
        (distance infinity) beat everything, stack-mirrored values win ties."""
        best = None
        for r in ALLOC_ORDER:
            if r in exclude or r not in self.regs:
                continue
            v = self.regs[r]
            key = (self._distance(v), v in self.mirror)
            if best is None or key > best[0]:
                best = (key, v)
        if best is None:
            raise EmissionInvariantError("no spillable register available")
        return best[1]

    def _evict(self, value) -> str:
        """Free the register holding ``value``, spilling it if still live."""
        r = self.reg_of(value)
        if r is None:
            raise EmissionInvariantError(f"{value} is not register-resident")
        if not self.is_live(value):
            self.drop(value)
            return r
        if value in self.mirror:
            slot = self.mirror.pop(value)
            self.loc[value] = ("stack", slot)
        else:
            slot = self._fresh_slot(value)
            self.stack[slot] = value
            self.emit_sink(ins("mov", Mem("rsp", 8 * slot), Reg(r), comment=f"spill {value}"))
            self.spill_count += 1
            self.loc[value] = ("stack", slot)
        del self.regs[r]
        return r

    def _fresh_slot(self, value) -> int:
        for s in range(self.n_slots):
            if s not in self.stack:
                return s
        self.n_slots += 1
        return self.n_slots - 1

    def bind(self, value, reg) -> None:
        if reg in self.regs:
            raise EmissionInvariantError(f"{reg} already holds {self.regs[reg]}")
        self.regs[reg] = value
        self.loc[value] = ("reg", reg)
        if reg in CALLEE_SAVED:
            self.callee_used.add(reg)

    def bind_flag(self, value, which) -> None:
        if self.flags[which] is not None:
            raise EmissionInvariantError(f"{which} still holds {self.flags[which]}")
        self.flags[which] = value
        self.loc[value] = ("flag", which)

    def drop(self, value) -> None:
        """Forget a value everywhere (it is dead or superseded)."""
        kind, where = self.loc.pop(value, (None, None))
        if kind == "reg":
            del self.regs[where]
        elif kind == "stack":
            del self.stack[where]
        elif kind == "flag":
            self.flags[where] = None
        slot = self.mirror.pop(value, None)
        if slot is not None:
            del self.stack[slot]

    def clear_flag(self, which) -> None:
        v = self.flags[which]
        if v is not None:
            self.flags[which] = None
            if self.loc.get(v) == ("flag", which):
                del self.loc[v]

    # -- loading ------------------------------------------------------------

    def ensure_reg(self, value, exclude=()) -> str:
        """Make ``value`` register-resident, emitting whatever load/rebuild
        that takes, and return the register."""
        kind, *rest = self.loc.get(value, (None,))
        if kind == "reg":
            return rest[0]
        if kind == "stack":
            slot = rest[0]
            r = self.request_register(exclude=exclude)
            self.emit_sink(ins("mov", Reg(r), Mem("rsp", 8 * slot), comment=f"reload {value}"))
            self.regs[r] = value
            self.loc[value] = ("reg", r)
            self.mirror[value] = slot  # slot stays valid until the value dies
            return r
        if kind == "argmem":
            ptr, off = rest
            pr = self.ensure_reg(ptr, exclude=exclude)
            self.pinned.add(pr)
            try:
                r = self.request_register(exclude=exclude)
            finally:
                self.pinned.discard(pr)
            self.emit_sink(ins("mov", Reg(r), Mem(pr, off), comment=f"load {value}"))
            self.regs[r] = value
            self.loc[value] = ("reg", r)
            return r
        if kind == "flag":
            return self.materialize_flag(rest[0], exclude=exclude)
        raise EmissionInvariantError(f"value {value!r} has no location")

    def materialize_flag(self, which, exclude=()) -> str:
        """Save the u1 value living in CF or OF into a register.

        setcc/movzx do not write flags, so this is safe mid-chain; the flag
        itself still holds the bit afterwards, but the register becomes the
        primary location.
        """
        value = self.flags[which]
        if value is None:
            raise EmissionInvariantError(f"{which} holds no live value")
        r = self.request_register(exclude=exclude)
        cc = "setc" if which == "CF" else "seto"
        self.emit_sink(ins(cc, Reg8(r), comment=f"save {which} ({value})"))
        self.emit_sink(ins("movzx", Reg(r), Reg8(r)))
        self.flags[which] = None
        self.regs[r] = value
        self.loc[value] = ("reg", r)
        return r

    # -- consistency --------------------------------------------------------

    def audit(self) -> None:
        for r, v in self.regs.items():
            if self.loc.get(v) != ("reg", r):
                raise EmissionInvariantError(f"reg map: {r}->{v} but loc[{v}]={self.loc.get(v)}")
        for s, v in self.stack.items():
            if self.loc.get(v) != ("stack", s) and self.mirror.get(v) != s:
                raise EmissionInvariantError(f"stack map: {s}->{v} inconsistent")
        for f, v in self.flags.items():
            if v is not None and self.loc.get(v) != ("flag", f):
                raise EmissionInvariantError(f"flag {f}->{v} inconsistent")
        for v, (kind, *rest) in self.loc.items():
            if kind == "reg" and self.regs.get(rest[0]) != v:
                raise EmissionInvariantError(f"loc[{v}] points at {rest[0]} holding {self.regs.get(rest[0])}")
            if kind == "stack" and self.stack.get(rest[0]) != v:
                raise EmissionInvariantError(f"loc[{v}] points at empty slot {rest[0]}")
            if kind == "flag" and self.flags.get(rest[0]) != v:
                raise EmissionInvariantError(f"loc[{v}] points at flag {rest[0]} holding {self.flags.get(rest[0])}")

    def dump(self) -> str:
        lines = ["registers:"]
        for r in ALLOC_ORDER:
            if r in self.regs:
                lines.append(f"  {r:4s} = {self.regs[r]}")
        lines.append(f"flags: CF={self.flags['CF']} OF={self.flags['OF']}")
        lines.append("stack:")
        for s in sorted(self.stack):
            lines.append(f"  [rsp+{8*s:#x}] = {self.stack[s]}")
        return "\n".join(lines)
