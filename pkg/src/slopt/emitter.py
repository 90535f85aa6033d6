"""Lowering from a scheduled/selected model to x86-64 instructions.

The template catalog maps each operator/operand shape to one or more
equivalent instruction patterns (adc vs adcx vs adox carry chains, mulx vs
widening mul vs imul, strength-reduced multiplies by constants, ...). The
emission context wraps the register allocator with the operand plumbing
templates need, and enforces the carry-flag discipline: any instruction
about to clobber CF or OF while it holds a live value first saves that
value with setcc/movzx.

Emitted programs are straightline: the only control transfer is the final
``ret``, and cmovznz lowers to test+cmovCC, never a conditional jump.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

from .errors import EmissionInvariantError, NoTemplateError
from .ir import FunctionSpec, Lit, Operation, Operator, Var
from .regalloc import ALLOC_ORDER, CALLEE_SAVED, OUT_PTR_REG, MachineState
from .x86 import BRANCH_MNEMONICS, Imm, Instr, Mem, Reg, Reg8, Reg16, Reg32, ins

INT64_MAX = (1 << 63) - 1

# flags an instruction destroys (beyond any it deliberately produces)
CLOBBERS = {
    "add": {"CF", "OF"}, "adc": {"CF", "OF"}, "sub": {"CF", "OF"}, "sbb": {"CF", "OF"},
    "and": {"CF", "OF"}, "or": {"CF", "OF"}, "xor": {"CF", "OF"}, "test": {"CF", "OF"},
    "imul": {"CF", "OF"}, "mul": {"CF", "OF"},
    "shl": {"CF", "OF"}, "shr": {"CF", "OF"}, "shld": {"CF", "OF"}, "shrd": {"CF", "OF"},
    "bt": {"CF"}, "stc": {"CF"}, "clc": {"CF"},
    "adcx": {"CF"}, "adox": {"OF"},
}


@dataclass(frozen=True)
class Template:
    name: str
    emit: callable = field(compare=False)
    needs: frozenset = frozenset()


@dataclass(frozen=True)
class AsmProgram:
    name: str
    instrs: tuple
    n_args: int
    n_returns: int
    spill_count: int

    @property
    def instruction_count(self) -> int:
        return len(self.instrs)

    @property
    def text(self) -> str:
        lines = []
        for i in self.instrs:
            line = f"    {i.text}"
            if i.comment:
                line = f"{line:<40s}# {i.comment}"
            lines.append(line)
        return "\n".join(lines)

    def branch_mnemonics(self):
        return [i.mnemonic for i in self.instrs if i.mnemonic in BRANCH_MNEMONICS]


class EmitCtx:
    def __init__(self, spec: FunctionSpec, order, templates, debug=False):
        self.spec = spec
        self.order = list(order)
        self.templates = templates
        self.debug = debug
        self.n = len(self.order)
        self.pos = 0
        self.instrs = []
        self.state = MachineState(self._sink, self._next_use)
        self._op_pins = []
        # value -> sorted emission positions where it is read
        self.use_pos = {}
        for p, op_id in enumerate(self.order):
            for x in spec.body[op_id].inputs:
                if isinstance(x, Var):
                    self.use_pos.setdefault(x.name, []).append(p)
        # return name -> out-pointer slot indices not yet stored
        self.ret_slots = {}
        for idx, name in enumerate(spec.returns):
            self.ret_slots.setdefault(name, set()).add(idx)
        self._arg_elems = {f"&{a.name}": a.element_names() for a in spec.args if a.is_array}

    # -- liveness -----------------------------------------------------------

    def _body_use(self, value, from_pos):
        uses = self.use_pos.get(value)
        if not uses:
            return None
        i = bisect_left(uses, from_pos)
        return uses[i] if i < len(uses) else None

    def _next_use(self, value):
        """Next position needing ``value``, counting the current operation;
        pending return stores count as a use at the epilogue."""
        if value == "&out":
            return self.n
        if value in self._arg_elems:
            best = None
            for elem in self._arg_elems[value]:
                if self.state.loc.get(elem, (None,))[0] != "argmem":
                    continue  # already loaded; the pointer is no longer needed for it
                nu = self._next_use(elem)
                if nu is not None and (best is None or nu < best):
                    best = nu
            return best
        base = self._body_use(value, self.pos)
        if self.ret_slots.get(value):
            return base if base is not None else self.n
        return base

    def live_after(self, name) -> bool:
        """True if ``name`` is needed strictly after the current operation."""
        if self.ret_slots.get(name):
            return True
        return self._body_use(name, self.pos + 1) is not None

    # -- emission primitives --------------------------------------------------

    def _sink(self, instr: Instr) -> None:
        self.instrs.append(instr)

    def emit(self, instr: Instr, keep=()) -> None:
        """Append one instruction, saving any live flag it would clobber."""
        for flag in CLOBBERS.get(instr.mnemonic, frozenset()) - set(keep):
            v = self.state.flags[flag]
            if v is None:
                continue
            if self.state.is_live(v):
                self.state.materialize_flag(flag)
            else:
                self.state.clear_flag(flag)
        self.instrs.append(instr)
        if self.debug:
            self.state.audit()

    def _pin(self, reg):
        self.state.pinned.add(reg)
        self._op_pins.append(reg)
        return reg

    def end_op(self) -> None:
        for r in self._op_pins:
            self.state.pinned.discard(r)
        self._op_pins.clear()

    def temp_reg(self) -> str:
        return self._pin(self.state.request_register())

    # -- operand plumbing -----------------------------------------------------

    def in_operand(self, x, allow_imm=True):
        """Readable operand for ``x``: Reg, Mem (folded load/spill slot), or Imm."""
        if isinstance(x, Lit):
            if allow_imm and x.value < (1 << 31):
                return Imm(x.value)
            r = self.temp_reg()
            self.emit(ins("mov", Reg(r), Imm(x.value)))
            return Reg(r)
        kind, *rest = self.state.loc[x.name]
        if kind == "reg":
            return Reg(self._pin(rest[0]))
        if kind == "stack":
            return Mem("rsp", 8 * rest[0])
        if kind == "argmem":
            ptr, off = rest
            return Mem(self._pin(self.state.ensure_reg(ptr)), off)
        return Reg(self._pin(self.state.ensure_reg(x.name)))  # flag-resident

    def in_reg(self, x) -> str:
        if isinstance(x, Lit):
            r = self.temp_reg()
            self.emit(ins("mov", Reg(r), Imm(x.value)))
            return r
        return self._pin(self.state.ensure_reg(x.name))

    def dest_from(self, x) -> str:
        """Two-address destination seeded with the value of ``x``; reuses
        x's register when this operation is its last use."""
        if isinstance(x, Var):
            cur = self.state.reg_of(x.name)
            if cur is not None and not self.live_after(x.name):
                self.state.drop(x.name)
                return self._pin(cur)
        src = Imm(x.value) if isinstance(x, Lit) else self.in_operand(x)
        r = self._pin(self.state.request_register())
        self.emit(ins("mov", Reg(r), src))
        return r

    def alloc_dest(self, prefer=()) -> str:
        for x in prefer:
            if isinstance(x, Var):
                r = self.state.reg_of(x.name)
                if r is not None and not self.live_after(x.name):
                    self.state.drop(x.name)
                    return self._pin(r)
        return self._pin(self.state.request_register())

    def bind_out(self, name, reg) -> None:
        self.state.bind(name, reg)

    def bind_flag_out(self, name, which) -> None:
        self.state.bind_flag(name, which)

    # -- fixed-register helpers (mulx/mul) -------------------------------------

    def _free_target(self, target) -> None:
        occ = self.state.regs.get(target)
        if occ is None:
            return
        if self.state.is_live(occ):
            r2 = self.state.request_register(exclude={target})
            self.emit(ins("mov", Reg(r2), Reg(target), comment=f"move {occ}"))
            del self.state.regs[target]
            self.state.regs[r2] = occ
            self.state.loc[occ] = ("reg", r2)
        else:
            self.state.drop(occ)

    def force_value_into(self, x, target) -> None:
        """Make the physical register ``target`` hold the value of ``x``."""
        st = self.state
        if isinstance(x, Var) and st.reg_of(x.name) == target:
            self._pin(target)
            return
        self._free_target(target)
        if isinstance(x, Lit):
            self.emit(ins("mov", Reg(target), Imm(x.value)))
        else:
            kind, *rest = st.loc[x.name]
            if kind == "reg":
                r0 = rest[0]
                self.emit(ins("mov", Reg(target), Reg(r0)))
                del st.regs[r0]
            elif kind == "stack":
                self.emit(ins("mov", Reg(target), Mem("rsp", 8 * rest[0])))
                st.mirror[x.name] = rest[0]
            elif kind == "argmem":
                ptr, off = rest
                pr = st.ensure_reg(ptr, exclude={target})
                self.emit(ins("mov", Reg(target), Mem(pr, off), comment=f"load {x.name}"))
            elif kind == "flag":
                which = rest[0]
                cc = "setc" if which == "CF" else "seto"
                self.emit(ins(cc, Reg8(target)))
                self.emit(ins("movzx", Reg(target), Reg8(target)))
                st.flags[which] = None
            st.regs[target] = x.name
            st.loc[x.name] = ("reg", target)
        self._pin(target)

    def evict_reg(self, target) -> None:
        self._free_target(target)
        self._pin(target)

    def displace(self, target) -> None:
        """Unbind whatever value lives in ``target`` (the bits stay put for
        the current instruction); copy it out first if it is still needed."""
        st = self.state
        occ = st.regs.get(target)
        if occ is None:
            return
        if self.live_after(occ):
            r2 = st.request_register(exclude={target})
            self.emit(ins("mov", Reg(r2), Reg(target), comment=f"keep {occ}"))
            st.regs[r2] = occ
            st.loc[occ] = ("reg", r2)
            del st.regs[target]
        else:
            del st.regs[target]
            del st.loc[occ]
            slot = st.mirror.pop(occ, None)
            if slot is not None:
                del st.stack[slot]

    # -- carry plumbing ---------------------------------------------------------

    def free_flag(self, which) -> None:
        """Save or discard whatever value currently lives in CF or OF."""
        occ = self.state.flags[which]
        if occ is None:
            return
        if self.state.is_live(occ):
            self.state.materialize_flag(which)
        else:
            self.state.clear_flag(which)

    def set_carry_flag(self, x, which) -> None:
        """Arrange for the physical flag (CF or OF) to equal the u1 value x."""
        st = self.state
        if isinstance(x, Var) and st.loc.get(x.name) == ("flag", which):
            if self.live_after(x.name):
                # setcc preserves the flag, so it stays usable after saving
                st.materialize_flag(which)
            else:
                st.clear_flag(which)
            return
        # a different value living in the target flag must be saved first,
        # because the writes below use keep={which} and bypass the guard
        self.free_flag(which)
        if isinstance(x, Lit):
            if which == "CF":
                self.emit(ins("clc" if x.value == 0 else "stc"), keep={"CF"})
            elif x.value == 0:
                self.emit(ins("test", Reg("rax"), Reg("rax"), comment="OF := 0"), keep={"OF"})
            else:
                rc = self.temp_reg()
                self.emit(ins("mov", Reg(rc), Imm(1)))
                rt = self.temp_reg()
                self.emit(ins("mov", Reg(rt), Imm(INT64_MAX)))
                self.emit(ins("add", Reg(rc), Reg(rt), comment="OF := 1"), keep={"OF"})
            return
        r = self.in_reg(x)
        if which == "CF":
            self.emit(ins("bt", Reg(r), Imm(0), comment=f"CF := {x.name}"), keep={"CF"})
        else:
            rc = self.temp_reg()
            self.emit(ins("mov", Reg(rc), Reg(r)))
            rt = self.temp_reg()
            self.emit(ins("mov", Reg(rt), Imm(INT64_MAX)))
            self.emit(ins("add", Reg(rc), Reg(rt), comment=f"OF := {x.name}"), keep={"OF"})

    # -- return stores -----------------------------------------------------------

    def store_finished_returns(self) -> None:
        for name, slots in self.ret_slots.items():
            if not slots or name not in self.state.loc:
                continue
            if self._body_use(name, self.pos + 1) is not None:
                continue
            r = self.state.ensure_reg(name)
            for idx in sorted(slots):
                self.instrs.append(
                    ins("mov", Mem(OUT_PTR_REG, 8 * idx), Reg(r), comment=f"out[{idx}] = {name}")
                )
            slots.clear()
            self.state.drop(name)

    # -- top level ----------------------------------------------------------------

    def run(self) -> AsmProgram:
        st = self.state
        st.bind_arguments(self.spec)
        if "rdx" in st.regs:
            # mulx/mul implicitly read rdx; relocate the argument parked there
            self._free_target("rdx")
        for p, op_id in enumerate(self.order):
            self.pos = p
            op = self.spec.body[op_id]
            self.templates[op_id].emit(self, op)
            self.end_op()
            self.store_finished_returns()
            if self.debug:
                st.audit()
        self.pos = self.n
        self.store_finished_returns()
        unstored = [n for n, s in self.ret_slots.items() if s]
        if unstored:
            raise EmissionInvariantError(f"returns never stored: {unstored}")

        pushes = [r for r in ALLOC_ORDER if r in CALLEE_SAVED and r in st.callee_used]
        frame = 8 * st.n_slots
        prologue = [ins("push", Reg(r)) for r in pushes]
        if frame:
            prologue.append(ins("sub", Reg("rsp"), Imm(frame)))
        epilogue = []
        if frame:
            epilogue.append(ins("add", Reg("rsp"), Imm(frame)))
        epilogue.extend(ins("pop", Reg(r)) for r in reversed(pushes))
        epilogue.append(ins("ret"))
        return AsmProgram(
            name=self.spec.name,
            instrs=tuple(prologue + self.instrs + epilogue),
            n_args=len(self.spec.args),
            n_returns=len(self.spec.returns),
            spill_count=st.spill_count,
        )


# == templates ================================================================


def _t_alu(mnem):
    def f(ctx: EmitCtx, op: Operation):
        a, b = op.inputs
        sb = ctx.in_operand(b)
        d = ctx.dest_from(a)
        ctx.emit(ins(mnem, Reg(d), sb))
        ctx.bind_out(op.outputs[0], d)
    return f


def _t_assign(ctx, op):
    d = ctx.dest_from(op.inputs[0])
    ctx.bind_out(op.outputs[0], d)


def _t_bitnot(ctx, op):
    d = ctx.dest_from(op.inputs[0])
    ctx.emit(ins("not", Reg(d)))
    ctx.bind_out(op.outputs[0], d)


def _t_logical_not(ctx, op):
    a = op.inputs[0]
    ra = ctx.in_reg(a)
    ctx.emit(ins("test", Reg(ra), Reg(ra)))
    d = ctx.alloc_dest(prefer=[a])
    ctx.emit(ins("setz", Reg8(d)))
    ctx.emit(ins("movzx", Reg(d), Reg8(d)))
    ctx.bind_out(op.outputs[0], d)


def _t_shift_imm(mnem):
    def f(ctx, op):
        a, k = op.inputs
        d = ctx.dest_from(a)
        ctx.emit(ins(mnem, Reg(d), Imm(k.value)))
        ctx.bind_out(op.outputs[0], d)
    return f


def _t_shift_dw(mnem):
    # plain shift through shld/shrd with a zero filler register
    def f(ctx, op):
        a, k = op.inputs
        z = ctx.temp_reg()
        ctx.emit(ins("mov", Reg(z), Imm(0)))
        d = ctx.dest_from(a)
        ctx.emit(ins(mnem, Reg(d), Reg(z), Imm(k.value)))
        ctx.bind_out(op.outputs[0], d)
    return f


def _t_cmov(swapped):
    def f(ctx, op):
        cond, t0, t1 = op.inputs
        taken, seed = (t0, t1) if swapped else (t1, t0)
        rc = ctx.in_reg(cond)
        src = ctx.in_operand(taken, allow_imm=False)
        d = ctx.dest_from(seed)
        ctx.emit(ins("test", Reg(rc), Reg(rc)))
        ctx.emit(ins("cmovz" if swapped else "cmovnz", Reg(d), src))
        ctx.bind_out(op.outputs[0], d)
    return f


def _t_carry_chain(mnem, flag):
    allow_imm = mnem in ("adc", "sbb")  # adcx/adox are register/memory only

    def f(ctx, op):
        c, a, b = op.inputs
        ctx.set_carry_flag(c, flag)
        sb = ctx.in_operand(b, allow_imm=allow_imm)
        d = ctx.dest_from(a)
        ctx.emit(ins(mnem, Reg(d), sb), keep={flag})
        ctx.bind_out(op.outputs[0], d)
        ctx.bind_flag_out(op.outputs[1], flag)
    return f


def _t_carry_plain(mnem):
    # carry/borrow-in is the literal 0: a plain add/sub produces the chain flag
    def f(ctx, op):
        _, a, b = op.inputs
        ctx.free_flag("CF")
        sb = ctx.in_operand(b)
        d = ctx.dest_from(a)
        ctx.emit(ins(mnem, Reg(d), sb), keep={"CF"})
        ctx.bind_out(op.outputs[0], d)
        ctx.bind_flag_out(op.outputs[1], "CF")
    return f


def _t_mulx(ctx, op):
    a, b = op.inputs
    lo_n, hi_n = op.outputs
    if isinstance(b, Var) and ctx.state.reg_of(b.name) == "rdx":
        xr, other = b, a
    else:
        xr, other = a, b
    ctx.force_value_into(xr, "rdx")
    src = Reg("rdx") if other == xr else ctx.in_operand(other, allow_imm=False)
    lo = ctx.alloc_dest(prefer=[other, xr])
    hi = ctx.alloc_dest(prefer=[other, xr])
    ctx.emit(ins("mulx", Reg(hi), Reg(lo), src))
    ctx.bind_out(lo_n, lo)
    ctx.bind_out(hi_n, hi)


def _t_mul_widening(ctx, op):
    a, b = op.inputs
    lo_n, hi_n = op.outputs
    ctx.force_value_into(a, "rax")
    ctx.displace("rax")
    ctx.evict_reg("rdx")
    src = Reg("rax") if b == a else ctx.in_operand(b, allow_imm=False)
    ctx.emit(ins("mul", src))
    ctx.bind_out(lo_n, "rax")
    ctx.bind_out(hi_n, "rdx")


def _split_mul_literal(op):
    a, b = op.inputs
    if isinstance(b, Lit):
        return b, a
    if isinstance(a, Lit):
        return a, b
    return None, None


def _t_imul(ctx, op):
    lit, var = _split_mul_literal(op)
    if lit is not None and var is not None and lit.value < (1 << 31):
        sa = ctx.in_operand(var, allow_imm=False)
        d = ctx.alloc_dest(prefer=[var])
        ctx.emit(ins("imul", Reg(d), sa, Imm(lit.value)))
    else:
        a, b = op.inputs
        sb = ctx.in_operand(b, allow_imm=False)
        d = ctx.dest_from(a)
        ctx.emit(ins("imul", Reg(d), sb))
    ctx.bind_out(op.outputs[0], d)


def _t_imul_lo_only(ctx, op):
    # mulx whose high limb is never consumed: low product via imul
    _t_imul(ctx, op)


def _t_mul_shl(ctx, op):
    lit, var = _split_mul_literal(op)
    k = lit.value.bit_length() - 1
    d = ctx.dest_from(var)
    ctx.emit(ins("shl", Reg(d), Imm(k)))
    ctx.bind_out(op.outputs[0], d)


def _t_mul_lea(ctx, op):
    lit, var = _split_mul_literal(op)
    m = lit.value
    ra = ctx.in_reg(var)
    d = ctx.alloc_dest(prefer=[var])
    if m in (3, 5, 9):
        addr = Mem(ra, 0, ra, m - 1)
    elif m == 2:
        addr = Mem(ra, 0, ra, 1)
    else:  # 4 or 8
        addr = Mem(None, 0, ra, m)
    ctx.emit(ins("lea", Reg(d), addr))
    ctx.bind_out(op.outputs[0], d)


def _t_mul_shiftadd(ctx, op):
    # m = 2^i + 2^j (i > j): (x << i) + (x << j)
    lit, var = _split_mul_literal(op)
    m = lit.value
    i = m.bit_length() - 1
    j = (m - (1 << i)).bit_length() - 1
    ra = ctx.in_reg(var)
    d = ctx._pin(ctx.state.request_register())
    ctx.emit(ins("mov", Reg(d), Reg(ra)))
    ctx.emit(ins("shl", Reg(d), Imm(i)))
    if j == 0:
        ctx.emit(ins("add", Reg(d), Reg(ra)))
    else:
        t = ctx.temp_reg()
        ctx.emit(ins("mov", Reg(t), Reg(ra)))
        ctx.emit(ins("shl", Reg(t), Imm(j)))
        ctx.emit(ins("add", Reg(d), Reg(t)))
    ctx.bind_out(op.outputs[0], d)


def _t_cast_mov(ctx, op):
    d = ctx.dest_from(op.inputs[1])
    ctx.bind_out(op.outputs[0], d)


def _t_cast_and_imm(ctx, op):
    mask = (1 << op.inputs[0].value) - 1
    d = ctx.dest_from(op.inputs[1])
    ctx.emit(ins("and", Reg(d), Imm(mask)))
    ctx.bind_out(op.outputs[0], d)


def _t_cast_and_reg(ctx, op):
    mask = (1 << op.inputs[0].value) - 1
    t = ctx.temp_reg()
    ctx.emit(ins("mov", Reg(t), Imm(mask)))
    d = ctx.dest_from(op.inputs[1])
    ctx.emit(ins("and", Reg(d), Reg(t)))
    ctx.bind_out(op.outputs[0], d)


def _t_cast_narrow(kind):
    def f(ctx, op):
        x = op.inputs[1]
        r = ctx.in_reg(x)
        d = ctx.alloc_dest(prefer=[x])
        if kind == 8:
            ctx.emit(ins("movzx", Reg(d), Reg8(r)))
        elif kind == 16:
            ctx.emit(ins("movzx", Reg(d), Reg16(r)))
        else:  # 32: a 32-bit mov zero-extends
            ctx.emit(ins("mov", Reg32(d), Reg32(r)))
        ctx.bind_out(op.outputs[0], d)
    return f


# == catalog ==================================================================


def _used_names(spec: FunctionSpec):
    used = set(spec.returns)
    for op in spec.body:
        for x in op.inputs:
            if isinstance(x, Var):
                used.add(x.name)
    return used


def catalog_for(spec: FunctionSpec, op_index: int, features=frozenset(("adx", "bmi2"))):
    """All templates applicable to one operation, most generic first.

    Raises NoTemplateError when filtering by CPU features leaves nothing.
    """
    op = spec.body[op_index]
    o = op.operator
    out = []

    def T(name, fn, needs=()):
        out.append(Template(name, fn, frozenset(needs)))

    if o is Operator.ADD:
        T("add", _t_alu("add"))
    elif o is Operator.SUB:
        T("sub", _t_alu("sub"))
    elif o is Operator.AND:
        T("and", _t_alu("and"))
    elif o is Operator.OR:
        T("or", _t_alu("or"))
    elif o is Operator.BITNOT:
        T("not", _t_bitnot)
    elif o is Operator.NOT:
        T("test-setz", _t_logical_not)
    elif o is Operator.ASSIGN:
        T("mov", _t_assign)
    elif o is Operator.SHL:
        T("shl", _t_shift_imm("shl"))
        T("shld-zero", _t_shift_dw("shld"))
    elif o is Operator.SHR:
        T("shr", _t_shift_imm("shr"))
        T("shrd-zero", _t_shift_dw("shrd"))
    elif o is Operator.CMOVZNZ:
        T("test-cmovnz", _t_cmov(swapped=False))
        T("test-cmovz", _t_cmov(swapped=True))
    elif o is Operator.STATIC_CAST:
        w = op.inputs[0].value
        if w == 64:
            T("mov", _t_cast_mov)
        elif w == 32:
            T("mov32", _t_cast_narrow(32))
            T("and-mask", _t_cast_and_reg)
        elif w == 16:
            T("movzx16", _t_cast_narrow(16))
            T("and-mask", _t_cast_and_imm)
        elif w == 8:
            T("movzx8", _t_cast_narrow(8))
            T("and-mask", _t_cast_and_imm)
        elif w < 32:
            T("and-mask", _t_cast_and_imm)
        else:
            T("and-mask", _t_cast_and_reg)
    elif o is Operator.MUL:
        T("imul", _t_imul)
        lit, var = _split_mul_literal(op)
        if lit is not None and var is not None and lit.value > 1:
            m = lit.value
            if m & (m - 1) == 0:
                T("shl", _t_mul_shl)
                if m in (2, 4, 8):
                    T("lea", _t_mul_lea)
            elif bin(m).count("1") == 2:
                if m in (3, 5, 9):
                    T("lea", _t_mul_lea)
                T("shift-add", _t_mul_shiftadd)
    elif o is Operator.ADDCARRYX:
        c = op.inputs[0]
        if isinstance(c, Lit) and c.value == 0:
            T("add", _t_carry_plain("add"))
            T("clc-adcx", _t_carry_chain("adcx", "CF"), needs={"adx"})
            T("clear-adox", _t_carry_chain("adox", "OF"), needs={"adx"})
        elif isinstance(c, Lit):
            T("stc-adc", _t_carry_chain("adc", "CF"))
        else:
            T("adc", _t_carry_chain("adc", "CF"))
            T("adcx", _t_carry_chain("adcx", "CF"), needs={"adx"})
            T("adox", _t_carry_chain("adox", "OF"), needs={"adx"})
    elif o is Operator.SUBBORROWX:
        c = op.inputs[0]
        if isinstance(c, Lit) and c.value == 0:
            T("sub", _t_carry_plain("sub"))
            T("clc-sbb", _t_carry_chain("sbb", "CF"))
        else:
            T("sbb", _t_carry_chain("sbb", "CF"))
    elif o is Operator.MULX:
        T("mulx", _t_mulx, needs={"bmi2"})
        T("mul", _t_mul_widening)
        if op.outputs[1] not in _used_names(spec):
            T("imul", _t_imul_lo_only)
    else:
        raise NoTemplateError(f"no templates for operator {o.value!r}")

    result = [t for t in out if t.needs <= features]
    if not result:
        raise NoTemplateError(
            f"operator {o.value!r} has no template under features {sorted(features)}"
        )
    return result


def assemble_ir(model, debug=False) -> AsmProgram:
    """Deterministically lower a model (order + templates) to an AsmProgram."""
    templates = {i: model.template_for(i) for i in range(len(model.spec.body))}
    ctx = EmitCtx(model.spec, model.order, templates, debug=debug)
    return ctx.run()
