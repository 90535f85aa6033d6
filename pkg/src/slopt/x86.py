"""Structured x86-64 instructions, Intel-syntax text, and a machine-code
encoder for the closed instruction subset used by the template catalog
(plus the handful of extra mnemonics the measurement harness needs).

Only the operand forms the emitter actually produces are encodable;
anything else raises UnsupportedInstructionError rather than guessing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import UnsupportedInstructionError

REG_NUM = {
    "rax": 0, "rcx": 1, "rdx": 2, "rbx": 3, "rsp": 4, "rbp": 5, "rsi": 6, "rdi": 7,
    "r8": 8, "r9": 9, "r10": 10, "r11": 11, "r12": 12, "r13": 13, "r14": 14, "r15": 15,
}

LOW8 = {
    "rax": "al", "rcx": "cl", "rdx": "dl", "rbx": "bl",
    "rsp": "spl", "rbp": "bpl", "rsi": "sil", "rdi": "dil",
    **{f"r{i}": f"r{i}b" for i in range(8, 16)},
}


@dataclass(frozen=True)
class Reg:
    name: str

    @property
    def num(self) -> int:
        return REG_NUM[self.name]

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Reg8:
    """Low byte of a 64-bit register (setcc target, movzx source)."""

    name: str  # 64-bit register name

    @property
    def num(self) -> int:
        return REG_NUM[self.name]

    def __str__(self):
        return LOW8[self.name]


_REG32 = {
    "rax": "eax", "rcx": "ecx", "rdx": "edx", "rbx": "ebx",
    "rsp": "esp", "rbp": "ebp", "rsi": "esi", "rdi": "edi",
    **{f"r{i}": f"r{i}d" for i in range(8, 16)},
}
_REG16 = {
    "rax": "ax", "rcx": "cx", "rdx": "dx", "rbx": "bx",
    "rsp": "sp", "rbp": "bp", "rsi": "si", "rdi": "di",
    **{f"r{i}": f"r{i}w" for i in range(8, 16)},
}


@dataclass(frozen=True)
class Reg32:
    """32-bit view of a 64-bit register (writes zero-extend)."""

    name: str

    @property
    def num(self) -> int:
        return REG_NUM[self.name]

    def __str__(self):
        return _REG32[self.name]


@dataclass(frozen=True)
class Reg16:
    name: str

    @property
    def num(self) -> int:
        return REG_NUM[self.name]

    def __str__(self):
        return _REG16[self.name]


@dataclass(frozen=True)
class Mem:
    base: Optional[str]  # None for an index-only address like [rax*8]
    disp: int = 0
    index: Optional[str] = None
    scale: int = 1

    def __str__(self):
        parts = []
        if self.base:
            parts.append(self.base)
        if self.index:
            parts.append(f"{self.index}*{self.scale}" if self.scale != 1 else self.index)
        s = "+".join(parts)
        if self.disp:
            s += f"+{self.disp:#x}" if self.disp > 0 else f"-{-self.disp:#x}"
        return f"[{s}]"


@dataclass(frozen=True)
class Imm:
    value: int

    def __str__(self):
        v = self.value
        return str(v) if -256 < v < 256 else hex(v)


Operand = Union[Reg, Reg8, Mem, Imm]


@dataclass(frozen=True)
class Instr:
    mnemonic: str
    operands: tuple = ()
    comment: str = field(default="", compare=False)

    @property
    def text(self) -> str:
        # Memory operand size is only implied by a register operand; qualify
        # it explicitly otherwise (mul [..], mov [..], imm).
        sized = any(isinstance(o, (Reg, Reg8, Reg16, Reg32)) for o in self.operands)
        parts = []
        for o in self.operands:
            if isinstance(o, Mem) and not sized:
                parts.append(f"QWORD PTR {o}")
            else:
                parts.append(str(o))
        return f"{self.mnemonic} {', '.join(parts)}".rstrip()

    def __str__(self):
        return self.text


def ins(mnemonic: str, *operands, comment: str = "") -> Instr:
    return Instr(mnemonic, tuple(operands), comment)


# -- encoding helpers --------------------------------------------------------


def _imm_bytes(value: int, size: int) -> bytes:
    return (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")


def _modrm(reg_field: int, rm) -> tuple:
    """Return (rex_r, rex_x, rex_b, modrm+sib+disp bytes)."""
    rex_r = reg_field >> 3
    if isinstance(rm, (Reg, Reg8, Reg16, Reg32)):
        return rex_r, 0, 0, bytes([0xC0 | ((reg_field & 7) << 3) | (rm.num & 7)]), rm.num >> 3
    if not isinstance(rm, Mem):
        raise UnsupportedInstructionError(f"bad r/m operand {rm!r}")
    disp = rm.disp
    if rm.base is None:
        # index-only [r*s+disp32]: mod=00, rm=100, SIB base=101
        if rm.index is None:
            raise UnsupportedInstructionError("memory operand needs a base or index")
        idx = REG_NUM[rm.index]
        if idx == REG_NUM["rsp"] or rm.scale not in (1, 2, 4, 8):
            raise UnsupportedInstructionError(f"bad index form {rm}")
        ss = {1: 0, 2: 1, 4: 2, 8: 3}[rm.scale]
        sib = bytes([(ss << 6) | ((idx & 7) << 3) | 5])
        body = bytes([((reg_field & 7) << 3) | 4]) + sib + _imm_bytes(disp, 4)
        return rex_r, idx >> 3, 0, body, None
    base = REG_NUM[rm.base]
    rex_b = base >> 3
    rex_x = 0
    if rm.index is not None:
        idx = REG_NUM[rm.index]
        if idx == REG_NUM["rsp"]:
            raise UnsupportedInstructionError("rsp cannot be an index register")
        if rm.scale not in (1, 2, 4, 8):
            raise UnsupportedInstructionError(f"bad scale {rm.scale}")
        rex_x = idx >> 3
        ss = {1: 0, 2: 1, 4: 2, 8: 3}[rm.scale]
        sib = bytes([(ss << 6) | ((idx & 7) << 3) | (base & 7)])
        if disp == 0 and (base & 7) != 5:
            mod, dbytes = 0, b""
        elif -128 <= disp < 128:
            mod, dbytes = 1, _imm_bytes(disp, 1)
        else:
            mod, dbytes = 2, _imm_bytes(disp, 4)
        body = bytes([(mod << 6) | ((reg_field & 7) << 3) | 4]) + sib + dbytes
        return rex_r, rex_x, rex_b, body, None
    # no index register
    if (base & 7) == 4:  # rsp/r12 need a SIB byte
        sib = bytes([(0 << 6) | (4 << 3) | (base & 7)])
        if disp == 0:
            mod, dbytes = 0, b""
        elif -128 <= disp < 128:
            mod, dbytes = 1, _imm_bytes(disp, 1)
        else:
            mod, dbytes = 2, _imm_bytes(disp, 4)
        body = bytes([(mod << 6) | ((reg_field & 7) << 3) | 4]) + sib + dbytes
        return rex_r, rex_x, rex_b, body, None
    if disp == 0 and (base & 7) != 5:
        mod, dbytes = 0, b""
    elif -128 <= disp < 128:
        mod, dbytes = 1, _imm_bytes(disp, 1)
    else:
        mod, dbytes = 2, _imm_bytes(disp, 4)
    body = bytes([(mod << 6) | ((reg_field & 7) << 3) | (base & 7)]) + dbytes
    return rex_r, rex_x, rex_b, body, None


def _rex_w(reg_field: int, rm, mandatory=b"") -> bytes:
    """Mandatory prefix + REX.W for a 64-bit reg/rm encoding."""
    r, x, b, body, rm_hi = _modrm(reg_field, rm)
    if rm_hi is not None:
        b = rm_hi
    rex = 0x48 | (r << 2) | (x << 1) | b
    return mandatory + bytes([rex]), body


_ALU = {  # mnemonic -> (opcode rm,r ; opcode r,rm ; /digit for imm)
    "add": (0x01, 0x03, 0),
    "or":  (0x09, 0x0B, 1),
    "adc": (0x11, 0x13, 2),
    "sbb": (0x19, 0x1B, 3),
    "and": (0x21, 0x23, 4),
    "sub": (0x29, 0x2B, 5),
    "xor": (0x31, 0x33, 6),
    "cmp": (0x39, 0x3B, 7),
}

_SETCC = {"seto": 0x90, "setc": 0x92, "setz": 0x94, "setnz": 0x95, "setb": 0x92}
_CMOVCC = {"cmovz": 0x44, "cmovnz": 0x45, "cmovc": 0x42, "cmovnc": 0x43}


def encode_instr(i: Instr) -> bytes:
    m = i.mnemonic
    ops = i.operands

    def bad():
        forms = ", ".join(type(o).__name__ for o in ops)
        return UnsupportedInstructionError(f"cannot encode {m} ({forms}): {i.text}")

    if m in _ALU:
        op_mr, op_rm, digit = _ALU[m]
        if len(ops) != 2:
            raise bad()
        dst, src = ops
        if isinstance(dst, Reg) and isinstance(src, Reg):
            pre, body = _rex_w(src.num, dst)
            return pre + bytes([op_mr]) + body
        if isinstance(dst, Reg) and isinstance(src, Mem):
            pre, body = _rex_w(dst.num, src)
            return pre + bytes([op_rm]) + body
        if isinstance(dst, Mem) and isinstance(src, Reg):
            pre, body = _rex_w(src.num, dst)
            return pre + bytes([op_mr]) + body
        if isinstance(dst, (Reg, Mem)) and isinstance(src, Imm):
            v = src.value
            if -128 <= v < 128:
                pre, body = _rex_w(digit, dst)
                return pre + bytes([0x83]) + body + _imm_bytes(v, 1)
            if -(1 << 31) <= v < (1 << 31):
                if isinstance(dst, Reg) and dst.name == "rax":
                    # short accumulator form, matches what assemblers emit
                    return bytes([0x48, digit * 8 + 5]) + _imm_bytes(v, 4)
                pre, body = _rex_w(digit, dst)
                return pre + bytes([0x81]) + body + _imm_bytes(v, 4)
            raise bad()
        raise bad()

    if m == "mov":
        dst, src = ops
        if isinstance(dst, Reg32) and isinstance(src, Reg32):
            r, b = src.num >> 3, dst.num >> 3
            prefix = bytes([0x40 | (r << 2) | b]) if (r or b) else b""
            return prefix + bytes([0x89, 0xC0 | ((src.num & 7) << 3) | (dst.num & 7)])
        if isinstance(dst, Reg) and isinstance(src, Reg):
            pre, body = _rex_w(src.num, dst)
            return pre + bytes([0x89]) + body
        if isinstance(dst, Reg) and isinstance(src, Mem):
            pre, body = _rex_w(dst.num, src)
            return pre + bytes([0x8B]) + body
        if isinstance(dst, Mem) and isinstance(src, Reg):
            pre, body = _rex_w(src.num, dst)
            return pre + bytes([0x89]) + body
        if isinstance(dst, Reg) and isinstance(src, Imm):
            v = src.value
            if 0 <= v < (1 << 31) or (1 << 64) - (1 << 31) <= v < (1 << 64):
                # imm32, sign-extended to 64 bits
                pre, body = _rex_w(0, dst)
                return pre + bytes([0xC7]) + body + _imm_bytes(v, 4)
            if 0 <= v < (1 << 64):
                rex = 0x48 | (dst.num >> 3)
                return bytes([rex, 0xB8 | (dst.num & 7)]) + _imm_bytes(v, 8)
            raise bad()
        if isinstance(dst, Mem) and isinstance(src, Imm):
            v = src.value
            if not (0 <= v < (1 << 31)):
                raise bad()
            pre, body = _rex_w(0, dst)
            return pre + bytes([0xC7]) + body + _imm_bytes(v, 4)
        raise bad()

    if m == "test":
        dst, src = ops
        if isinstance(dst, Reg) and isinstance(src, Reg):
            pre, body = _rex_w(src.num, dst)
            return pre + bytes([0x85]) + body
        raise bad()

    if m == "not":
        (dst,) = ops
        pre, body = _rex_w(2, dst)
        return pre + bytes([0xF7]) + body

    if m == "mul":
        (src,) = ops
        pre, body = _rex_w(4, src)
        return pre + bytes([0xF7]) + body

    if m == "imul":
        if len(ops) == 2 and isinstance(ops[1], (Reg, Mem)):
            dst, src = ops
            pre, body = _rex_w(dst.num, src)
            return pre + bytes([0x0F, 0xAF]) + body
        if len(ops) == 3 and isinstance(ops[2], Imm):
            dst, src, imm = ops
            v = imm.value
            pre, body = _rex_w(dst.num, src)
            if -128 <= v < 128:
                return pre + bytes([0x6B]) + body + _imm_bytes(v, 1)
            if -(1 << 31) <= v < (1 << 31):
                return pre + bytes([0x69]) + body + _imm_bytes(v, 4)
        raise bad()

    if m in ("shl", "shr"):
        digit = 4 if m == "shl" else 5
        dst, amt = ops
        if not isinstance(amt, Imm) or not (0 <= amt.value < 64):
            raise bad()
        pre, body = _rex_w(digit, dst)
        if amt.value == 1:
            return pre + bytes([0xD1]) + body
        return pre + bytes([0xC1]) + body + _imm_bytes(amt.value, 1)

    if m in ("shld", "shrd"):
        dst, src, amt = ops
        if not (isinstance(dst, Reg) and isinstance(src, Reg) and isinstance(amt, Imm)):
            raise bad()
        opcode = 0xA4 if m == "shld" else 0xAC
        pre, body = _rex_w(src.num, dst)
        return pre + bytes([0x0F, opcode]) + body + _imm_bytes(amt.value, 1)

    if m == "movzx":
        dst, src = ops
        if isinstance(dst, Reg) and isinstance(src, Reg8):
            pre, body = _rex_w(dst.num, src)
            return pre + bytes([0x0F, 0xB6]) + body
        if isinstance(dst, Reg) and isinstance(src, Reg16):
            pre, body = _rex_w(dst.num, src)
            return pre + bytes([0x0F, 0xB7]) + body
        raise bad()

    if m in _SETCC:
        (dst,) = ops
        if not isinstance(dst, Reg8):
            raise bad()
        prefix = b""
        if dst.num >= 8:
            prefix = bytes([0x41])
        elif dst.num >= 4:  # spl/bpl/sil/dil need an empty REX
            prefix = bytes([0x40])
        _, _, _, body, _ = _modrm(0, Reg(dst.name))
        return prefix + bytes([0x0F, _SETCC[m]]) + body

    if m in _CMOVCC:
        dst, src = ops
        pre, body = _rex_w(dst.num, src)
        return pre + bytes([0x0F, _CMOVCC[m]]) + body

    if m == "lea":
        dst, src = ops
        if not isinstance(src, Mem):
            raise bad()
        pre, body = _rex_w(dst.num, src)
        return pre + bytes([0x8D]) + body

    if m == "bt":
        dst, bit = ops
        if not (isinstance(dst, Reg) and isinstance(bit, Imm)):
            raise bad()
        pre, body = _rex_w(4, dst)
        return pre + bytes([0x0F, 0xBA]) + body + _imm_bytes(bit.value, 1)

    if m in ("adcx", "adox"):
        dst, src = ops
        mandatory = b"\x66" if m == "adcx" else b"\xF3"
        pre, body = _rex_w(dst.num, src, mandatory=mandatory)
        return pre + bytes([0x0F, 0x38, 0xF6]) + body

    if m == "mulx":
        hi, lo, src = ops
        if not (isinstance(hi, Reg) and isinstance(lo, Reg) and isinstance(src, (Reg, Mem))):
            raise bad()
        r, x, b, body, rm_hi = _modrm(hi.num, src)
        if rm_hi is not None:
            b = rm_hi
        byte1 = ((1 - r) << 7) | ((1 - x) << 6) | ((1 - b) << 5) | 0b00010
        byte2 = (1 << 7) | ((~lo.num & 0xF) << 3) | 0b011  # W=1, L=0, pp=F2
        return bytes([0xC4, byte1, byte2, 0xF6]) + body

    if m == "push":
        (r,) = ops
        prefix = bytes([0x41]) if r.num >= 8 else b""
        return prefix + bytes([0x50 | (r.num & 7)])

    if m == "pop":
        (r,) = ops
        prefix = bytes([0x41]) if r.num >= 8 else b""
        return prefix + bytes([0x58 | (r.num & 7)])

    if m == "ret":
        return b"\xC3"
    if m == "stc":
        return b"\xF9"
    if m == "clc":
        return b"\xF8"
    if m == "rdtsc":
        return b"\x0F\x31"
    if m == "lfence":
        return b"\x0F\xAE\xE8"
    if m == "call":
        (r,) = ops
        if not isinstance(r, Reg):
            raise bad()
        prefix = bytes([0x41]) if r.num >= 8 else b""
        return prefix + bytes([0xFF, 0xD0 | (r.num & 7)])
    if m == "dec":
        (r,) = ops
        pre, body = _rex_w(1, r)
        return pre + bytes([0xFF]) + body
    if m == "jnz":
        (rel,) = ops
        if not isinstance(rel, Imm) or not (-128 <= rel.value < 128):
            raise bad()
        return bytes([0x75]) + _imm_bytes(rel.value, 1)

    raise UnsupportedInstructionError(f"unknown mnemonic {m!r}: {i.text}")


def encode(instrs) -> bytes:
    return b"".join(encode_instr(i) for i in instrs)


# Conditional jumps; used by the no-branch scan over emitted programs.
BRANCH_MNEMONICS = frozenset(
    ["jnz", "jz", "jc", "jnc", "jo", "jno", "jmp", "ja", "jb", "jae", "jbe",
     "jl", "jle", "jg", "jge", "js", "jns", "loop", "call"]
)
