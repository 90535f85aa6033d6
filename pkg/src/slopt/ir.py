"""Straightline input language: parsing, validation, dependency analysis.

The accepted JSON schema is::

    {
      "name": "mul_small",
      "args": [{"name": "a", "type": "u64[4]"}, {"name": "n", "type": "u64"}],
      "returns": ["o0", "o1"],
      "body": [
        {"out": ["x1", "x2"], "op": "addcarryx", "in": ["0x0", "a[0]", "a[1]"]},
        {"out": ["o0"], "op": "*", "in": ["x1", 8]},
        {"out": ["o1"], "op": "=", "in": ["x2"]}
      ]
    }

Array arguments are flattened into scalar pseudo-variables ``a[i]`` whose
memory origin (argument index, element offset) is recorded for the emitter.
Returned values are written through an implicit out-pointer, one 8-byte slot
per name in ``returns``. Literals may be decimal, ``0x`` hex, or ``0b``
binary, and must fit in 64 bits.
"""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Union

from .errors import SchemaError, ValidationError

MASK64 = (1 << 64) - 1

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ELEM_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\[(\d+)\]$")
_ARRAY_TYPE_RE = re.compile(r"^u64\[(\d+)\]$")


class Width(enum.IntEnum):
    U1 = 1
    U64 = 64


class Operator(str, enum.Enum):
    NOT = "!"
    AND = "&"
    MUL = "*"
    ADD = "+"
    SUB = "-"
    SHL = "<<"
    ASSIGN = "="
    SHR = ">>"
    BITNOT = "~"
    OR = "or"
    ADDCARRYX = "addcarryx"
    CMOVZNZ = "cmovznz"
    MULX = "mulx"
    STATIC_CAST = "static_cast"
    SUBBORROWX = "subborrowx"


# operator -> (input count, output count)
ARITY = {
    Operator.NOT: (1, 1),
    Operator.AND: (2, 1),
    Operator.MUL: (2, 1),
    Operator.ADD: (2, 1),
    Operator.SUB: (2, 1),
    Operator.SHL: (2, 1),
    Operator.ASSIGN: (1, 1),
    Operator.SHR: (2, 1),
    Operator.BITNOT: (1, 1),
    Operator.OR: (2, 1),
    Operator.ADDCARRYX: (3, 2),
    Operator.CMOVZNZ: (3, 1),
    Operator.MULX: (2, 2),
    Operator.STATIC_CAST: (2, 1),
    Operator.SUBBORROWX: (3, 2),
}


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Lit:
    value: int

    def __str__(self):
        return hex(self.value)


Operand = Union[Var, Lit]


@dataclass(frozen=True)
class Operation:
    outputs: tuple
    operator: Operator
    inputs: tuple

    def __str__(self):
        outs = ", ".join(self.outputs)
        ins = ", ".join(str(i) for i in self.inputs)
        return f"{outs} <- {self.operator.value}({ins})"


@dataclass(frozen=True)
class Argument:
    name: str
    length: int  # 0 for a scalar u64, else array element count

    @property
    def is_array(self):
        return self.length > 0

    def element_names(self):
        if self.is_array:
            return [f"{self.name}[{i}]" for i in range(self.length)]
        return [self.name]


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    args: tuple  # of Argument
    returns: tuple  # of variable names
    body: tuple  # of Operation
    widths: dict = field(compare=False, hash=False, repr=False, default=None)

    def arg_elements(self):
        out = []
        for a in self.args:
            out.extend(a.element_names())
        return out

    def width_of(self, name: str) -> Width:
        return self.widths.get(name, Width.U64)

    def to_json(self) -> str:
        body = []
        for op in self.body:
            ins = []
            for x in op.inputs:
                ins.append(x.name if isinstance(x, Var) else hex(x.value))
            body.append({"out": list(op.outputs), "op": op.operator.value, "in": ins})
        doc = {
            "name": self.name,
            "args": [
                {"name": a.name, "type": f"u64[{a.length}]" if a.is_array else "u64"}
                for a in self.args
            ],
            "returns": list(self.returns),
            "body": body,
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class DepGraph:
    n: int
    edges: frozenset  # of (producer index, consumer index)

    def preds(self, i: int):
        return sorted(p for (p, c) in self.edges if c == i)

    def succs(self, i: int):
        return sorted(c for (p, c) in self.edges if p == i)


def _parse_literal(text, where: str) -> int:
    if isinstance(text, bool):
        raise SchemaError(f"{where}: boolean is not a valid operand")
    if isinstance(text, int):
        value = text
    elif isinstance(text, str):
        t = text.strip().lower()
        try:
            if t.startswith("0x"):
                value = int(t, 16)
            elif t.startswith("0b"):
                value = int(t, 2)
            else:
                value = int(t, 10)
        except ValueError:
            raise SchemaError(f"{where}: bad literal {text!r}") from None
    else:
        raise SchemaError(f"{where}: operand must be a string or integer")
    if value < 0:
        raise ValidationError(f"{where}: negative literal {text!r}")
    if value > MASK64:
        raise ValidationError(f"{where}: literal overflow {text!r} (> 64 bits)")
    return value


def _parse_operand(raw, where: str) -> Operand:
    if isinstance(raw, str):
        t = raw.strip()
        if _IDENT_RE.match(t) or _ELEM_RE.match(t):
            return Var(t)
    return Lit(_parse_literal(raw, where))


def _output_widths(op: Operation) -> list:
    o = op.operator
    if o in (Operator.ADDCARRYX, Operator.SUBBORROWX):
        return [Width.U64, Width.U1]
    if o is Operator.MULX:
        return [Width.U64, Width.U64]
    if o is Operator.NOT:
        return [Width.U1]
    if o is Operator.STATIC_CAST:
        w = op.inputs[0].value
        return [Width.U1 if w == 1 else Width.U64]
    return [Width.U64] * len(op.outputs)


def parse_function(json_text: str) -> FunctionSpec:
    """Parse and validate a function description; see module docstring for the schema."""
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    for key in ("name", "args", "returns", "body"):
        if key not in doc:
            raise SchemaError(f"missing top-level field {key!r}")

    name = doc["name"]
    if not isinstance(name, str) or not _IDENT_RE.match(name):
        raise SchemaError(f"bad function name {name!r}")

    args = []
    for i, a in enumerate(doc["args"]):
        if not isinstance(a, dict) or "name" not in a or "type" not in a:
            raise SchemaError(f"args[{i}] must be an object with 'name' and 'type'")
        aname, atype = a["name"], a["type"]
        if not isinstance(aname, str) or not _IDENT_RE.match(aname):
            raise SchemaError(f"args[{i}]: bad argument name {aname!r}")
        m = _ARRAY_TYPE_RE.match(atype) if isinstance(atype, str) else None
        if atype == "u64":
            args.append(Argument(aname, 0))
        elif m:
            length = int(m.group(1))
            if length == 0:
                raise SchemaError(f"args[{i}]: zero-length array {atype!r}")
            args.append(Argument(aname, length))
        else:
            raise SchemaError(f"args[{i}]: unknown type {atype!r}")
    if len({a.name for a in args}) != len(args):
        raise ValidationError("duplicate argument names")

    body = []
    for i, entry in enumerate(doc["body"]):
        where = f"body[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: must be an object")
        for key in ("out", "op", "in"):
            if key not in entry:
                raise SchemaError(f"{where}: missing field {key!r}")
        try:
            operator = Operator(entry["op"])
        except ValueError:
            raise SchemaError(f"{where}: unknown operator {entry['op']!r}") from None
        outs = entry["out"]
        if not isinstance(outs, list) or not all(
            isinstance(o, str) and _IDENT_RE.match(o) for o in outs
        ):
            raise SchemaError(f"{where}: 'out' must be a list of identifiers")
        ins = [_parse_operand(x, where) for x in entry["in"]]
        body.append(Operation(tuple(outs), operator, tuple(ins)))

    returns = doc["returns"]
    if not isinstance(returns, list) or not all(isinstance(r, str) for r in returns):
        raise SchemaError("'returns' must be a list of variable names")

    spec = FunctionSpec(name, tuple(args), tuple(returns), tuple(body), widths={})
    _validate(spec)
    return spec


def _validate(spec: FunctionSpec) -> None:
    defined = {}
    widths = spec.widths
    for a in spec.args:
        for elem in a.element_names():
            defined[elem] = -1
            widths[elem] = Width.U64

    def check_u1_operand(x: Operand, where: str, role: str):
        if isinstance(x, Lit):
            if x.value > 1:
                raise ValidationError(f"{where}: {role} literal must be 0 or 1")
        elif widths.get(x.name) != Width.U1:
            raise ValidationError(f"{where}: {role} {x.name!r} is not a u1 value")

    for i, op in enumerate(spec.body):
        where = f"body[{i}] ({op.operator.value})"
        n_in, n_out = ARITY[op.operator]
        if len(op.inputs) != n_in:
            raise ValidationError(
                f"{where}: expects {n_in} inputs, got {len(op.inputs)}"
            )
        if len(op.outputs) != n_out:
            raise ValidationError(
                f"{where}: expects {n_out} outputs, got {len(op.outputs)}"
            )

        for x in op.inputs:
            if isinstance(x, Var) and x.name not in defined:
                raise ValidationError(f"{where}: use before definition of {x.name!r}")

        if op.operator in (Operator.SHL, Operator.SHR):
            amt = op.inputs[1]
            if not isinstance(amt, Lit):
                raise ValidationError(f"{where}: shift amount must be a literal")
            if amt.value >= 64:
                raise ValidationError(f"{where}: shift amount {amt.value} >= 64")
        if op.operator is Operator.STATIC_CAST:
            w = op.inputs[0]
            if not isinstance(w, Lit) or not (1 <= w.value <= 64):
                raise ValidationError(f"{where}: cast width must be a literal in 1..64")
        if op.operator in (Operator.ADDCARRYX, Operator.SUBBORROWX):
            check_u1_operand(op.inputs[0], where, "carry/borrow input")

        out_w = _output_widths(op)
        if op.operator is Operator.ASSIGN and isinstance(op.inputs[0], Var):
            out_w = [widths[op.inputs[0].name]]
        if op.operator is Operator.CMOVZNZ:
            branch_w = []
            for x in op.inputs[1:]:
                if isinstance(x, Lit):
                    branch_w.append(Width.U1 if x.value <= 1 else Width.U64)
                else:
                    branch_w.append(widths[x.name])
            if branch_w == [Width.U1, Width.U1]:
                out_w = [Width.U1]

        for o, w in zip(op.outputs, out_w):
            if o in defined:
                raise ValidationError(f"{where}: duplicate definition {o!r}")
            defined[o] = i
            widths[o] = w

    for r in spec.returns:
        if r not in defined:
            raise ValidationError(f"return value {r!r} is never defined")


def dependency_graph(spec: FunctionSpec) -> DepGraph:
    """Producer -> consumer edges over operation indices; acyclic by construction."""
    producer = {}
    for i, op in enumerate(spec.body):
        for o in op.outputs:
            producer[o] = i
    edges = set()
    for i, op in enumerate(spec.body):
        for x in op.inputs:
            if isinstance(x, Var):
                j = producer.get(x.name)
                if j is not None and j != i:
                    edges.add((j, i))
    return DepGraph(len(spec.body), frozenset(edges))


def stats(spec: FunctionSpec) -> dict:
    hist = Counter(op.operator.value for op in spec.body)
    return {"op_count": len(spec.body), "per_operator_histogram": dict(hist)}
