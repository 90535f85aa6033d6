"""Bit-exact interpreter for the straightline language; the ground truth
against which every generated machine-code candidate is checked.

Operator conventions (carry-in first, lo-before-hi for mulx, cmovznz
selecting the second value on nonzero) match the C code conventionally
produced for this input language; everything downstream relies on them:

* ``addcarryx(c, a, b)  -> (s, c')``  with ``s = (a+b+c) mod 2^64`` and
  ``c' = 1`` iff ``a+b+c >= 2^64``
* ``subborrowx(w, a, b) -> (d, w')``  with ``d = (a-b-w) mod 2^64`` and
  ``w' = 1`` iff ``a < b + w``
* ``mulx(a, b)          -> (lo, hi)`` of the 128-bit product, low limb first
* ``cmovznz(c, t0, t1)  -> t0`` if ``c == 0`` else ``t1``
* ``static_cast(w, x)   -> x mod 2^w``

The PRNG behind :func:`random_inputs` is the Mersenne Twister as exposed by
``random.Random.getrandbits(64)``, which is stable across CPython versions
and platforms, so golden files generated from a seed are portable.
"""

from __future__ import annotations

import random

from .errors import ArityError, WidthError
from .ir import ARITY, MASK64, FunctionSpec, Lit, Operator, Var


def _u1(x: int, what: str) -> int:
    if x > 1:
        raise WidthError(f"{what} must be a u1 value, got {x:#x}")
    return x


def eval_op(operator: Operator, inputs) -> tuple:
    """Evaluate one operator on concrete values; returns the output tuple."""
    n_in, _ = ARITY[operator]
    if len(inputs) != n_in:
        raise ArityError(f"{operator.value} expects {n_in} inputs, got {len(inputs)}")
    for x in inputs:
        if not (0 <= x <= MASK64):
            raise WidthError(f"input {x:#x} outside u64 range")

    o = operator
    if o is Operator.ADD:
        return ((inputs[0] + inputs[1]) & MASK64,)
    if o is Operator.SUB:
        return ((inputs[0] - inputs[1]) & MASK64,)
    if o is Operator.MUL:
        return ((inputs[0] * inputs[1]) & MASK64,)
    if o is Operator.AND:
        return (inputs[0] & inputs[1],)
    if o is Operator.OR:
        return (inputs[0] | inputs[1],)
    if o is Operator.BITNOT:
        return (~inputs[0] & MASK64,)
    if o is Operator.NOT:
        return (0 if inputs[0] else 1,)
    if o is Operator.SHL:
        if inputs[1] >= 64:
            raise WidthError(f"shift amount {inputs[1]} >= 64")
        return ((inputs[0] << inputs[1]) & MASK64,)
    if o is Operator.SHR:
        if inputs[1] >= 64:
            raise WidthError(f"shift amount {inputs[1]} >= 64")
        return (inputs[0] >> inputs[1],)
    if o is Operator.ASSIGN:
        return (inputs[0],)
    if o is Operator.ADDCARRYX:
        c = _u1(inputs[0], "carry-in")
        total = inputs[1] + inputs[2] + c
        return (total & MASK64, total >> 64)
    if o is Operator.SUBBORROWX:
        w = _u1(inputs[0], "borrow-in")
        diff = inputs[1] - inputs[2] - w
        return (diff & MASK64, 1 if diff < 0 else 0)
    if o is Operator.MULX:
        prod = inputs[0] * inputs[1]
        return (prod & MASK64, prod >> 64)
    if o is Operator.CMOVZNZ:
        return (inputs[1] if inputs[0] == 0 else inputs[2],)
    if o is Operator.STATIC_CAST:
        w = inputs[0]
        if not (1 <= w <= 64):
            raise WidthError(f"cast width {w} outside 1..64")
        return (inputs[1] & ((1 << w) - 1),)
    raise ArityError(f"unhandled operator {operator!r}")


def run(spec: FunctionSpec, inputs, order=None) -> tuple:
    """Execute ``spec`` on concrete argument values.

    ``inputs`` is one entry per argument: a list of ints for an array
    argument, a plain int for a scalar. ``order`` optionally evaluates the
    body in a different (dependency-respecting) operation order; the result
    is order-independent for any valid order.
    """
    if len(inputs) != len(spec.args):
        raise ArityError(
            f"{spec.name} takes {len(spec.args)} arguments, got {len(inputs)}"
        )
    env = {}
    for arg, value in zip(spec.args, inputs):
        if arg.is_array:
            if len(value) != arg.length:
                raise ArityError(
                    f"argument {arg.name} needs {arg.length} elements, got {len(value)}"
                )
            for elem, v in zip(arg.element_names(), value):
                env[elem] = v & MASK64
        else:
            env[arg.name] = value & MASK64

    indices = range(len(spec.body)) if order is None else order
    for i in indices:
        op = spec.body[i]
        concrete = [x.value if isinstance(x, Lit) else env[x.name] for x in op.inputs]
        results = eval_op(op.operator, concrete)
        for name, v in zip(op.outputs, results):
            env[name] = v
    return tuple(env[r] for r in spec.returns)


def random_inputs(seed: int, spec: FunctionSpec):
    """Deterministic uniform inputs in [0, 2^64) for every argument element."""
    rng = random.Random(seed)
    return inputs_from_rng(rng, spec)


def inputs_from_rng(rng: random.Random, spec: FunctionSpec):
    out = []
    for arg in spec.args:
        if arg.is_array:
            out.append([rng.getrandbits(64) for _ in range(arg.length)])
        else:
            out.append(rng.getrandbits(64))
    return out
