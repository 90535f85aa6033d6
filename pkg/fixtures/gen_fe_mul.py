#!/usr/bin/env python3
"""Generate fe_mul.json: 4-limb (saturated u64) multiplication of field
elements mod 2^255-19.

Schoolbook row products via mulx, accumulated with addcarryx chains, then
the high 256 bits folded back with the identity 2^256 = 38 (mod 2^255-19).
The output is a 4-limb representative congruent to a*b; a final cmovznz
absorbs the (astronomically rare) wrap of the last fold. Run from the
fixtures directory: python3 gen_fe_mul.py
"""

import json

body = []
_ctr = [0]


def fresh(prefix):
    _ctr[0] += 1
    return f"{prefix}{_ctr[0]}"


def op(outs, operator, ins):
    body.append({"out": outs, "op": operator, "in": ins})


def mulx(a, b):
    lo, hi = fresh("lo"), fresh("hi")
    op([lo, hi], "mulx", [a, b])
    return lo, hi


def addcx(c, a, b):
    s, cout = fresh("s"), fresh("c")
    op([s, cout], "addcarryx", [c, a, b])
    return s, cout


def row_times(scalar, limbs):
    """5-limb value of scalar * limbs (4 limbs), as variable names."""
    parts = [mulx(scalar, x) for x in limbs]
    t0 = parts[0][0]
    t1, c = addcx("0x0", parts[0][1], parts[1][0])
    t2, c = addcx(c, parts[1][1], parts[2][0])
    t3, c = addcx(c, parts[2][1], parts[3][0])
    t4, _ = addcx(c, parts[3][1], "0x0")  # high limb < 2^64-1: no carry out
    return [t0, t1, t2, t3, t4]


def add_at(acc, row, offset):
    """acc += row * 2^(64*offset); acc limbs are variable names or None."""
    while len(acc) < offset + len(row):
        acc.append(None)
    c = "0x0"
    for k, r in enumerate(row):
        i = offset + k
        lhs = acc[i] if acc[i] is not None else "0x0"
        acc[i], c = addcx(c, lhs, r)
    return acc


a = [f"a[{i}]" for i in range(4)]
b = [f"b[{i}]" for i in range(4)]

# 8-limb product, row by row
acc = []
for i in range(4):
    acc = add_at(acc, row_times(a[i], b), i)

# fold the high half: 2^256 = 38 (mod p)
fold = row_times("0x26", acc[4:8])
lowpart = add_at(list(acc[:4]), fold, 0)  # 5 limbs, top <= 38

vlo, _ = mulx(lowpart[4], "0x26")
c0, e = addcx("0x0", lowpart[0], vlo)
c1, e = addcx(e, lowpart[1], "0x0")
c2, e = addcx(e, lowpart[2], "0x0")
c3, e = addcx(e, lowpart[3], "0x0")

# a carry here means the value wrapped 2^256: add 38 once more
w = fresh("w")
op([w], "cmovznz", [e, "0x0", "0x26"])
d0, f = addcx("0x0", c0, w)
d1, f = addcx(f, c1, "0x0")
d2, f = addcx(f, c2, "0x0")
d3, _ = addcx(f, c3, "0x0")

doc = {
    "name": "fe_mul",
    "args": [{"name": "a", "type": "u64[4]"}, {"name": "b", "type": "u64[4]"}],
    "returns": [d0, d1, d2, d3],
    "body": body,
}

with open("fe_mul.json", "w") as fobj:
    json.dump(doc, fobj, indent=2)
print(f"fe_mul.json: {len(body)} operations")
