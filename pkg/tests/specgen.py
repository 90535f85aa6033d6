"""Random valid function specs for property-style tests."""

import json

from slopt.ir import parse_function

_BINOPS = ["+", "-", "&", "or"]


def random_spec(rng, n_ops=12, name="rand"):
    """A random straightline function over two 2-limb array arguments."""
    u64 = ["a[0]", "a[1]", "b[0]", "b[1]"]
    u1 = []
    body = []
    serial = [0]

    def fresh(prefix):
        serial[0] += 1
        return f"{prefix}{serial[0]}"

    while len(body) < n_ops:
        kind = rng.choice(
            _BINOPS + ["*", "<<", ">>", "=", "~", "!", "addcarryx",
                       "subborrowx", "mulx", "cmovznz", "static_cast"]
        )
        if kind in _BINOPS:
            out = fresh("v")
            body.append({"out": [out], "op": kind,
                         "in": [rng.choice(u64), rng.choice(u64)]})
            u64.append(out)
        elif kind == "*":
            out = fresh("v")
            other = hex(rng.choice([2, 3, 5, 8, 9, 10, 38, 0x13]))
            ins_ = [rng.choice(u64), other]
            if rng.random() < 0.5:
                ins_ = [rng.choice(u64), rng.choice(u64)]
            body.append({"out": [out], "op": "*", "in": ins_})
            u64.append(out)
        elif kind in ("<<", ">>"):
            out = fresh("v")
            body.append({"out": [out], "op": kind,
                         "in": [rng.choice(u64), hex(rng.randrange(1, 64))]})
            u64.append(out)
        elif kind in ("=", "~"):
            out = fresh("v")
            body.append({"out": [out], "op": kind, "in": [rng.choice(u64)]})
            u64.append(out)
        elif kind == "!":
            out = fresh("n")
            body.append({"out": [out], "op": "!", "in": [rng.choice(u64)]})
            u1.append(out)
        elif kind in ("addcarryx", "subborrowx"):
            out, c = fresh("s"), fresh("c")
            cin = rng.choice(u1) if u1 and rng.random() < 0.6 else rng.choice(["0x0", "0x1"])
            body.append({"out": [out, c], "op": kind,
                         "in": [cin, rng.choice(u64), rng.choice(u64)]})
            u64.append(out)
            u1.append(c)
        elif kind == "mulx":
            lo, hi = fresh("lo"), fresh("hi")
            body.append({"out": [lo, hi], "op": "mulx",
                         "in": [rng.choice(u64), rng.choice(u64)]})
            u64.extend([lo, hi])
        elif kind == "cmovznz":
            out = fresh("v")
            cond = rng.choice(u1) if u1 else "0x1"
            body.append({"out": [out], "op": "cmovznz",
                         "in": [cond, rng.choice(u64), rng.choice(u64)]})
            u64.append(out)
        else:  # static_cast
            out = fresh("v")
            w = rng.choice([8, 16, 32, 51, 64])
            body.append({"out": [out], "op": "static_cast",
                         "in": [hex(w), rng.choice(u64)]})
            u64.append(out)

    defined = [o for op in body for o in op["out"]]
    returns = rng.sample(defined, min(len(defined), rng.randrange(1, 4)))
    doc = {
        "name": name,
        "args": [{"name": "a", "type": "u64[2]"}, {"name": "b", "type": "u64[2]"}],
        "returns": returns,
        "body": body,
    }
    return parse_function(json.dumps(doc))
