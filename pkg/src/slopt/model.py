"""Single point of truth for the optimization state: the current operation
order and the per-operation instruction template, plus the two mutation
kinds (reorder within the legal dependency window, template swap) and exact
revert.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .errors import SloptError, StaleRecordError, ValidationError
from .ir import DepGraph, FunctionSpec, dependency_graph

REORDER = "reorder"
TEMPLATE = "template"

_RETRIES = 8


@dataclass(frozen=True)
class TemplateId:
    operator: str
    variant: int


@dataclass
class MutationRecord:
    kind: str
    op_id: int
    old: object  # old order position, or old TemplateId
    new: object
    stamp: int


def init_schedule(spec: FunctionSpec, dep: DepGraph):
    """Stable topological order: among ready operations, lowest index first."""
    n = dep.n
    indeg = [0] * n
    succs = [[] for _ in range(n)]
    for (p, c) in dep.edges:
        indeg[c] += 1
        succs[p].append(c)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        changed = False
        for c in succs[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    assert len(order) == n
    return order


def is_topological(order, dep: DepGraph) -> bool:
    pos = {op: i for i, op in enumerate(order)}
    return all(pos[p] < pos[c] for (p, c) in dep.edges)


class Model:
    """Mutable optimization state over an immutable FunctionSpec."""

    def __init__(self, spec: FunctionSpec, features=("adx", "bmi2")):
        from .emitter import catalog_for  # deferred: emitter imports nothing from here

        self.spec = spec
        self.features = frozenset(features)
        self.dep = dependency_graph(spec)
        self.order = init_schedule(spec, self.dep)
        self.catalogs = [catalog_for(spec, i, self.features) for i in range(len(spec.body))]
        self.templates = [
            TemplateId(spec.body[i].operator.value, 0) for i in range(len(spec.body))
        ]
        self._stamp = 0
        self._last = None

    # -- scheduling ---------------------------------------------------------

    def legal_window(self, op_id: int):
        """Insertion-index range [lo, hi] for op_id in the order with it removed."""
        reduced = [o for o in self.order if o != op_id]
        pos = {o: i for i, o in enumerate(reduced)}
        preds = self.dep.preds(op_id)
        succs = self.dep.succs(op_id)
        lo = max((pos[p] + 1 for p in preds), default=0)
        hi = min((pos[s] for s in succs), default=len(reduced))
        return lo, hi

    # -- mutation -----------------------------------------------------------

    def mutate(self, rng: random.Random) -> MutationRecord:
        """Apply one random mutation; returns the record needed to revert it."""
        kind = REORDER if rng.random() < 0.5 else TEMPLATE
        record = None
        if kind == REORDER:
            record = self._mutate_reorder(rng)
            if record is None:
                record = self._mutate_template(rng)
        else:
            record = self._mutate_template(rng)
            if record is None:
                record = self._mutate_reorder(rng)
        if record is None:
            raise SloptError("function admits no mutation (no freedom in order or templates)")
        self._stamp += 1
        record.stamp = self._stamp
        self._last = record
        return record

    def _reorder_at(self, rng, op_id):
        # Removing op_id and re-inserting at its old index restores the order,
        # so the legal window always contains old_pos; pick any other slot.
        lo, hi = self.legal_window(op_id)
        if hi - lo < 1:
            return None
        old_pos = self.order.index(op_id)
        new_pos = rng.randrange(lo, hi)
        if new_pos >= old_pos:
            new_pos += 1  # skip the current slot, stay uniform over the rest
        self.order.remove(op_id)
        self.order.insert(new_pos, op_id)
        return MutationRecord(REORDER, op_id, old_pos, new_pos, 0)

    def _mutate_reorder(self, rng):
        n = len(self.order)
        for _ in range(_RETRIES):
            record = self._reorder_at(rng, self.order[rng.randrange(n)])
            if record is not None:
                return record
        movable = [o for o in self.order if self.legal_window(o)[1] - self.legal_window(o)[0] >= 1]
        if not movable:
            return None
        return self._reorder_at(rng, movable[rng.randrange(len(movable))])

    def _mutate_template(self, rng):
        eligible = [i for i, cat in enumerate(self.catalogs) if len(cat) >= 2]
        if not eligible:
            return None
        op_id = eligible[rng.randrange(len(eligible))]
        old = self.templates[op_id]
        choices = [v for v in range(len(self.catalogs[op_id])) if v != old.variant]
        new_variant = choices[rng.randrange(len(choices))]
        new = TemplateId(old.operator, new_variant)
        self.templates[op_id] = new
        return MutationRecord(TEMPLATE, op_id, old, new, 0)

    def revert(self, record: MutationRecord) -> None:
        if self._last is not record or record.stamp != self._stamp:
            raise StaleRecordError("record does not match the most recent mutation")
        if record.kind == REORDER:
            self.order.remove(record.op_id)
            self.order.insert(record.old, record.op_id)
        else:
            self.templates[record.op_id] = record.old
        self._last = None

    # -- (de)serialization --------------------------------------------------

    def template_for(self, op_id: int):
        return self.catalogs[op_id][self.templates[op_id].variant]

    def to_json(self) -> str:
        return json.dumps(
            {
                "function": self.spec.name,
                "features": sorted(self.features),
                "order": self.order,
                "templates": [t.variant for t in self.templates],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, spec: FunctionSpec, text: str) -> "Model":
        doc = json.loads(text)
        if doc.get("function") != spec.name:
            raise ValidationError(
                f"model is for {doc.get('function')!r}, not {spec.name!r}"
            )
        m = cls(spec, features=doc.get("features", ("adx", "bmi2")))
        order = doc["order"]
        if sorted(order) != list(range(len(spec.body))):
            raise ValidationError("saved order is not a permutation of the body")
        if not is_topological(order, m.dep):
            raise ValidationError("saved order violates data dependencies")
        m.order = list(order)
        variants = doc["templates"]
        if len(variants) != len(spec.body):
            raise ValidationError("template list length mismatch")
        for i, v in enumerate(variants):
            if not (0 <= v < len(m.catalogs[i])):
                raise ValidationError(f"template variant {v} out of range for op {i}")
            m.templates[i] = TemplateId(spec.body[i].operator.value, v)
        return m
