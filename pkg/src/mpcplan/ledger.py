"""Append-only record of what each party observed during a run."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

COLUMN_VALUES = "ColumnValues"
CARDINALITY = "Cardinality"
PERMUTATION = "Permutation"
OUTPUT = "Output"
EVENT_KINDS = (COLUMN_VALUES, CARDINALITY, PERMUTATION, OUTPUT)


@dataclass(frozen=True)
class LeakageEvent:
    seq: int
    step: int | None
    observer: int
    kind: str
    relation: str
    column: str | None = None

    @property
    def item(self):
        return (self.kind, self.relation, self.column)


class LeakageLedger:
    def __init__(self):
        self._events = []

    def __len__(self):
        return len(self._events)

    def __iter__(self):
        return iter(self._events)

    @property
    def events(self):
        return tuple(self._events)

    def record(self, observer, kind, relation, column=None, step=None):
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ev = LeakageEvent(len(self._events), step, int(observer), kind, relation, column)
        self._events.append(ev)
        return ev

    def column_values(self, relation, columns, observers, step=None):
        for o in sorted(observers):
            for c in columns:
                self.record(o, COLUMN_VALUES, relation, c, step)

    def cardinality(self, relation, observers, step=None):
        for o in sorted(observers):
            self.record(o, CARDINALITY, relation, None, step)

    def permutation(self, relation, observers, step=None):
        for o in sorted(observers):
            self.record(o, PERMUTATION, relation, None, step)

    def output(self, relation, observers, step=None):
        for o in sorted(observers):
            self.record(o, OUTPUT, relation, None, step)

    def for_observer(self, observer, kind=None):
        return [e for e in self._events if e.observer == observer and (kind is None or e.kind == kind)]

    def to_json(self):
        return [asdict(e) for e in self._events]

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, records):
        led = cls()
        for r in records:
            led._events.append(
                LeakageEvent(r["seq"], r["step"], r["observer"], r["kind"], r["relation"], r.get("column"))
            )
        return led
