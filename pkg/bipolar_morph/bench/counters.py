"""Per-layer arithmetic operation counters."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import pandas as pd

OP_KINDS = ("mults", "adds", "maxes", "exps", "lns", "compares")

# Layer kinds whose arithmetic is the network "core" (dot products or their BM replacement)
CORE_KINDS = frozenset({"conv", "fc", "bmconv", "bmfc"})


@dataclass
class OpTally:
    """Operation counts for one layer (or a total)."""

    mults: int = 0
    adds: int = 0
    maxes: int = 0
    exps: int = 0
    lns: int = 0
    compares: int = 0

    def add(self, **counts: int) -> None:
        """Accumulate counts; tallies only ever grow."""
        for kind, value in counts.items():
            if kind not in OP_KINDS:
                raise KeyError(f"Unknown operation kind: {kind}")
            if value < 0:
                raise ValueError(f"Operation counts are non-negative, got {kind}={value}")
            setattr(self, kind, getattr(self, kind) + int(value))

    def merge(self, other: OpTally) -> None:
        self.add(**other.as_dict())

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def scaled(self, factor: int) -> OpTally:
        return OpTally(**{kind: value * factor for kind, value in self.as_dict().items()})


@dataclass
class OpCounters:
    """Ordered per-layer tallies for one or more forward passes."""

    layers: dict[str, OpTally] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)

    def tally(self, layer: str, kind: str) -> OpTally:
        """Get (creating on first use) the tally for ``layer``."""
        if layer not in self.layers:
            self.layers[layer] = OpTally()
            self.kinds[layer] = kind
        return self.layers[layer]

    def merge(self, other: OpCounters) -> None:
        for layer, counts in other.layers.items():
            self.tally(layer, other.kinds[layer]).merge(counts)

    def reset(self) -> None:
        self.layers.clear()
        self.kinds.clear()

    def totals(self) -> OpTally:
        total = OpTally()
        for counts in self.layers.values():
            total.merge(counts)
        return total

    def core_totals(self) -> OpTally:
        """Totals over conv/fc layers and their BM counterparts only."""
        total = OpTally()
        for layer, counts in self.layers.items():
            if self.kinds[layer] in CORE_KINDS:
                total.merge(counts)
        return total

    def to_frame(self) -> pd.DataFrame:
        """One row per layer plus a TOTAL row."""
        rows = [
            {"layer": layer, "kind": self.kinds[layer], **counts.as_dict()}
            for layer, counts in self.layers.items()
        ]
        rows.append({"layer": "TOTAL", "kind": "", **self.totals().as_dict()})
        return pd.DataFrame(rows, columns=["layer", "kind", *OP_KINDS])
