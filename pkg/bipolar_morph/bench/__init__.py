"""Operation counting and runtime probes."""

from bipolar_morph.bench.counters import CORE_KINDS, OP_KINDS, OpCounters, OpTally

__all__ = ["CORE_KINDS", "OP_KINDS", "OpCounters", "OpTally"]
