"""Shipped reference values and basis checkpoints."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


@dataclass(frozen=True)
class ReferenceValue:
    system: str
    state: str
    quantity: str
    value: float
    unit: str
    citation: str


# preset system name -> (system, state) key of the reference table
STATE_KEYS = {
    "H2": ("H2", "X1Sg+"),
    "He": ("He", "1_1S"),
    "He(2S)": ("He", "2_1S"),
    "HeH+": ("HeH+", "X1S+"),
    "H3+": ("H3+", "1A1'"),
}


def parse_reference_table(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        # state labels may carry a prime, so only double quotes delimit the citation
        head, _, cite = line.partition('"')
        fields = head.split() + [cite.rstrip().rstrip('"')]
        if len(fields) != 6:
            raise ValueError(f"reference table line {lineno}: expected 6 fields, got {len(fields)}")
        system, state, qty, value, unit, cite = fields
        out[(system, state, qty)] = ReferenceValue(system, state, qty, float(value), unit, cite)
    return out


@lru_cache(maxsize=1)
def reference_values() -> dict:
    text = resources.files("nopair.data").joinpath("reference_values.txt").read_text()
    return parse_reference_table(text)


def reference(system_name: str, quantity: str) -> ReferenceValue | None:
    key = STATE_KEYS.get(system_name)
    if key is None:
        return None
    return reference_values().get(key + (quantity,))


def builtin_checkpoint(system_name: str):
    """Path-like handle of the shipped basis for a preset system, or None."""
    stem = system_name.lower().replace("+", "p").replace("(", "_").replace(")", "")
    f = resources.files("nopair.data").joinpath(f"basis_{stem}.txt")
    return f if f.is_file() else None
