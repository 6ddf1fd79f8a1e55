"""Per-channel threshold tables: the ground truth for which alert is correct."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvalidTable, NonFiniteValue

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Band:
    lo: float  # inclusive
    hi: float  # exclusive
    action: int
    team: str
    severity: int

    def contains(self, value: float) -> bool:
        return self.lo <= value < self.hi


@dataclass(frozen=True)
class ThresholdTable:
    channel: str
    bands: tuple[Band, ...]
    units: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(sorted(self.bands, key=lambda b: (b.lo, b.hi))))

    @property
    def n_actions(self) -> int:
        return len(self.bands)

    def band_for_action(self, action: int) -> Band:
        for b in self.bands:
            if b.action == action:
                return b
        raise KeyError(action)

    def team(self, action: int) -> str:
        return self.band_for_action(action).team

    def severity(self, action: int) -> int:
        return self.band_for_action(action).severity

    def action_space(self) -> "ActionSpace":
        labels = tuple(self.band_for_action(a).team for a in range(self.n_actions))
        return ActionSpace(self.n_actions, labels)

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "units": self.units,
            "bands": [
                {"lo": _fmt_bound(b.lo), "hi": _fmt_bound(b.hi), "action": b.action,
                 "team": b.team, "severity": b.severity}
                for b in self.bands
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "ThresholdTable":
        bands = tuple(
            Band(_parse_bound(b["lo"]), _parse_bound(b["hi"]), int(b["action"]),
                 str(b.get("team", "")), int(b.get("severity", 0)))
            for b in d["bands"]
        )
        table = cls(str(d["channel"]), bands, str(d.get("units", "")))
        if validate:
            problems = validate_table(table)
            if problems:
                raise InvalidTable(f"{table.channel}: " + "; ".join(problems))
        return table


@dataclass(frozen=True)
class ActionSpace:
    n: int
    labels: tuple[str, ...]


def _parse_bound(x) -> float:
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("-inf", "-infinity"):
            return -math.inf
        if s in ("+inf", "inf", "infinity", "+infinity"):
            return math.inf
        return float(s)
    return float(x)


def _fmt_bound(x: float):
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return x


def correct_action(table: ThresholdTable, value: float) -> int:
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteValue(f"{table.channel}: {value}")
    for b in table.bands:
        if b.contains(value):
            return b.action
    raise InvalidTable(f"{table.channel}: no band covers {value}")


def correct_actions(table: ThresholdTable, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(table.channel)
    uppers = np.array([b.hi for b in table.bands])
    actions = np.array([b.action for b in table.bands])
    # bands are sorted and contiguous: index of first band whose upper bound exceeds v
    return actions[np.searchsorted(uppers, values, side="right")]


def validate_table(table: ThresholdTable) -> list[str]:
    """Return human-readable violations; an empty list means the table is valid."""
    problems = []
    bands = table.bands
    if not bands:
        return ["table has no bands"]
    for b in bands:
        if not b.lo < b.hi:
            problems.append(f"empty band [{b.lo}, {b.hi})")
    if bands[0].lo != -math.inf:
        problems.append(f"gap (-inf, {bands[0].lo})")
    if bands[-1].hi != math.inf:
        problems.append(f"gap [{bands[-1].hi}, +inf)")
    for a, b in zip(bands, bands[1:]):
        if a.hi < b.lo:
            problems.append(f"gap [{a.hi}, {b.lo})")
        elif a.hi > b.lo:
            problems.append(f"overlap [{b.lo}, {min(a.hi, b.hi)})")
    ids = [b.action for b in bands]
    dupes = sorted({a for a in ids if ids.count(a) > 1})
    for a in dupes:
        problems.append(f"duplicate action id {a}")
    if not dupes and sorted(ids) != list(range(len(ids))):
        problems.append(f"action ids {sorted(ids)} are not 0..{len(ids) - 1}")
    n_normal = sum(b.severity == 0 for b in bands)
    if n_normal != 1:
        problems.append(f"expected exactly one severity-0 band, found {n_normal}")
    if len(bands) < 2:
        problems.append("need at least two actions")
    return problems


def severity_lint(table: ThresholdTable) -> list[str]:
    """Warn when severity does not grow with distance from the normal band."""
    normal = [i for i, b in enumerate(table.bands) if b.severity == 0]
    if len(normal) != 1:
        return []
    k = normal[0]
    warnings = []
    for side in (table.bands[k::-1], table.bands[k:]):
        ranks = [b.severity for b in side]
        if any(y < x for x, y in zip(ranks, ranks[1:])):
            warnings.append(f"{table.channel}: severity decreases away from the normal band")
    return warnings


def range_mismatch_lint(table: ThresholdTable, values, limit: float = 0.9) -> list[str]:
    """Flag data that mostly falls outside the normal band, usually a units problem."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return []
    normal = next(b for b in table.bands if b.severity == 0)
    frac = float(np.mean(~((values >= normal.lo) & (values < normal.hi))))
    if frac > limit:
        msg = (f"{table.channel}: {frac:.0%} of observed values fall outside the normal band; "
               f"check units ({table.units or 'unspecified'})")
        log.warning(msg)
        return [msg]
    return []


def load_tables(path: str | Path) -> dict[str, ThresholdTable]:
    """Load a JSON file holding one table object or a list of them."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return tables_from_json(raw)


def tables_from_json(raw) -> dict[str, ThresholdTable]:
    items = raw if isinstance(raw, list) else raw.get("tables", [raw]) if isinstance(raw, dict) else None
    if items is None:
        raise InvalidTable("threshold config must be an object or a list of objects")
    tables = [ThresholdTable.from_dict(d) for d in items]
    return {t.channel: t for t in tables}


def save_tables(tables: Iterable[ThresholdTable], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in tables], fh, indent=2)
        fh.write("\n")


def five_band(channel: str, cuts: tuple[float, float, float, float], units: str = "",
              teams: tuple[str, str] = ("ward-nurse", "rapid-response")) -> ThresholdTable:
    """Symmetric table: high-alert | low-alert | normal | low-alert | high-alert.

    Action ids: 0 normal, 1 low-alert below, 2 low-alert above,
    3 high-alert below, 4 high-alert above.
    """
    a, b, c, d = cuts
    inf = math.inf
    low, high = teams
    return ThresholdTable(channel, (
        Band(-inf, a, 3, high, 2),
        Band(a, b, 1, low, 1),
        Band(b, c, 0, "none", 0),
        Band(c, d, 2, low, 1),
        Band(d, inf, 4, high, 2),
    ), units)


# Illustrative defaults only; not clinical guidance.
DEMO_TABLES = {
    "heart_rate": five_band("heart_rate", (40, 51, 100, 111), "bpm"),
    "respiration": five_band("respiration", (9, 12, 21, 25), "breaths/min"),
    "temperature": five_band("temperature", (35.0, 36.0, 38.0, 39.0), "degC"),
}
