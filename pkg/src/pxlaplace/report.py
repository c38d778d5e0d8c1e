"""Structured pass/fail reports for inequality checks.

Every verification routine in the toolkit returns a CheckReport: a list
of named one-sided inequalities, each recorded as lhs >= rhs with the
signed margin lhs - rhs.  An item passes iff its margin clears
-tolerance, where the tolerance is the item's own if set and the
report-wide default otherwise.  Reports render to aligned text and to
CSV rows so runs can be archived and diffed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = ["CheckItem", "CheckReport"]


@dataclass(frozen=True)
class CheckItem:
    label: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    tol: float | None = None  # None -> report-wide tolerance


@dataclass
class CheckReport:
    title: str
    tolerance: float
    items: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not np.isfinite(self.tolerance) or self.tolerance < 0:
            raise ParameterError(f"tolerance must be finite and >= 0, got {self.tolerance}")

    def add(self, label, lhs, rhs, tol=None):
        """Record the inequality lhs >= rhs; returns whether it passed."""
        lhs, rhs = float(lhs), float(rhs)
        margin = lhs - rhs
        eff = self.tolerance if tol is None else float(tol)
        passed = bool(margin >= -eff)
        self.items.append(CheckItem(label, lhs, rhs, margin, passed, tol))
        return passed

    def note(self, text):
        self.notes.append(str(text))

    def extend(self, other):
        """Absorb another report's items (their own tolerances pinned)."""
        for it in other.items:
            tol = it.tol if it.tol is not None else other.tolerance
            self.items.append(CheckItem(it.label, it.lhs, it.rhs, it.margin, it.passed, tol))
        self.notes.extend(other.notes)

    @property
    def all_passed(self):
        return all(it.passed for it in self.items)

    @property
    def n_failed(self):
        return sum(not it.passed for it in self.items)

    def worst(self):
        """Item with the smallest margin, or None for an empty report."""
        return min(self.items, key=lambda it: it.margin, default=None)

    def summary(self):
        n = len(self.items)
        state = "PASS" if self.all_passed else "FAIL"
        return (
            f"{self.title}: {state} ({n - self.n_failed}/{n} inequalities, "
            f"tolerance={self.tolerance:.3g})"
        )

    def to_text(self, max_items=None):
        """Aligned text table, one line per inequality."""
        lines = [self.summary()]
        shown = self.items if max_items is None else self.items[:max_items]
        width = max((len(it.label) for it in shown), default=0)
        for it in shown:
            tol = self.tolerance if it.tol is None else it.tol
            lines.append(
                f"  {it.label:<{width}}  lhs={it.lhs: .9e}  rhs={it.rhs: .9e}  "
                f"margin={it.margin: .9e}  tol={tol:.3g}  "
                f"{'PASS' if it.passed else 'FAIL'}"
            )
        if max_items is not None and len(self.items) > max_items:
            lines.append(f"  ... {len(self.items) - max_items} more items (see CSV)")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)

    def to_csv_rows(self):
        """Header plus one row per item, stable column order."""
        rows = [["label", "lhs", "rhs", "margin", "tolerance", "passed"]]
        for it in self.items:
            tol = self.tolerance if it.tol is None else it.tol
            rows.append(
                [
                    it.label,
                    f"{it.lhs:.17g}",
                    f"{it.rhs:.17g}",
                    f"{it.margin:.17g}",
                    f"{tol:.17g}",
                    str(it.passed),
                ]
            )
        return rows
