"""Pass/fail records shared by every diagnostic routine."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "value": float(self.value), "bound": float(self.bound),
                "passed": bool(self.passed), "note": self.note}


@dataclass
class DiagnosticsReport:
    name: str
    checks: list = field(default_factory=list)

    def add(self, name, value, bound, passed, note=""):
        self.checks.append(Check(name, float(value), float(bound), bool(passed), note))
        return self

    def upper(self, name, value, bound, note=""):
        """Record the check ``value <= bound``."""
        return self.add(name, value, bound, value <= bound, note)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"name": self.name, "passed": self.passed,
                "checks": [c.as_dict() for c in self.checks]}

    def summary(self):
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        for c in self.checks:
            flag = "ok " if c.passed else "BAD"
            lines.append(f"  {flag} {c.name}: {c.value:.6g} (bound {c.bound:.6g}) {c.note}".rstrip())
        return "\n".join(lines)
