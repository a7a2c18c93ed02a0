"""Validation outcomes shared by the language frontends."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True, slots=True)
class Violation:
    rule: str
    where: Any
    detail: str = ""


@dataclass
class CheckReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, rule: str, where: Any, detail: str = "") -> None:
        self.violations.append(Violation(rule, where, detail))

    def to_dict(self) -> dict[str, Any]:
        return {
            "valid": self.valid,
            "violations": [
                {"rule": v.rule, "where": v.where, "detail": v.detail}
                for v in self.violations
            ],
        }
