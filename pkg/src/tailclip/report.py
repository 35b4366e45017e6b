"""Pass/fail verdict records and report rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Verdict:
    criterion: str
    description: str
    observed: str
    threshold: str
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.criterion}: {self.description} (observed {self.observed}, require {self.threshold})"


@dataclass
class Report:
    experiment: str
    version: str
    master_seed: int
    wall_time_s: float = 0.0
    verdicts: list[Verdict] = field(default_factory=list)
    calibration: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def render_text(self) -> str:
        lines = [
            f"experiment: {self.experiment}",
            f"version: {self.version}",
            f"master_seed: {self.master_seed}",
            f"wall_time_s: {self.wall_time_s:.2f}",
        ]
        if self.calibration:
            lines.append("calibration:")
            for key in sorted(self.calibration):
                lines.append(f"  {key} = {self.calibration[key]}")
        if self.verdicts:
            lines.append("checks:")
            lines.extend("  " + v.line() for v in self.verdicts)
        else:
            lines.append("checks: none declared")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def verdict_jsonl(self) -> str:
        rows = []
        for v in self.verdicts:
            rows.append(
                json.dumps(
                    {
                        "experiment": self.experiment,
                        "criterion": v.criterion,
                        "description": v.description,
                        "observed": v.observed,
                        "threshold": v.threshold,
                        "passed": v.passed,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(rows) + ("\n" if rows else "")
