"""Small report container shared by the validation experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError


@dataclass
class ExperimentReport:
    label: str
    grid: list[float]
    values: list[float]
    fit: tuple[float, float, float]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise InputError("grid and values must have equal length")

    def as_dict(self) -> dict:
        slope, intercept, stderr = self.fit
        return {"label": self.label, "grid": list(self.grid), "values": list(self.values),
                "fit": {"slope": slope, "intercept": intercept, "stderr": stderr},
                "metadata": self.metadata}
