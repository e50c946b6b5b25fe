"""Trajectory record shared by the dynamics driver, monitors and CSV output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralInterface

COLUMNS = (
    "t",
    "f11",
    "f21",
    "f11_nu",
    "f21_nu",
    "l2",
    "h_half",
    "energy_E",
    "strip_nu_hat",
    "omega1_f01",
    "omega3_f01",
    "flags",
)

DIAGNOSTIC_COLUMNS = (
    "t",
    "dt",
    "f01",
    "h1",
    "h_half_nu",
    "h1_nu",
    "h3half_nu",
    "l2_nu",
    "iterations",
    "contraction_ratio",
    "residual",
    "bound_max_ratio",
    "bounds_pass",
)


@dataclass
class TrajectoryRecord:
    rows: list[dict] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    snapshots: list[SpectralInterface] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    bound_failures: list[tuple[float, str, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def series(self, name: str) -> np.ndarray:
        if name in COLUMNS:
            return np.array([r[name] for r in self.rows], dtype=float)
        return np.array([r[name] for r in self.diagnostics], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.series("t")

    @property
    def blew_up(self) -> bool:
        return bool(self.rows) and "blowup" in self.rows[-1]["flags"].split("|")

    def append(self, row: dict, diag: dict | None = None) -> None:
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError("record times must be strictly increasing")
        if self.blew_up:
            raise ValueError("cannot append after a blow-up row")
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"row misses columns {sorted(missing)}")
        self.rows.append(row)
        if diag is not None:
            self.diagnostics.append(diag)
