from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import DimensionMismatch, MalformedRecord


@dataclass(frozen=True)
class RecordLayout:
    """Named column roles of a flat record, e.g. ``{'z': [0], 't': [1], 'y': [2]}``"""
    roles: Dict[str, List[int]]

    def __post_init__(self):
        for role, columns in self.roles.items():
            if not columns or any(c < 0 for c in columns):
                raise ValueError(f"role '{role}' needs non-negative column offsets")

    @classmethod
    def sequential(cls, **widths: int) -> 'RecordLayout':
        """Lays roles out one after another in keyword order"""
        roles, offset = {}, 0
        for role, width in widths.items():
            roles[role] = list(range(offset, offset + width))
            offset += width
        return cls(roles)

    @property
    def width(self) -> int:
        return 1 + max(c for columns in self.roles.values() for c in columns)

    def columns(self, records: np.ndarray, role: str) -> np.ndarray:
        if role not in self.roles:
            raise MalformedRecord(f"layout has no '{role}' role")
        return records[:, self.roles[role]]

    def column(self, records: np.ndarray, role: str) -> np.ndarray:
        return self.columns(records, role)[:, 0]

    def decode(self, records) -> np.ndarray:
        records = np.array(records, dtype=float)
        if records.ndim == 1:
            records = records[None, :]
        if records.ndim != 2:
            raise MalformedRecord(f"records must be a 2-d array, got shape {records.shape}")
        if records.shape[1] < self.width:
            raise MalformedRecord(f"records have {records.shape[1]} columns, layout needs {self.width}")
        if not np.all(np.isfinite(records[:, :self.width])):
            raise MalformedRecord("records contain non-finite values")
        return records

    def to_dict(self) -> Dict[str, List[int]]:
        return {role: list(columns) for role, columns in self.roles.items()}


@dataclass(frozen=True)
class Dataset:
    """n raw records plus their instrument projections"""
    records: np.ndarray
    instruments: np.ndarray
    column_names: Optional[Sequence[str]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.records.ndim != 2 or self.records.shape[0] < 1:
            raise DimensionMismatch("a dataset needs at least one record")
        if self.instruments.ndim != 2 or self.instruments.shape[0] != self.records.shape[0]:
            raise DimensionMismatch(
                f"{self.instruments.shape[0]} instrument rows for {self.records.shape[0]} records"
            )

    @classmethod
    def from_records(cls, problem, records, column_names: Optional[Sequence[str]] = None) -> 'Dataset':
        records = problem.layout.decode(records)
        instruments = problem.instruments(records)
        records.setflags(write=False)
        instruments.setflags(write=False)
        return cls(records=records, instruments=instruments, column_names=column_names)

    @property
    def n(self) -> int:
        return self.records.shape[0]

    @property
    def instrument_dim(self) -> int:
        return self.instruments.shape[1]

    def take(self, index) -> 'Dataset':
        return Dataset(self.records[index], self.instruments[index], self.column_names)
