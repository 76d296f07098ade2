"""Sparse binary response matrices stored as (person, item, response) triplets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """An ``m x n`` binary matrix with explicit missingness.

    Only observed cells are stored. ``person_ids`` and ``item_ids`` label the
    rows and columns; sub-matrices keep the labels of the matrix they were cut
    from, so a cell can always be traced back to its origin.
    """

    persons: np.ndarray
    items: np.ndarray
    responses: np.ndarray
    shape: tuple[int, int]
    person_ids: np.ndarray = field(default=None)
    item_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        m, n = (int(s) for s in self.shape)
        persons = np.asarray(self.persons, dtype=np.int64).ravel()
        items = np.asarray(self.items, dtype=np.int64).ravel()
        responses = np.asarray(self.responses, dtype=np.float64).ravel()
        if not (len(persons) == len(items) == len(responses)):
            raise InvalidArgumentError("persons, items and responses must have equal length")
        if m < 0 or n < 0:
            raise InvalidArgumentError(f"invalid shape {self.shape}")
        if len(persons):
            if persons.min() < 0 or persons.max() >= m or items.min() < 0 or items.max() >= n:
                raise InvalidArgumentError("cell index out of range")
            if not np.all((responses == 0) | (responses == 1)):
                raise InvalidArgumentError("responses must be 0 or 1")
            keys = persons * n + items
            if len(np.unique(keys)) != len(keys):
                raise InvalidArgumentError("duplicate (person, item) cells")
        person_ids = np.arange(m) if self.person_ids is None else np.asarray(self.person_ids)
        item_ids = np.arange(n) if self.item_ids is None else np.asarray(self.item_ids)
        if len(person_ids) != m or len(item_ids) != n:
            raise InvalidArgumentError("id arrays must match the matrix shape")
        for name, value in [
            ("persons", persons),
            ("items", items),
            ("responses", responses),
            ("shape", (m, n)),
            ("person_ids", person_ids),
            ("item_ids", item_ids),
        ]:
            object.__setattr__(self, name, value)

    @classmethod
    def from_dense(cls, dense, person_ids=None, item_ids=None) -> ResponseMatrix:
        """Build from a 2-d array where NaN marks a missing cell."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise InvalidArgumentError("dense matrix must be 2-d")
        rows, cols = np.nonzero(~np.isnan(dense))
        return cls(rows, cols, dense[rows, cols], dense.shape, person_ids, item_ids)

    @property
    def m(self) -> int:
        return self.shape[0]

    @property
    def n(self) -> int:
        return self.shape[1]

    @property
    def n_obs(self) -> int:
        return len(self.responses)

    def __len__(self):
        return self.n_obs

    def __repr__(self):
        return f"ResponseMatrix(shape={self.shape}, observed={self.n_obs})"

    def to_dense(self) -> np.ndarray:
        out = np.full(self.shape, np.nan)
        out[self.persons, self.items] = self.responses
        return out

    def take(self, which) -> ResponseMatrix:
        """Keep only the selected entries (boolean mask or index array); shape is unchanged."""
        return ResponseMatrix(
            self.persons[which],
            self.items[which],
            self.responses[which],
            self.shape,
            self.person_ids,
            self.item_ids,
        )

    def select_persons(self, rows) -> ResponseMatrix:
        """Restrict to the given person rows, renumbered densely in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        remap = np.full(self.m, -1, dtype=np.int64)
        remap[rows] = np.arange(len(rows))
        keep = remap[self.persons] >= 0
        return ResponseMatrix(
            remap[self.persons[keep]],
            self.items[keep],
            self.responses[keep],
            (len(rows), self.n),
            self.person_ids[rows],
            self.item_ids,
        )

    def stack_persons(self, other: ResponseMatrix) -> ResponseMatrix:
        """Row-wise union: ``other``'s persons are appended after this matrix's."""
        if other.n != self.n:
            raise InvalidArgumentError("matrices must share the item set")
        return ResponseMatrix(
            np.concatenate([self.persons, other.persons + self.m]),
            np.concatenate([self.items, other.items]),
            np.concatenate([self.responses, other.responses]),
            (self.m + other.m, self.n),
            np.concatenate([self.person_ids, other.person_ids]),
            self.item_ids,
        )

    def union(self, other: ResponseMatrix) -> ResponseMatrix:
        """Cell-wise union of two disjoint entry sets over the same shape."""
        if other.shape != self.shape:
            raise InvalidArgumentError("shapes differ")
        return ResponseMatrix(
            np.concatenate([self.persons, other.persons]),
            np.concatenate([self.items, other.items]),
            np.concatenate([self.responses, other.responses]),
            self.shape,
            self.person_ids,
            self.item_ids,
        )

    def cell_keys(self) -> set:
        """Observed cells as ``(person_id, item_id)`` labels."""
        return set(zip(self.person_ids[self.persons].tolist(), self.item_ids[self.items].tolist()))

    def person_counts(self) -> np.ndarray:
        return np.bincount(self.persons, minlength=self.m)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n)
