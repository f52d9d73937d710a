"""Labeled multivariate time-series container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import TimeSeries

__all__ = ["LabeledDataset"]


@dataclass
class LabeledDataset:
    """Samples stacked as ``x`` with shape (N, V, T).

    ``domains`` is either None or an int array of length N; -1 marks a sample
    without a domain id.
    """

    x: np.ndarray
    labels: np.ndarray
    num_classes: int
    domains: np.ndarray | None = None
    sample_rate_hz: float = 1.0
    name: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x)
        if self.x.ndim != 3:
            raise ValueError(f"x must be (N, V, T), got shape {self.x.shape}")
        if not np.issubdtype(self.x.dtype, np.floating):
            self.x = self.x.astype(np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) != len(self.x):
            raise ValueError("labels and samples differ in length")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.domains is not None:
            self.domains = np.asarray(self.domains, dtype=np.int64).reshape(-1)
            if len(self.domains) != len(self.x):
                raise ValueError("domains and samples differ in length")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_variates(self) -> int:
        return self.x.shape[1]

    @property
    def length(self) -> int:
        return self.x.shape[2]

    @property
    def samples(self) -> list[TimeSeries]:
        return [TimeSeries(s, self.sample_rate_hz) for s in self.x]

    def subset(self, idx, name: str | None = None) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.x[idx],
            self.labels[idx],
            self.num_classes,
            None if self.domains is None else self.domains[idx],
            self.sample_rate_hz,
            self.name if name is None else name,
        )

    def with_x(self, x: np.ndarray, name: str | None = None) -> "LabeledDataset":
        """Same labels and domains, new sample values."""
        return LabeledDataset(
            x,
            self.labels.copy(),
            self.num_classes,
            None if self.domains is None else self.domains.copy(),
            self.sample_rate_hz,
            self.name if name is None else name,
        )

    def select_domains(self, ids) -> "LabeledDataset":
        if self.domains is None:
            raise ValueError("dataset carries no domain ids")
        return self.subset(np.flatnonzero(np.isin(self.domains, list(ids))))

    @classmethod
    def empty_like(cls, other: "LabeledDataset") -> "LabeledDataset":
        return cls(
            np.zeros((0,) + other.x.shape[1:], dtype=other.x.dtype),
            np.zeros(0, dtype=np.int64),
            other.num_classes,
            None if other.domains is None else np.zeros(0, dtype=np.int64),
            other.sample_rate_hz,
            other.name,
        )

    def equals(self, other: "LabeledDataset") -> bool:
        same_domains = (self.domains is None and other.domains is None) or (
            self.domains is not None and other.domains is not None and np.array_equal(self.domains, other.domains)
        )
        return (
            self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.labels, other.labels)
            and self.num_classes == other.num_classes
            and self.sample_rate_hz == other.sample_rate_hz
            and same_domains
        )
