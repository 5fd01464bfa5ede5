"""Finite measure spaces and the geometry a matrix kernel induces on them.

An :class:`AtomSpace` is an ordered finite list of labelled points, each
carrying a coordinate vector and a nonnegative measure weight.  A matrix
kernel turns the atom set into a pseudo-metric space: ``quotient`` glues
atoms the kernel cannot distinguish, and ``support`` returns the
tolerance-closure of the positive-mass atoms.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - annotations only, avoids an import cycle
    from .kernels import MatrixKernel

__all__ = [
    "Atom",
    "AtomFileError",
    "AtomSpace",
    "PseudoMetricMatrix",
    "Quotient",
    "SupportSet",
    "load_atoms",
    "merge_classes",
    "pseudo_metric",
    "pseudo_metric_prime",
    "quotient",
    "support",
]

# Scale factor for the zero threshold of the kernel pseudo-metric.
QUOTIENT_TOL_SCALE = 1e-9


class AtomFileError(ValueError):
    """Raised when an atom CSV file cannot be parsed."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Atom:
    """A labelled point of the space with its coordinate vector."""

    label: str
    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class AtomSpace:
    """Ordered finite set of atoms with coordinates and measure weights.

    Parameters
    ----------
    labels:
        Unique atom identifiers, in declaration order.  The order is part of
        the data model; downstream arrays are indexed by it.
    coords:
        Array of shape ``(N, d)``.  ``d`` may be zero.
    mu:
        Nonnegative measure weights, shape ``(N,)``.
    """

    labels: tuple[str, ...]
    coords: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise ValueError("an atom space needs at least one atom")
        dupes = sorted(label for label, k in Counter(labels).items() if k > 1)
        if dupes:
            raise ValueError(f"duplicate atom labels: {dupes}")
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(len(labels), -1) if coords.size else coords.reshape(len(labels), 0)
        if coords.ndim != 2 or coords.shape[0] != len(labels):
            raise ValueError("coords must be a (n_atoms, dim) array")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.shape[0] != len(labels):
            raise ValueError("mu must provide one weight per atom")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            raise ValueError("mu weights must be finite and nonnegative")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "coords", _readonly(coords))
        object.__setattr__(self, "mu", _readonly(mu))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @cached_property
    def atoms(self) -> tuple[Atom, ...]:
        return tuple(Atom(label, self.coords[i]) for i, label in enumerate(self.labels))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown atom id: {label!r}") from None

    def total_mass(self) -> float:
        return float(np.sum(self.mu))


def load_atoms(path: str | Path) -> AtomSpace:
    """Read an atom CSV file with header ``id,w,c1,...,cd``."""
    path = Path(path)
    labels: list[str] = []
    weights: list[float] = []
    coords: list[list[float]] = []
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AtomFileError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        dim = len(header) - 2
        expected = ["id", "w"] + [f"c{k}" for k in range(1, dim + 1)]
        if dim < 0 or header != expected:
            raise AtomFileError(f"{path}: line 1: header must be id,w,c1,...,cd, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise AtomFileError(f"{path}: line {line_no}: expected {len(header)} fields, got {len(row)}")
            labels.append(row[0].strip())
            try:
                weights.append(float(row[1]))
                coords.append([float(cell) for cell in row[2:]])
            except ValueError as exc:
                raise AtomFileError(f"{path}: line {line_no}: {exc}") from None
    try:
        return AtomSpace(tuple(labels), np.asarray(coords, dtype=float).reshape(len(labels), dim), np.asarray(weights))
    except ValueError as exc:
        raise AtomFileError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class PseudoMetricMatrix:
    """Pairwise kernel distances plus the scale-aware zero threshold."""

    atoms: tuple[str, ...]
    d: np.ndarray
    quotient_tol: float

    def value(self, x: str, t: str) -> float:
        idx = {label: i for i, label in enumerate(self.atoms)}
        return float(self.d[idx[x], idx[t]])


def _specnorm_hermitian(m: np.ndarray) -> float:
    """Largest absolute eigenvalue; the input is symmetrized first."""
    if m.shape == (1, 1):
        return abs(float(m[0, 0].real))
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.max(np.abs(w))) if w.size else 0.0


def _quotient_tol(diag_norms: Sequence[float]) -> float:
    top = max(diag_norms) if len(diag_norms) else 0.0
    return QUOTIENT_TOL_SCALE * (1.0 + math.sqrt(max(top, 0.0)))


def pseudo_metric(space: AtomSpace, kernel: MatrixKernel) -> PseudoMetricMatrix:
    """Distance induced by the kernel sections.

    For atoms ``x, t`` the squared distance is the spectral norm of
    ``K(x,x) + K(t,t) - K(x,t) - K(t,x)``, which equals the squared operator
    gap ``sup_{|y| <= 1} |K_x y - K_t y|`` of the section maps.
    """
    atoms = space.atoms
    n_atoms = len(atoms)
    diag = [np.asarray(kernel.eval(a, a), dtype=complex) for a in atoms]
    norms = [_specnorm_hermitian(b) for b in diag]
    d = np.zeros((n_atoms, n_atoms))
    for i in range(n_atoms):
        for k in range(i + 1, n_atoms):
            delta = (
                diag[i]
                + diag[k]
                - np.asarray(kernel.eval(atoms[i], atoms[k]), dtype=complex)
                - np.asarray(kernel.eval(atoms[k], atoms[i]), dtype=complex)
            )
            d[i, k] = d[k, i] = math.sqrt(_specnorm_hermitian(delta))
    return PseudoMetricMatrix(space.labels, _readonly(d), _quotient_tol(norms))


def pseudo_metric_prime(space: AtomSpace, kernel: MatrixKernel) -> PseudoMetricMatrix:
    """Trace flavour of the kernel distance.

    ``d'(x,t)^2 = tr K(x,x) + tr K(t,t) - 2 Re tr K(t,x)`` sums the squared
    section gaps over components, so ``d <= d' <= sqrt(n) d``.
    """
    atoms = space.atoms
    n_atoms = len(atoms)
    diag = [np.asarray(kernel.eval(a, a), dtype=complex) for a in atoms]
    norms = [_specnorm_hermitian(b) for b in diag]
    traces = [float(np.trace(b).real) for b in diag]
    d = np.zeros((n_atoms, n_atoms))
    for i in range(n_atoms):
        for k in range(i + 1, n_atoms):
            cross = np.asarray(kernel.eval(atoms[k], atoms[i]), dtype=complex)
            val = traces[i] + traces[k] - 2.0 * float(np.trace(cross).real)
            d[i, k] = d[k, i] = math.sqrt(max(val, 0.0))
    return PseudoMetricMatrix(space.labels, _readonly(d), _quotient_tol(norms))


@dataclass(frozen=True, eq=False)
class Quotient:
    """Partition of the atoms by the transitive closure of near-zero distance."""

    atoms: tuple[str, ...]
    class_ids: tuple[int, ...]
    representatives: tuple[str, ...]

    @property
    def class_of(self) -> dict[str, int]:
        return dict(zip(self.atoms, self.class_ids))

    @cached_property
    def classes(self) -> tuple[tuple[str, ...], ...]:
        buckets: list[list[str]] = [[] for _ in self.representatives]
        for label, cid in zip(self.atoms, self.class_ids):
            buckets[cid].append(label)
        return tuple(tuple(b) for b in buckets)


def quotient(space: AtomSpace, metric: PseudoMetricMatrix, tol: float | None = None) -> Quotient:
    """Glue atoms whose distance is at most ``tol`` (transitively closed)."""
    tol = metric.quotient_tol if tol is None else float(tol)
    n_atoms = len(space.labels)
    parent = list(range(n_atoms))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n_atoms):
        for k in range(i + 1, n_atoms):
            if metric.d[i, k] <= tol:
                ri, rk = find(i), find(k)
                if ri != rk:
                    # keep the smaller index as root so representatives come first
                    lo, hi = (ri, rk) if ri < rk else (rk, ri)
                    parent[hi] = lo

    class_ids: list[int] = []
    reps: list[str] = []
    root_to_cid: dict[int, int] = {}
    for i, label in enumerate(space.labels):
        root = find(i)
        if root not in root_to_cid:
            root_to_cid[root] = len(reps)
            reps.append(space.labels[root])
        class_ids.append(root_to_cid[root])
    return Quotient(space.labels, tuple(class_ids), tuple(reps))


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Atoms carrying measure, closed under near-zero kernel distance."""

    members: tuple[str, ...]

    @cached_property
    def _member_set(self) -> frozenset[str]:
        return frozenset(self.members)

    def __contains__(self, label: str) -> bool:
        return label in self._member_set

    def __len__(self) -> int:
        return len(self.members)


def support(space: AtomSpace, metric: PseudoMetricMatrix, tol: float | None = None) -> SupportSet:
    """Atoms within ``tol`` of positive mass, transitively closed under ``tol``."""
    tol = metric.quotient_tol if tol is None else float(tol)
    mask = space.mu > 0
    if mask.any():
        mask = (metric.d[:, mask] <= tol).any(axis=1)
        while True:
            grown = mask | (metric.d[:, mask] <= tol).any(axis=1)
            if np.array_equal(grown, mask):
                break
            mask = grown
    else:
        mask = np.zeros(len(space.labels), dtype=bool)
    members = tuple(label for label, keep in zip(space.labels, mask) if keep)
    return SupportSet(members)


def merge_classes(space: AtomSpace, q: Quotient) -> AtomSpace:
    """Collapse each quotient class onto its representative, summing weights."""
    masses = np.zeros(len(q.representatives))
    for i, cid in enumerate(q.class_ids):
        masses[cid] += space.mu[i]
    rep_rows = [space.index(rep) for rep in q.representatives]
    return AtomSpace(q.representatives, space.coords[rep_rows], masses)
