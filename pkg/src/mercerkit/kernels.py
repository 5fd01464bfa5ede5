"""Matrix-valued kernels: constructor zoo, block Gram assembly, validation.

A kernel is its evaluator together with the output dimension ``n``.
Evaluators are pure functions of two atoms returning an ``n x n`` complex
matrix.  Nothing is assumed: Hermitian pair symmetry and positive
semidefiniteness of the block Gram matrix are checked explicitly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .space import Atom

__all__ = [
    "BlockGram",
    "KernelEvaluationError",
    "KernelSpecError",
    "KernelSymmetryError",
    "MatrixKernel",
    "TOL_SYM",
    "ValidationReport",
    "assemble_block_gram",
    "build_kernel",
    "kernel_from_file",
    "psd_tolerance",
    "read_precomputed",
    "spectral_norm",
    "validate_kernel",
    "write_precomputed",
]

# Absolute ceiling on acceptable asymmetry of value pairs K(x,t), K(t,x)*.
TOL_SYM = 1e-10
# Relative floor used for the positive-semidefiniteness verdict.
PSD_TOL_SCALE = 1e-10


class KernelSpecError(ValueError):
    """Raised for a malformed kernel description; names the offending field."""


class KernelSymmetryError(ValueError):
    """Raised when kernel values break Hermitian pair symmetry."""


class KernelEvaluationError(LookupError):
    """Raised when a table-backed kernel is evaluated outside its table."""


@dataclass(frozen=True, eq=False)
class MatrixKernel:
    """An ``n x n`` matrix-valued kernel given by its evaluator."""

    n: int
    eval: Callable[[Atom, Atom], np.ndarray]
    label: str = "custom"

    def __call__(self, x: Atom, t: Atom) -> np.ndarray:
        return self.eval(x, t)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


def psd_tolerance(max_eigenvalue: float) -> float:
    """Eigenvalue floor below which a Gram matrix counts as non-PSD."""
    return PSD_TOL_SCALE * max(max_eigenvalue, 1.0)


def spectral_norm(m: np.ndarray, tol_sym: float = TOL_SYM) -> float:
    """Largest absolute eigenvalue of a Hermitian matrix.

    Raises :class:`KernelSymmetryError` if the input deviates from Hermitian
    symmetry by more than ``tol_sym`` in any entry.
    """
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > tol_sym:
        raise KernelSymmetryError(
            f"matrix is not Hermitian: max deviation {dev:.3e} exceeds {tol_sym:.3e}"
        )
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    return float(np.max(np.abs(w))) if w.size else 0.0


# ---------------------------------------------------------------------------
# constructor zoo
# ---------------------------------------------------------------------------


def _require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise KernelSpecError(f"{field}: {message}")


def _real_param(spec: Mapping[str, Any], field: str) -> float:
    value = spec.get(field)
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), field, "must be a real number")
    value = float(value)
    _require(math.isfinite(value), field, "must be finite")
    return value


def _parse_complex(entry: Any, field: str) -> complex:
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return complex(float(entry), 0.0)
    if isinstance(entry, (list, tuple)) and len(entry) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry
    ):
        return complex(float(entry[0]), float(entry[1]))
    raise KernelSpecError(f"{field}: entries must be numbers or [re, im] pairs")


def _parse_complex_matrix(obj: Any, field: str) -> np.ndarray:
    _require(isinstance(obj, Sequence) and len(obj) > 0, field, "must be a nonempty matrix")
    rows = []
    width = None
    for r, row in enumerate(obj):
        _require(isinstance(row, Sequence), field, "must be a matrix (list of rows)")
        if width is None:
            width = len(row)
        _require(len(row) == width, field, "rows must have equal length")
        rows.append([_parse_complex(entry, field) for entry in row])
    mat = np.asarray(rows, dtype=complex)
    _require(mat.shape[0] == mat.shape[1], field, "must be square")
    return mat


def _scalar_kernel(fn: Callable[[Atom, Atom], float], label: str) -> MatrixKernel:
    def ev(x: Atom, t: Atom) -> np.ndarray:
        return np.array([[fn(x, t)]], dtype=complex)

    return MatrixKernel(n=1, eval=ev, label=label)


def _constant(spec: Mapping[str, Any]) -> MatrixKernel:
    value = _real_param(spec, "value")
    block = _readonly(np.array([[value]], dtype=complex))
    return MatrixKernel(n=1, eval=lambda x, t: block, label=f"constant({value!r})")


def _gaussian(spec: Mapping[str, Any]) -> MatrixKernel:
    gamma = _real_param(spec, "gamma")
    _require(gamma > 0, "gamma", "must be positive")

    def fn(x: Atom, t: Atom) -> float:
        diff = x.coords - t.coords
        return math.exp(-gamma * float(diff @ diff))

    return _scalar_kernel(fn, f"gaussian(gamma={gamma!r})")


def _laplacian(spec: Mapping[str, Any]) -> MatrixKernel:
    gamma = _real_param(spec, "gamma")
    _require(gamma > 0, "gamma", "must be positive")

    def fn(x: Atom, t: Atom) -> float:
        return math.exp(-gamma * float(np.sum(np.abs(x.coords - t.coords))))

    return _scalar_kernel(fn, f"laplacian(gamma={gamma!r})")


def _polynomial(spec: Mapping[str, Any]) -> MatrixKernel:
    degree = spec.get("degree")
    _require(isinstance(degree, int) and not isinstance(degree, bool), "degree", "must be an integer")
    _require(degree >= 1, "degree", "must be at least 1")
    offset = _real_param(spec, "offset")
    _require(offset >= 0, "offset", "must be nonnegative")

    def fn(x: Atom, t: Atom) -> float:
        return (float(x.coords @ t.coords) + offset) ** degree

    return _scalar_kernel(fn, f"polynomial(degree={degree}, offset={offset!r})")


def _separable(spec: Mapping[str, Any], base_dir: Path | None) -> MatrixKernel:
    mat = _parse_complex_matrix(spec.get("matrix"), "matrix")
    dev = float(np.max(np.abs(mat - mat.conj().T)))
    _require(dev <= TOL_SYM, "matrix", f"must be Hermitian (max deviation {dev:.3e})")
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
    _require(
        float(eigs[0]) >= -psd_tolerance(float(eigs[-1])),
        "matrix",
        f"must be positive semidefinite (min eigenvalue {float(eigs[0]):.3e})",
    )
    _require(isinstance(spec.get("scalar"), Mapping), "scalar", "must be a kernel description")
    inner = build_kernel(spec["scalar"], base_dir)
    _require(inner.n == 1, "scalar", "must describe a scalar kernel")
    frozen = _readonly(mat)

    def ev(x: Atom, t: Atom) -> np.ndarray:
        return frozen * complex(inner.eval(x, t)[0, 0])

    return MatrixKernel(n=mat.shape[0], eval=ev, label=f"separable({inner.label})")


def _diagonal(spec: Mapping[str, Any], base_dir: Path | None) -> MatrixKernel:
    blocks = spec.get("blocks")
    _require(isinstance(blocks, Sequence) and len(blocks) >= 1, "blocks", "must be a nonempty list")
    inners = []
    for b, sub in enumerate(blocks):
        _require(isinstance(sub, Mapping), f"blocks[{b}]", "must be a kernel description")
        inner = build_kernel(sub, base_dir)
        _require(inner.n == 1, f"blocks[{b}]", "must describe a scalar kernel")
        inners.append(inner)
    n = len(inners)

    def ev(x: Atom, t: Atom) -> np.ndarray:
        out = np.zeros((n, n), dtype=complex)
        for j, inner in enumerate(inners):
            out[j, j] = complex(inner.eval(x, t)[0, 0])
        return out

    return MatrixKernel(n=n, eval=ev, label=f"diagonal({', '.join(k.label for k in inners)})")


def _sum(spec: Mapping[str, Any], base_dir: Path | None) -> MatrixKernel:
    terms = spec.get("terms")
    _require(isinstance(terms, Sequence) and len(terms) >= 2, "terms", "must list at least two kernels")
    inners = []
    for k, sub in enumerate(terms):
        _require(isinstance(sub, Mapping), f"terms[{k}]", "must be a kernel description")
        inners.append(build_kernel(sub, base_dir))
    n = inners[0].n
    _require(all(inner.n == n for inner in inners), "terms", "must share the same output dimension")

    def ev(x: Atom, t: Atom) -> np.ndarray:
        out = np.asarray(inners[0].eval(x, t), dtype=complex).copy()
        for inner in inners[1:]:
            out = out + np.asarray(inner.eval(x, t), dtype=complex)
        return out

    return MatrixKernel(n=n, eval=ev, label=f"sum({', '.join(k.label for k in inners)})")


def _precomputed(spec: Mapping[str, Any], base_dir: Path | None) -> MatrixKernel:
    path = spec.get("path")
    _require(isinstance(path, str) and bool(path), "path", "must be a file path")
    full = Path(path)
    if not full.is_absolute() and base_dir is not None:
        full = base_dir / full
    return read_precomputed(full)


def _frame_synth(spec: Mapping[str, Any], base_dir: Path | None) -> MatrixKernel:
    paths = spec.get("frames")
    _require(isinstance(paths, Sequence) and len(paths) >= 1, "frames", "must list at least one frame file")
    resolved = []
    for k, p in enumerate(paths):
        _require(isinstance(p, str) and bool(p), f"frames[{k}]", "must be a file path")
        full = Path(p)
        if not full.is_absolute() and base_dir is not None:
            full = base_dir / full
        resolved.append(full)
    # deferred import: synthesis sits above this module in the layering
    from .mercer import read_frame
    from .synthesis import align_frames, synthesize_kernel

    return synthesize_kernel(align_frames([read_frame(p) for p in resolved]))


def build_kernel(spec: Mapping[str, Any], base_dir: Path | None = None) -> MatrixKernel:
    """Construct a kernel from its tagged description.

    ``base_dir`` anchors relative paths referenced by table-backed kernels.
    Malformed descriptions raise :class:`KernelSpecError` naming the field.
    """
    if not isinstance(spec, Mapping):
        raise KernelSpecError("spec: must be a JSON object")
    ktype = spec.get("type")
    builders: dict[str, Callable[[], MatrixKernel]] = {
        "constant": lambda: _constant(spec),
        "gaussian": lambda: _gaussian(spec),
        "laplacian": lambda: _laplacian(spec),
        "polynomial": lambda: _polynomial(spec),
        "separable": lambda: _separable(spec, base_dir),
        "diagonal": lambda: _diagonal(spec, base_dir),
        "sum": lambda: _sum(spec, base_dir),
        "precomputed": lambda: _precomputed(spec, base_dir),
        "frame_synth": lambda: _frame_synth(spec, base_dir),
    }
    if ktype not in builders:
        raise KernelSpecError(f"type: unknown kernel type {ktype!r}")
    return builders[ktype]()


def kernel_from_file(path: str | Path) -> MatrixKernel:
    """Load a kernel description from a JSON file."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise KernelSpecError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return build_kernel(spec, base_dir=path.parent)


# ---------------------------------------------------------------------------
# precomputed tables
# ---------------------------------------------------------------------------

_PRECOMPUTED_HEADER = ["x_id", "t_id", "l", "j", "re", "im"]


def read_precomputed(path: str | Path) -> MatrixKernel:
    """Read a block table CSV ``x_id,t_id,l,j,re,im``.

    Entries missing from a block are filled from the mirror block by
    Hermitian symmetry; explicitly stored values are never overwritten, so a
    file carrying inconsistent mirrors keeps its asymmetry (validation will
    catch it).  Component indices are zero-based.
    """
    path = Path(path)
    entries: dict[tuple[str, str], dict[tuple[int, int], complex]] = {}
    n = 0
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise KernelSpecError(f"{path}: empty file") from None
        if [h.strip() for h in header] != _PRECOMPUTED_HEADER:
            raise KernelSpecError(f"{path}: line 1: header must be {','.join(_PRECOMPUTED_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 6:
                raise KernelSpecError(f"{path}: line {line_no}: expected 6 fields, got {len(row)}")
            x_id, t_id = row[0].strip(), row[1].strip()
            try:
                l, j = int(row[2]), int(row[3])
                value = complex(float(row[4]), float(row[5]))
            except ValueError as exc:
                raise KernelSpecError(f"{path}: line {line_no}: {exc}") from None
            if l < 0 or j < 0:
                raise KernelSpecError(f"{path}: line {line_no}: component indices must be nonnegative")
            n = max(n, l + 1, j + 1)
            entries.setdefault((x_id, t_id), {})[(l, j)] = value
    if not entries:
        raise KernelSpecError(f"{path}: no data rows")

    pairs = set(entries) | {(t, x) for (x, t) in entries}
    blocks: dict[tuple[str, str], np.ndarray] = {}
    for x_id, t_id in pairs:
        block = np.empty((n, n), dtype=complex)
        direct = entries.get((x_id, t_id), {})
        mirror = entries.get((t_id, x_id), {})
        for l in range(n):
            for j in range(n):
                if (l, j) in direct:
                    block[l, j] = direct[(l, j)]
                elif (j, l) in mirror:
                    block[l, j] = mirror[(j, l)].conjugate()
                else:
                    raise KernelSpecError(
                        f"{path}: block ({x_id},{t_id}) entry ({l},{j}) missing and not recoverable by symmetry"
                    )
        blocks[(x_id, t_id)] = _readonly(block)

    def ev(x: Atom, t: Atom) -> np.ndarray:
        try:
            return blocks[(x.label, t.label)]
        except KeyError:
            raise KernelEvaluationError(
                f"precomputed kernel has no entry for pair ({x.label!r}, {t.label!r})"
            ) from None

    return MatrixKernel(n=n, eval=ev, label=f"precomputed({path.name})")


def write_precomputed(kernel: MatrixKernel, atoms: Sequence[Atom], path: str | Path) -> None:
    """Write kernel values over ``atoms`` as a block table CSV.

    Only blocks with ``x <= t`` in atom order are emitted, and only the upper
    triangle of each diagonal block; the reader restores the rest by
    Hermitian symmetry.
    """
    n = kernel.n
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_PRECOMPUTED_HEADER)
        for i, x in enumerate(atoms):
            for k in range(i, len(atoms)):
                t = atoms[k]
                block = np.asarray(kernel.eval(x, t), dtype=complex)
                for l in range(n):
                    start = l if i == k else 0
                    for j in range(start, n):
                        value = complex(block[l, j])
                        writer.writerow([x.label, t.label, l, j, repr(value.real), repr(value.imag)])


# ---------------------------------------------------------------------------
# block Gram assembly and validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockGram:
    """Hermitian Gram matrix of all kernel blocks; index (x, l) -> x*n + l."""

    atoms: tuple[str, ...]
    n: int
    matrix: np.ndarray


def _raw_gram(kernel: MatrixKernel, atoms: Sequence[Atom]) -> np.ndarray:
    n = kernel.n
    n_atoms = len(atoms)
    raw = np.empty((n_atoms * n, n_atoms * n), dtype=complex)
    for i, x in enumerate(atoms):
        for k, t in enumerate(atoms):
            raw[i * n : (i + 1) * n, k * n : (k + 1) * n] = np.asarray(kernel.eval(x, t), dtype=complex)
    return raw


def assemble_block_gram(kernel: MatrixKernel, atoms: Sequence[Atom], tol_sym: float = TOL_SYM) -> BlockGram:
    """Evaluate all blocks and enforce Hermitian symmetry.

    Asymmetry up to ``tol_sym`` is averaged away; anything larger raises
    :class:`KernelSymmetryError` carrying the maximum deviation.
    """
    raw = _raw_gram(kernel, atoms)
    dev = float(np.max(np.abs(raw - raw.conj().T)))
    if dev > tol_sym:
        raise KernelSymmetryError(
            f"kernel violates Hermitian pair symmetry: max deviation {dev:.3e} exceeds {tol_sym:.3e}"
        )
    gram = 0.5 * (raw + raw.conj().T)
    return BlockGram(tuple(a.label for a in atoms), kernel.n, _readonly(gram))


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Outcome of the reproducing-kernel axiom checks on a finite atom set."""

    n_atoms: int
    n: int
    hermitian_deviation: float
    tol_sym: float
    min_eigenvalue: float
    max_eigenvalue: float
    tol_psd: float
    hermitian_ok: bool
    psd_ok: bool

    @property
    def passed(self) -> bool:
        return self.hermitian_ok and self.psd_ok

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_atoms": self.n_atoms,
            "n": self.n,
            "hermitian_deviation": self.hermitian_deviation,
            "tol_sym": self.tol_sym,
            "min_eigenvalue": self.min_eigenvalue,
            "max_eigenvalue": self.max_eigenvalue,
            "tol_psd": self.tol_psd,
            "hermitian_ok": self.hermitian_ok,
            "psd_ok": self.psd_ok,
            "passed": self.passed,
        }


def validate_kernel(kernel: MatrixKernel, atoms: Sequence[Atom], tol_sym: float = TOL_SYM) -> ValidationReport:
    """Check Hermitian pair symmetry and block Gram positivity.

    Failures are reported, not raised: the report carries the maximum
    Hermitian deviation and the minimum Gram eigenvalue together with the
    tolerances used for the verdict.
    """
    raw = _raw_gram(kernel, atoms)
    dev = float(np.max(np.abs(raw - raw.conj().T)))
    eigs = np.linalg.eigvalsh(0.5 * (raw + raw.conj().T))
    min_eig, max_eig = float(eigs[0]), float(eigs[-1])
    tol_psd = psd_tolerance(max_eig)
    return ValidationReport(
        n_atoms=len(atoms),
        n=kernel.n,
        hermitian_deviation=dev,
        tol_sym=tol_sym,
        min_eigenvalue=min_eig,
        max_eigenvalue=max_eig,
        tol_psd=tol_psd,
        hermitian_ok=dev <= tol_sym,
        psd_ok=min_eig >= -tol_psd,
    )
