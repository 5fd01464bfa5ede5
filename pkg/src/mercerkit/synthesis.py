"""Build a matrix-valued kernel from per-component scalar frames.

Given one frame per target component, the synthesized kernel is
``K(x,t)[l,j] = sum_i f_i^j(t) conj(f_i^l(x))``.  The construction is a sum
of rank-one squares, so the result is always Hermitian and positive
semidefinite; its diagonal blocks reproduce the frames' scalar kernels
exactly when the frames are Parseval, while off-diagonal blocks depend on
the frame choice and carry no such guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import KernelEvaluationError, MatrixKernel
from .mercer import ScalarFrame
from .space import Atom

__all__ = ["FrameFamily", "align_frames", "synthesize_kernel", "verify_diagonal_blocks"]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FrameFamily:
    """Scalar frames over a shared atom set and a shared index set.

    ``values[i, x, j]`` is the ``i``-th frame vector of component ``j`` at
    atom ``x``; shorter frames are padded with zero functions.
    """

    atoms: tuple[str, ...]
    values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[2])


def align_frames(frames: Sequence[ScalarFrame]) -> FrameFamily:
    """Unify frames onto their common atom set and maximal index count.

    All frames that carry atoms must agree on them (same labels, same
    order); an empty frame contributes an all-zero component.
    """
    if not frames:
        raise ValueError("align_frames needs at least one frame")
    atom_sets = [f.atoms for f in frames if f.atoms]
    atoms = atom_sets[0] if atom_sets else ()
    for other in atom_sets[1:]:
        if other != atoms:
            raise ValueError("frames disagree on the atom set")
    count = max((int(f.values.shape[0]) for f in frames), default=0)
    values = np.zeros((count, len(atoms), len(frames)), dtype=complex)
    for j, frame in enumerate(frames):
        if frame.values.size:
            values[: frame.values.shape[0], :, j] = frame.values
    return FrameFamily(atoms, _readonly(values))


def synthesize_kernel(family: FrameFamily) -> MatrixKernel:
    """Kernel whose block entries are inner products of the frame columns.

    Defined only on the family's atoms; evaluating elsewhere raises
    :class:`KernelEvaluationError`.
    """
    index = {label: i for i, label in enumerate(family.atoms)}
    values = family.values
    n = family.n

    def ev(x: Atom, t: Atom) -> np.ndarray:
        try:
            ix, it = index[x.label], index[t.label]
        except KeyError as exc:
            raise KernelEvaluationError(
                f"synthesized kernel is undefined at atom {exc.args[0]!r}"
            ) from None
        return np.einsum("il,ij->lj", np.conj(values[:, ix, :]), values[:, it, :])

    return MatrixKernel(n=n, eval=ev, label=f"frame_synth(n={n})")


def verify_diagonal_blocks(
    synthesized: MatrixKernel,
    originals: Sequence[MatrixKernel],
    atoms: Sequence[Atom],
) -> float:
    """Max deviation of the synthesized diagonal blocks from scalar originals."""
    if len(originals) != synthesized.n:
        raise ValueError("need one scalar original per synthesized component")
    for j, kernel in enumerate(originals):
        if kernel.n != 1:
            raise ValueError(f"original {j} is not scalar")
    deviation = 0.0
    for x in atoms:
        for t in atoms:
            block = np.asarray(synthesized.eval(x, t), dtype=complex)
            for j, kernel in enumerate(originals):
                target = complex(np.asarray(kernel.eval(x, t), dtype=complex)[0, 0])
                deviation = max(deviation, float(abs(block[j, j] - target)))
    return deviation
