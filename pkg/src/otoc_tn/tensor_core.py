"""Dense complex tensors with named indices, contraction and decompositions.

The simulators in this package store their site tensors as plain ``numpy``
arrays with a fixed axis convention for speed, and use the matrix-level
helpers :func:`truncated_svd` and :func:`positive_qr` directly.
:class:`DenseTensor` wraps the same kernels behind labelled indices for
code that benefits from explicit index bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
import scipy.linalg

DEFAULT_CUTOFF = 1e-14


@dataclass(frozen=True)
class IndexLabel:
    """Name and dimension of one tensor index."""

    name: Hashable
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"index dimension must be >= 1, got {self.dim}")


class DenseTensor:
    """Immutable complex array whose axes carry unique names.

    Parameters
    ----------
    data : array_like
        Values, converted to ``complex128``.
    labels : sequence of hashable
        One unique name per axis.
    """

    __slots__ = ("_data", "_labels")

    def __init__(self, data, labels: Sequence[Hashable]):
        arr = np.array(data, dtype=np.complex128, copy=True)
        labels = tuple(labels)
        if arr.ndim != len(labels):
            raise ValueError(f"{arr.ndim} axes but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate index labels {labels}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr.setflags(write=False)
        self._data = arr
        self._labels = labels

    @classmethod
    def _wrap(cls, arr: np.ndarray, labels: tuple) -> "DenseTensor":
        # internal constructor that skips copying
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
        arr.setflags(write=False)
        obj._data = arr
        obj._labels = tuple(labels)
        return obj

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def labels(self) -> tuple:
        return self._labels

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def indices(self) -> tuple:
        return tuple(IndexLabel(n, d) for n, d in zip(self._labels, self._data.shape))

    def axis(self, label: Hashable) -> int:
        try:
            return self._labels.index(label)
        except ValueError:
            raise KeyError(f"no index {label!r} in {self._labels}") from None

    def dim(self, label: Hashable) -> int:
        return self._data.shape[self.axis(label)]

    def relabel(self, mapping: dict) -> "DenseTensor":
        new = tuple(mapping.get(lab, lab) for lab in self._labels)
        if len(set(new)) != len(new):
            raise ValueError(f"relabel creates duplicate labels {new}")
        return DenseTensor._wrap(self._data, new)

    def __repr__(self) -> str:
        idx = ", ".join(f"{n!r}:{d}" for n, d in zip(self._labels, self.shape))
        return f"DenseTensor({idx})"


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``t ~ left . diag(s) . right``."""

    left: DenseTensor
    singular_values: np.ndarray
    right: DenseTensor
    discarded_weight: float


# ---------------------------------------------------------------------------
# matrix-level kernels


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def fix_svd_gauge(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Make the largest-magnitude entry of each column of ``u`` real-positive.

    The compensating phase is applied to the rows of ``vh`` so the product
    ``u @ diag(s) @ vh`` is unchanged.
    """
    if u.shape[1] == 0:
        return u, vh
    rows = np.argmax(np.abs(u), axis=0)
    pivots = u[rows, np.arange(u.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    return u * phases.conj()[None, :], vh * phases[:, None]


def truncated_svd(
    mat: np.ndarray, max_rank: int | None = None, cutoff: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Thin SVD of a matrix keeping at most ``max_rank`` values above ``cutoff``.

    Parameters
    ----------
    mat : ndarray, shape (m, n)
    max_rank : int or None
        Upper bound on the kept rank; ``None`` means unbounded.
    cutoff : float
        Singular values ``<= cutoff`` are dropped. Absolute, not relative.

    Returns
    -------
    u : ndarray, shape (m, k)
    s : ndarray, shape (k,)
        Descending, non-negative.
    vh : ndarray, shape (k, n)
    discarded_weight : float
        Sum of squares of the dropped singular values.

    Notes
    -----
    At least one singular value is always kept so the factors stay
    well-formed, even when every value is below ``cutoff``.
    """
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    u, s, vh = _svd(np.asarray(mat, dtype=np.complex128))
    keep = int(np.count_nonzero(s > cutoff))
    if max_rank is not None:
        keep = min(keep, max_rank)
    keep = max(keep, 1)
    discarded = float(np.sum(s[keep:] ** 2))
    u, vh = fix_svd_gauge(u[:, :keep], vh[:keep, :])
    return u, s[:keep].copy(), vh, discarded


def positive_qr(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Economic QR with a real non-negative diagonal in ``r``."""
    q, r = np.linalg.qr(np.asarray(mat, dtype=np.complex128), mode="reduced")
    diag = np.diagonal(r)
    mags = np.abs(diag)
    phases = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    return q * phases[None, :], r * phases.conj()[:, None]


# ---------------------------------------------------------------------------
# labelled-tensor operations


def contract(a: DenseTensor, b: DenseTensor, pairs: Iterable[tuple]) -> DenseTensor:
    """Sum over paired indices of ``a`` and ``b``.

    The result carries the unpaired indices of ``a`` followed by those of
    ``b``, each in their original order.
    """
    pairs = list(pairs)
    a_labels = [p[0] for p in pairs]
    b_labels = [p[1] for p in pairs]
    if len(set(a_labels)) != len(a_labels) or len(set(b_labels)) != len(b_labels):
        raise ValueError("repeated index in contraction pairs")
    a_axes = [a.axis(lab) for lab in a_labels]
    b_axes = [b.axis(lab) for lab in b_labels]
    for la, lb, ia, ib in zip(a_labels, b_labels, a_axes, b_axes):
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(
                f"dimension mismatch pairing {la!r} ({a.shape[ia]}) with {lb!r} ({b.shape[ib]})"
            )
    out_labels = tuple(l for l in a.labels if l not in a_labels) + tuple(
        l for l in b.labels if l not in b_labels
    )
    if len(set(out_labels)) != len(out_labels):
        raise ValueError(f"label collision in contraction result {out_labels}")
    data = np.tensordot(a.data, b.data, axes=(a_axes, b_axes))
    return DenseTensor._wrap(data, out_labels)


def permute(t: DenseTensor, labels: Sequence[Hashable]) -> DenseTensor:
    """Reorder axes to follow ``labels``."""
    labels = tuple(labels)
    if len(labels) != t.ndim or set(labels) != set(t.labels):
        raise ValueError(f"{labels} is not a permutation of {t.labels}")
    return DenseTensor._wrap(np.transpose(t.data, [t.axis(l) for l in labels]), labels)


def fuse(t: DenseTensor, labels: Sequence[Hashable], new_label: Hashable) -> DenseTensor:
    """Merge ``labels`` (in the given order) into one index placed last."""
    labels = tuple(labels)
    rest = tuple(l for l in t.labels if l not in labels)
    if new_label in rest:
        raise ValueError(f"label collision: {new_label!r}")
    moved = permute(t, rest + labels).data
    shape = moved.shape[: len(rest)] + (int(np.prod(moved.shape[len(rest):], dtype=np.int64)),)
    return DenseTensor._wrap(moved.reshape(shape), rest + (new_label,))


def split(
    t: DenseTensor, label: Hashable, new_labels: Sequence[Hashable], dims: Sequence[int]
) -> DenseTensor:
    """Inverse of :func:`fuse`: expand ``label`` in place into ``new_labels``."""
    new_labels, dims = tuple(new_labels), tuple(int(d) for d in dims)
    ax = t.axis(label)
    if int(np.prod(dims)) != t.shape[ax]:
        raise ValueError(f"cannot split dim {t.shape[ax]} into {dims}")
    out = t.labels[:ax] + new_labels + t.labels[ax + 1:]
    if len(set(out)) != len(out):
        raise ValueError(f"label collision in split: {out}")
    shape = t.shape[:ax] + dims + t.shape[ax + 1:]
    return DenseTensor._wrap(t.data.reshape(shape), out)


def conj(t: DenseTensor) -> DenseTensor:
    return DenseTensor._wrap(t.data.conj(), t.labels)


def frobenius_norm(t: DenseTensor) -> float:
    return float(np.linalg.norm(t.data.ravel()))


def _as_matrix(t: DenseTensor, left_indices) -> tuple[np.ndarray, tuple, tuple]:
    left = tuple(l for l in t.labels if l in set(left_indices))
    if len(left) != len(set(left_indices)):
        missing = set(left_indices) - set(left)
        raise KeyError(f"unknown indices {missing}")
    right = tuple(l for l in t.labels if l not in left)
    if not left or not right:
        raise ValueError("left_indices must be a proper nonempty subset of the indices")
    arr = permute(t, left + right).data
    nl = int(np.prod(arr.shape[: len(left)]))
    return arr.reshape(nl, -1), left, right


def svd_truncate(
    t: DenseTensor,
    left_indices,
    max_rank: int | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    bond_label: Hashable = "bond",
) -> SvdResult:
    """Truncated SVD across the bipartition ``left_indices | rest``.

    The new index is called ``bond_label`` on both factors.
    """
    mat, left, right = _as_matrix(t, left_indices)
    u, s, vh, discarded = truncated_svd(mat, max_rank, cutoff)
    lshape = tuple(t.dim(l) for l in left)
    rshape = tuple(t.dim(l) for l in right)
    ltensor = DenseTensor._wrap(u.reshape(lshape + (len(s),)), left + (bond_label,))
    rtensor = DenseTensor._wrap(vh.reshape((len(s),) + rshape), (bond_label,) + right)
    return SvdResult(ltensor, s, rtensor, discarded)


def qr_split(t: DenseTensor, left_indices, bond_label: Hashable = "bond"):
    """QR decomposition across ``left_indices | rest``; returns ``(q, r)``."""
    mat, left, right = _as_matrix(t, left_indices)
    q, r = positive_qr(mat)
    k = q.shape[1]
    lshape = tuple(t.dim(l) for l in left)
    rshape = tuple(t.dim(l) for l in right)
    qt = DenseTensor._wrap(q.reshape(lshape + (k,)), left + (bond_label,))
    rt = DenseTensor._wrap(r.reshape((k,) + rshape), (bond_label,) + right)
    return qt, rt
