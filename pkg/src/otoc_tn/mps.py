"""Matrix-product-state evolution of 1D OTOC circuits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .circuits import Coord, Gate, OtocCircuit, lattice_adjacent
from .statevector import StateVector
from .tensor_core import DEFAULT_CUTOFF, DenseTensor, positive_qr, truncated_svd

MAX_DENSE_QUBITS = 24


@dataclass(eq=False)
class Mps:
    """Open-boundary MPS; tensor ``k`` has shape ``(left, 2, right)``.

    ``ortho_center`` is the site whose tensor carries the norm, when the
    state is in mixed canonical form.
    """

    sites: tuple[Coord, ...]
    tensors: list[np.ndarray]
    ortho_center: int | None = None

    def __post_init__(self):
        if len(self.sites) != len(self.tensors):
            raise ValueError("one tensor per site required")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("adjacent bond dimensions disagree")

    @property
    def num_sites(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def position(self, site: Coord) -> int:
        return self.sites.index(tuple(site))

    def site_tensor(self, k: int) -> DenseTensor:
        return DenseTensor(self.tensors[k], [("bond", k), ("phys", self.sites[k]), ("bond", k + 1)])

    def copy(self) -> "Mps":
        return Mps(self.sites, [t.copy() for t in self.tensors], self.ortho_center)


def product_mps(sites) -> Mps:
    """``|0...0>`` on sites sorted lexicographically."""
    sites = tuple(sorted(tuple(s) for s in sites))
    tensors = []
    for _ in sites:
        t = np.zeros((1, 2, 1), dtype=np.complex128)
        t[0, 0, 0] = 1.0
        tensors.append(t)
    return Mps(sites, tensors, 0)


def _shift_center_right(m: Mps, k: int) -> None:
    t = m.tensors[k]
    dl, d, dr = t.shape
    q, r = positive_qr(t.reshape(dl * d, dr))
    m.tensors[k] = q.reshape(dl, d, q.shape[1])
    m.tensors[k + 1] = np.tensordot(r, m.tensors[k + 1], axes=(1, 0))


def _shift_center_left(m: Mps, k: int) -> None:
    t = m.tensors[k]
    dl, d, dr = t.shape
    q, r = positive_qr(t.reshape(dl, d * dr).conj().T)
    m.tensors[k] = q.conj().T.reshape(q.shape[1], d, dr)
    m.tensors[k - 1] = np.tensordot(m.tensors[k - 1], r.conj().T, axes=(2, 0))


def canonicalize(m: Mps, center: int) -> None:
    """Bring ``m`` into mixed canonical form around ``center`` in place."""
    if m.ortho_center is None:
        for k in range(center):
            _shift_center_right(m, k)
        for k in range(m.num_sites - 1, center, -1):
            _shift_center_left(m, k)
    else:
        for k in range(m.ortho_center, center):
            _shift_center_right(m, k)
        for k in range(m.ortho_center, center, -1):
            _shift_center_left(m, k)
    m.ortho_center = center


@dataclass
class GateRecord:
    """What one two-qubit gate application did to its bond."""

    bond: int
    old_dim: int
    new_dim: int
    singular_values: np.ndarray
    discarded_weight: float


def apply_gate(m: Mps, gate: Gate, max_D: int | None = None, cutoff: float = DEFAULT_CUTOFF) -> GateRecord | None:
    """Apply ``gate`` in place; two-qubit gates are truncated at the center.

    The two-site blob is normalized before the SVD, so ``cutoff`` acts on
    singular values of the unit-norm state, and the kept values are
    renormalized afterwards.
    """
    mat = gate.matrix()
    if not gate.is_two_qubit:
        k = m.position(gate.sites[0])
        m.tensors[k] = np.einsum("st,ltr->lsr", mat, m.tensors[k])
        return None
    i, j = m.position(gate.sites[0]), m.position(gate.sites[1])
    if abs(i - j) != 1 or not lattice_adjacent(*gate.sites):
        raise ValueError(f"gate on non-adjacent MPS sites {gate.sites}")
    op = mat.reshape(2, 2, 2, 2)
    if i > j:
        i, j = j, i
        op = op.transpose(1, 0, 3, 2)
    canonicalize(m, i)
    a, b = m.tensors[i], m.tensors[j]
    old_dim = a.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0))
    theta = np.einsum("stuv,luvr->lstr", op, theta)
    dl, dr = theta.shape[0], theta.shape[3]
    theta = theta.reshape(dl * 2, 2 * dr)
    scale = np.linalg.norm(theta)
    u, s, vh, discarded = truncated_svd(theta / scale, max_D, cutoff)
    s = s / np.linalg.norm(s)
    m.tensors[i] = u.reshape(dl, 2, len(s))
    m.tensors[j] = (s[:, None] * vh).reshape(len(s), 2, dr)
    m.ortho_center = j
    return GateRecord(i, old_dim, len(s), s, discarded)


def evolve_mps(
    c: OtocCircuit,
    max_D: int | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    on_gate: Callable[[Gate, GateRecord], None] | None = None,
) -> tuple[Mps, float]:
    """Evolve ``|0...0>`` through a 1D circuit with per-gate truncation.

    Parameters
    ----------
    c : OtocCircuit
        Circuit on a line geometry.
    max_D : int or None
        Bond dimension cap; ``None`` keeps every singular value above ``cutoff``.
    cutoff : float
        Singular-value cutoff relative to the state norm.
    on_gate : callable, optional
        Called with each two-qubit gate and its :class:`GateRecord`.

    Returns
    -------
    mps : Mps
        Normalized final state.
    discarded : float
        Sum of discarded weights over all truncations.
    """
    if not c.geometry.is_line:
        raise ValueError("evolve_mps needs a line geometry")
    m = product_mps(c.active_qubits)
    total = 0.0
    for g in c.gates:
        rec = apply_gate(m, g, max_D, cutoff)
        if rec is not None:
            total += rec.discarded_weight
            if on_gate is not None:
                on_gate(g, rec)
    return m, total


def _transfer_expectation(m: Mps, k: int, op: np.ndarray) -> complex:
    """``<psi|op_k|psi>`` by a left-to-right transfer-matrix sweep."""
    env = np.ones((1, 1), dtype=np.complex128)
    eye = np.eye(2, dtype=np.complex128)
    for idx, t in enumerate(m.tensors):
        o = op if idx == k else eye
        env = np.einsum("ab,asr,ts,btq->rq", env, t, o, t.conj())
    return complex(env[0, 0])


def mps_expectation_z(m: Mps, site: Coord) -> float:
    """Normalized ``<Z>`` at ``site``."""
    k = m.position(site)
    z = np.diag([1.0, -1.0]).astype(np.complex128)
    if m.ortho_center is not None:
        t = m.tensors[m.ortho_center]
        if m.ortho_center == k:
            num = np.einsum("lsr,st,ltr->", t.conj(), z, t)
            return float((num / np.vdot(t, t)).real)
    num = _transfer_expectation(m, k, z)
    den = _transfer_expectation(m, k, np.eye(2, dtype=np.complex128))
    return float((num / den).real)


def to_statevector(m: Mps) -> StateVector:
    """Dense amplitudes; only for up to 24 sites."""
    if m.num_sites > MAX_DENSE_QUBITS:
        raise MemoryError(f"{m.num_sites} sites exceed the dense conversion limit")
    psi = m.tensors[0]
    for t in m.tensors[1:]:
        psi = np.tensordot(psi, t, axes=(-1, 0))
    amps = psi.reshape((2,) * m.num_sites)
    return StateVector(m.sites, np.ascontiguousarray(amps))
