"""Exact dense state-vector simulation of OTOC circuits."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import Coord, OtocCircuit

MAX_QUBITS = 28


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes with one axis of size 2 per qubit.

    Axis ``k`` belongs to ``qubits[k]``; qubits are sorted lexicographically.
    """

    qubits: tuple[Coord, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (2,) * len(self.qubits):
            raise ValueError("amplitude shape does not match the qubit list")

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    @property
    def qubit_order(self) -> dict[Coord, int]:
        return {q: k for k, q in enumerate(self.qubits)}

    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))


def zero_state(qubits: Sequence[Coord], allow_large: bool = False) -> StateVector:
    qubits = tuple(sorted(tuple(q) for q in qubits))
    n = len(qubits)
    if n > MAX_QUBITS and not allow_large:
        raise MemoryError(f"{n} qubits exceed the state-vector guard of {MAX_QUBITS}")
    amps = np.zeros((2,) * n, dtype=np.complex128)
    amps[(0,) * n] = 1.0
    return StateVector(qubits, amps)


def apply_matrix(amps: np.ndarray, axes: Sequence[int], mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 or 4x4 matrix to the given axes of an amplitude tensor."""
    k = len(axes)
    op = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(op, amps, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def evolve_exact(c: OtocCircuit, allow_large: bool = False) -> StateVector:
    """Apply every gate of ``c`` in order to ``|0...0>`` on its active qubits."""
    sv = zero_state(c.active_qubits, allow_large)
    order = sv.qubit_order
    amps = sv.amplitudes
    for g in c.gates:
        amps = apply_matrix(amps, [order[s] for s in g.sites], g.matrix())
    return StateVector(sv.qubits, np.ascontiguousarray(amps))


def expectation_z(sv: StateVector, site: Coord) -> float:
    """Normalized ``<Z>`` at ``site``."""
    ax = sv.qubit_order[tuple(site)]
    probs = np.abs(np.moveaxis(sv.amplitudes, ax, 0).reshape(2, -1)) ** 2
    p0, p1 = probs[0].sum(), probs[1].sum()
    return float((p0 - p1) / (p0 + p1))


def otoc_exact(c: OtocCircuit) -> float:
    """``<phi|Z_m|phi>`` with ``|phi> = U^dagger X_b U |0>``."""
    if c.order != "otoc1":
        raise ValueError("otoc_exact needs an otoc1 circuit")
    return expectation_z(evolve_exact(c), c.m_site)


def otoc2_exact(c: OtocCircuit) -> float:
    """Second-order correlator of an ``otoc2`` circuit."""
    if c.order != "otoc2":
        raise ValueError("otoc2_exact needs an otoc2 circuit")
    return expectation_z(evolve_exact(c), c.m_site)


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2 / (<a|a><b|b>)``."""
    if tuple(a.qubits) != tuple(b.qubits):
        raise ValueError("states live on different qubit sets")
    va, vb = a.vector(), b.vector()
    overlap = np.vdot(va, vb)
    return float(abs(overlap) ** 2 / (np.vdot(va, va).real * np.vdot(vb, vb).real))


def write_amplitudes(path: str | Path, sv: StateVector) -> None:
    """Dump amplitudes as interleaved little-endian doubles after a uint64 qubit count."""
    flat = sv.vector().astype("<c16", copy=False)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", sv.num_qubits))
        fh.write(flat.tobytes())


def read_amplitudes(path: str | Path, qubits: Sequence[Coord] | None = None) -> StateVector:
    """Inverse of :func:`write_amplitudes`.

    Without ``qubits`` the axes are labelled ``(0, k)``.
    """
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    data = np.frombuffer(raw[8:], dtype="<c16")
    if data.size != 2**n:
        raise ValueError("amplitude file is truncated or corrupt")
    if qubits is None:
        qubits = [(0, k) for k in range(n)]
    return StateVector(tuple(tuple(q) for q in qubits), data.astype(np.complex128).reshape((2,) * n))
