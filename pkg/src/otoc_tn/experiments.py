"""Shared experiment drivers: standard layouts and single-instance runs."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .circuits import Coord, EnsembleSpec, Geometry, OtocCircuit
from .extraction import BmpsConfig, contract_bmps, contract_exact, peps_to_statevector
from .mps import evolve_mps, mps_expectation_z, to_statevector
from .peps_bp import BpConfig, evolve_peps_bp, evolve_peps_untruncated, final_truncate_bp
from .statevector import MAX_QUBITS, evolve_exact, expectation_z, fidelity

METHODS = ("exact", "mps", "peps-bp", "peps-untruncated-final")
ORACLE_MAX_QUBITS = 24

# Butterfly placements on a 14 x 14 grid with M at (6, 6). Each prunes to the
# listed qubit count under the default 2D layer pattern.
LAYOUTS_2D: dict[int, tuple[int, Coord]] = {
    8: (5, (6, 7)),
    10: (6, (7, 6)),
    12: (7, (7, 7)),
}


def grid_ensemble(
    num_qubits: int,
    gate_family: str = "iswap",
    alpha: float = 1.0,
    num_instances: int = 50,
    master_seed: int = 0,
) -> EnsembleSpec:
    """One of the standard 2D ensembles of :data:`LAYOUTS_2D`."""
    if num_qubits not in LAYOUTS_2D:
        raise ValueError(f"no standard layout with {num_qubits} qubits; have {sorted(LAYOUTS_2D)}")
    depth, b_site = LAYOUTS_2D[num_qubits]
    return EnsembleSpec(
        Geometry.grid(14, 14), depth, (6, 6), b_site, gate_family, alpha,
        num_instances=num_instances, master_seed=master_seed,
    )


@dataclass
class RunRecord:
    """Outcome of one method on one circuit at one ``(D, chi)`` setting."""

    instance: int
    method: str
    D: int | None
    chi: int | None
    exact: float | None
    approx: float
    fidelity: float | None
    discarded_weight: float
    runtime_s: float
    bp_iters: int | None


def exact_value(c: OtocCircuit, max_qubits: int = ORACLE_MAX_QUBITS) -> float | None:
    """State-vector correlator, or ``None`` above ``max_qubits``."""
    if c.num_qubits > min(max_qubits, MAX_QUBITS):
        return None
    return expectation_z(evolve_exact(c), c.m_site)


def run_method(
    c: OtocCircuit,
    method: str,
    D: int | None = None,
    chi: int | None = None,
    exact: float | None = None,
    with_fidelity: bool = True,
    resync_every: int = 1,
) -> RunRecord:
    """Simulate ``c`` with one method and return the correlator estimate.

    ``D = None`` means no bond cap; ``chi = None`` means exact extraction.
    ``exact`` is reused when given, otherwise computed when feasible.
    Fidelities against the exact state are computed for up to
    :data:`ORACLE_MAX_QUBITS` qubits when ``with_fidelity`` is set.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    feasible = c.num_qubits <= ORACLE_MAX_QUBITS
    ref = evolve_exact(c) if feasible and (with_fidelity or exact is None) else None
    if exact is None and ref is not None:
        exact = expectation_z(ref, c.m_site)
    t0 = time.perf_counter()
    discarded = 0.0
    bp_iters = None
    state = None
    if method == "exact":
        if ref is None:
            raise MemoryError("circuit too large for the exact method")
        approx = expectation_z(ref, c.m_site)
        state = ref
    elif method == "mps":
        m, discarded = evolve_mps(c, max_D=D)
        approx = mps_expectation_z(m, c.m_site)
        if with_fidelity and ref is not None:
            state = to_statevector(m)
    else:
        if method == "peps-bp":
            p, diag = evolve_peps_bp(c, BpConfig(max_D=D), resync_every=resync_every)
            discarded = diag.total_discarded
            bp_iters = diag.total_bp_iterations
        else:
            p = evolve_peps_untruncated(c)
            if D is not None:
                p = final_truncate_bp(p, BpConfig(max_D=D))
        if chi is None:
            approx, _ = contract_exact(p, c.m_site)
        else:
            approx = contract_bmps(p, c.m_site, BmpsConfig(chi)).expectation
        if with_fidelity and ref is not None:
            state = peps_to_statevector(p)
    runtime = time.perf_counter() - t0
    fid = fidelity(ref, state) if state is not None and ref is not None else None
    return RunRecord(c.instance, method, D, chi, exact, float(approx), fid, float(discarded), runtime, bp_iters)


def mean_infidelity(records: list[RunRecord]) -> float:
    vals = [1.0 - r.fidelity for r in records if r.fidelity is not None]
    if not vals:
        raise ValueError("no fidelities recorded")
    return float(np.mean(vals))
