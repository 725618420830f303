"""OTOC extraction from a PEPS: exact contraction and boundary-MPS contraction.

The boundary MPS keeps ket and bra bonds as separate legs. A site of a
boundary MPS has axes ``(left, ket, bra, right)``, where ``ket`` and ``bra``
are the bonds pointing into the next unabsorbed row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import Coord
from .peps_bp import Peps
from .statevector import StateVector, expectation_z
from .tensor_core import contract, positive_qr, truncated_svd

EXACT_MAX_ELEMENTS = 2**25
BMPS_MAX_ELEMENTS = 2**26
_Z = np.diag([1.0, -1.0]).astype(np.complex128)


# ---------------------------------------------------------------------------
# exact contraction


def _exact_order(p: Peps) -> list[Coord]:
    """Column-major absorption order."""
    return sorted(p.graph.vertices, key=lambda v: (v[1], v[0]))


def peps_to_statevector(p: Peps, max_elements: int = EXACT_MAX_ELEMENTS) -> StateVector:
    """Contract the single-layer network into dense amplitudes.

    Sites are absorbed column by column. The running tensor holds one
    physical leg per absorbed site plus the open bonds of the cut.

    Raises
    ------
    MemoryError
        When an intermediate tensor would exceed ``max_elements`` entries.
    """
    acc = None
    for v in _exact_order(p):
        t = p.site_tensor(v)
        if acc is None:
            acc = t
            continue
        shared = [lab for lab in t.labels if lab in set(acc.labels)]
        size = np.prod(acc.shape, dtype=np.float64) * np.prod(t.shape, dtype=np.float64)
        size /= np.prod([t.dim(lab) for lab in shared], dtype=np.float64) ** 2
        if size > max_elements:
            raise MemoryError(f"exact contraction needs {size:.3g} elements, guard is {max_elements}")
        acc = contract(acc, t, [(lab, lab) for lab in shared])
    leftover = [lab for lab in acc.labels if lab[0] == "bond"]
    data = acc.data
    if leftover:
        # edges whose bond never closed can only be dimension one here
        keep = [k for k, lab in enumerate(acc.labels) if lab[0] == "phys"]
        data = data.reshape([acc.shape[k] for k in keep])
    phys = [lab for lab in acc.labels if lab[0] == "phys"]
    qubits = tuple(sorted(p.graph.vertices))
    perm = [phys.index(("phys", q)) for q in qubits]
    return StateVector(qubits, np.ascontiguousarray(np.transpose(data, perm)))


def contract_exact(p: Peps, observable_site: Coord, max_elements: int = EXACT_MAX_ELEMENTS) -> tuple[float, float]:
    """``<psi|Z|psi> / <psi|psi>`` and ``<psi|psi>`` without truncation.

    The double-layer value is obtained from the single-layer amplitudes,
    which costs less memory than contracting ket and bra together.
    """
    sv = peps_to_statevector(p, max_elements)
    norm = float(np.vdot(sv.vector(), sv.vector()).real)
    return expectation_z(sv, tuple(observable_site)), norm


# ---------------------------------------------------------------------------
# boundary MPS


@dataclass
class BmpsConfig:
    """Boundary-MPS controls.

    ``sweep_axis = None`` picks the orientation in which the boundary MPS
    runs along the longer edge of the bounding rectangle.
    """

    chi: int
    sweep_axis: str | None = None
    truncation_cutoff: float = 0.0
    max_elements: int = BMPS_MAX_ELEMENTS

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError("chi must be >= 1")
        if self.sweep_axis not in (None, "rows", "columns"):
            raise ValueError(f"unknown sweep_axis {self.sweep_axis!r}")
        if self.truncation_cutoff < 0:
            raise ValueError("truncation_cutoff must be non-negative")


@dataclass
class BmpsStats:
    """Operation counts of one boundary-MPS contraction.

    ``contraction_flops`` counts complex multiply-adds of tensor
    contractions; ``factorization_flops`` estimates SVD and QR work as
    ``m * n * min(m, n)``.
    """

    contraction_flops: int = 0
    factorization_flops: int = 0
    max_bond: int = 1
    truncations: int = 0

    def einsum(self, subscripts: str, *ops):
        inputs, _ = subscripts.split("->")
        dims = {}
        for term, op in zip(inputs.split(","), ops):
            for ch, d in zip(term, op.shape):
                dims[ch] = d
        self.contraction_flops += int(np.prod(list(dims.values()), dtype=np.float64))
        return np.einsum(subscripts, *ops, optimize=False)

    def factorized(self, m: int, n: int) -> None:
        self.factorization_flops += int(m * n * min(m, n))


@dataclass
class BmpsResult:
    expectation: float
    norm: float
    truncation_error: float
    stats: BmpsStats = field(default_factory=BmpsStats)

    def __iter__(self):
        return iter((self.expectation, self.norm, self.truncation_error))


def _grid_tensors(p: Peps, transpose: bool):
    """Embed ``p`` in its bounding rectangle with axes ``(phys, up, left, down, right)``.

    Holes become ``1 x 1 x 1 x 1 x 1`` tensors. With ``transpose`` the
    rectangle is mirrored on its diagonal so that columns become rows.
    """
    verts = p.graph.vertices
    r0 = min(v[0] for v in verts)
    c0 = min(v[1] for v in verts)
    rows = max(v[0] for v in verts) - r0 + 1
    cols = max(v[1] for v in verts) - c0 + 1
    hole = np.ones((1, 1, 1, 1, 1), dtype=np.complex128)
    grid = [[hole] * cols for _ in range(rows)]
    dirs = ((-1, 0), (0, -1), (1, 0), (0, 1))
    for v in verts:
        t = p.tensors[v]
        nbrs = p.graph.neighbors(v)
        order = [0]
        expand = []
        for k, (dr, dc) in enumerate(dirs):
            w = (v[0] + dr, v[1] + dc)
            if w in nbrs:
                order.append(1 + nbrs.index(w))
            else:
                expand.append(1 + k)
        t5 = np.transpose(t, order)
        for ax in expand:
            t5 = np.expand_dims(t5, ax)
        grid[v[0] - r0][v[1] - c0] = t5
    if transpose:
        # swap up<->left and down<->right
        grid = [[grid[r][c].transpose(0, 2, 1, 4, 3) for r in range(rows)] for c in range(cols)]
    return grid, (r0, c0)


def _flip_vertical(row: list[np.ndarray]) -> list[np.ndarray]:
    return [t.transpose(0, 3, 2, 1, 4) for t in row]


def _trivial_boundary(row: list[np.ndarray]) -> list[np.ndarray]:
    return [np.ones((1, 1, 1, 1), dtype=np.complex128) for _ in row]


def _absorb_row(
    mps: list[np.ndarray], row: list[np.ndarray], cfg: BmpsConfig, stats: BmpsStats
) -> tuple[list[np.ndarray], float, float]:
    """Zip-up absorption of one double-layer row into the boundary MPS.

    Returns the new sites, the discarded weight relative to each SVD input,
    and the log of the scale factor pulled out to keep entries of order one.
    """
    carry = np.ones((1, 1, 1, 1), dtype=np.complex128)  # (new, old, ket-left, bra-left)
    out = []
    err = 0.0
    log_scale = 0.0
    for x, a in zip(mps, row):
        t1 = stats.einsum("nalm,akbc->nlmkbc", carry, x)
        t2 = stats.einsum("nlmkbc,pkldr->nmbcpdr", t1, a)
        t3 = stats.einsum("nmbcpdr,pbmes->ndecrs", t2, a.conj())
        n, d, e, c, r, s = t3.shape
        if t3.size > cfg.max_elements:
            raise MemoryError(f"boundary tensor of {t3.size} elements exceeds the guard")
        mat = t3.reshape(n * d * e, c * r * s)
        scale = np.linalg.norm(mat)
        if scale == 0.0:
            raise FloatingPointError("boundary MPS collapsed to zero")
        log_scale += np.log(scale)
        stats.factorized(*mat.shape)
        u, sv, vh, discarded = truncated_svd(mat / scale, cfg.chi, cfg.truncation_cutoff)
        err += discarded
        if discarded > 0:
            stats.truncations += 1
        out.append(u.reshape(n, d, e, len(sv)))
        carry = (sv[:, None] * vh).reshape(len(sv), c, r, s)
        stats.max_bond = max(stats.max_bond, len(sv))
    # trailing carry is (k, 1, 1, 1): fold it into the last site
    out[-1] = np.tensordot(out[-1], carry.reshape(carry.shape[0], 1), axes=([3], [0]))
    return out, err, log_scale


def _right_canonicalize(mps: list[np.ndarray], stats: BmpsStats) -> tuple[list[np.ndarray], float]:
    """Right-orthogonalize the boundary MPS; returns the log of its norm."""
    mps = list(mps)
    for k in range(len(mps) - 1, 0, -1):
        t = mps[k]
        a, d, e, c = t.shape
        stats.factorized(d * e * c, a)
        q, r = positive_qr(t.reshape(a, d * e * c).T)
        mps[k] = q.T.reshape(q.shape[1], d, e, c)
        mps[k - 1] = np.tensordot(mps[k - 1], r.T, axes=([3], [0]))
    norm = np.linalg.norm(mps[0])
    mps[0] = mps[0] / norm
    return mps, float(np.log(norm))


def _sweep(rows: list[list[np.ndarray]], cfg: BmpsConfig, stats: BmpsStats):
    """Boundary MPS after absorbing ``rows`` top to bottom."""
    mps = _trivial_boundary(rows[0]) if rows else None
    err = 0.0
    log_scale = 0.0
    for row in rows:
        mps, ls = _right_canonicalize(mps, stats)
        log_scale += ls
        mps, e, ls = _absorb_row(mps, row, cfg, stats)
        err += e
        log_scale += ls
    return mps, err, log_scale


def _close_row(top, row, bottom, op_col: int, op: np.ndarray, stats: BmpsStats) -> complex:
    """Contract top boundary, one double-layer row and bottom boundary."""
    env = np.ones((1, 1, 1, 1), dtype=np.complex128)  # (top, ket, bra, bottom)
    for col, (t, a, b) in enumerate(zip(top, row, bottom)):
        ket = a if col != op_col else np.tensordot(op, a, axes=([1], [0]))
        e1 = stats.einsum("tlmu,tkbs->lmuskb", env, t)
        e2 = stats.einsum("lmuskb,pkldr->muspbdr", e1, ket)
        e3 = stats.einsum("muspbdr,pbmex->usdrex", e2, a.conj())
        env = stats.einsum("usdrex,udev->srxv", e3, b)
    return complex(env.reshape(-1)[0])


def contract_bmps(p: Peps, observable_site: Coord, cfg: BmpsConfig) -> BmpsResult:
    """Approximate ``<psi|Z|psi> / <psi|psi>`` by two-sided boundary MPS.

    Rows above the observable are absorbed into a top boundary, rows below
    into a bottom boundary, each truncated to ``cfg.chi`` after every row.
    The observable row is then contracted exactly between the two, once
    with ``Z`` and once with the identity, so both values share the same
    environment approximation.

    Returns
    -------
    BmpsResult
        Unpacks as ``(expectation, norm, truncation_error)``, where the
        error sums discarded weights relative to each truncated boundary
        tensor. ``stats`` holds operation counts.
    """
    observable_site = tuple(observable_site)
    if observable_site not in set(p.graph.vertices):
        raise ValueError(f"{observable_site} is not a vertex of the PEPS")
    verts = p.graph.vertices
    rows = max(v[0] for v in verts) - min(v[0] for v in verts) + 1
    cols = max(v[1] for v in verts) - min(v[1] for v in verts) + 1
    axis = cfg.sweep_axis or ("rows" if cols >= rows else "columns")
    transpose = axis == "columns"
    grid, (r0, c0) = _grid_tensors(p, transpose)
    mr, mc = observable_site[0] - r0, observable_site[1] - c0
    if transpose:
        mr, mc = mc, mr
    stats = BmpsStats()
    top, err_t, log_t = _sweep(grid[:mr], cfg, stats)
    below = [_flip_vertical(row) for row in reversed(grid[mr + 1:])]
    bottom, err_b, log_b = _sweep(below, cfg, stats)
    mid = grid[mr]
    top = top if top is not None else _trivial_boundary(mid)
    bottom = bottom if bottom is not None else _trivial_boundary(mid)
    num = _close_row(top, mid, bottom, mc, _Z, stats)
    den = _close_row(top, mid, bottom, mc, np.eye(2, dtype=np.complex128), stats)
    if den == 0:
        raise FloatingPointError("boundary contraction of the norm vanished")
    expectation = float((num / den).real)
    norm = float(den.real * np.exp(log_t + log_b))
    return BmpsResult(expectation, norm, err_t + err_b, stats)


def exact_chi_bound(p: Peps, sweep_axis: str | None = None) -> int:
    """Smallest ``chi`` at which :func:`contract_bmps` truncates nothing.

    Zip-up absorption splits each column from everything to its right
    before the right part is absorbed, so the rank at a cut is bounded by
    the squared product of the vertical bonds left of it and by the squared
    product of the horizontal bonds absorbed so far, but not by anything to
    its right.
    """
    verts = p.graph.vertices
    rows = max(v[0] for v in verts) - min(v[0] for v in verts) + 1
    cols = max(v[1] for v in verts) - min(v[1] for v in verts) + 1
    axis = sweep_axis or ("rows" if cols >= rows else "columns")
    grid, _ = _grid_tensors(p, axis == "columns")
    best = 1
    nc = len(grid[0])
    for depth in range(len(grid) + 1):
        for side, leg in ((grid[:depth], 3), (list(reversed(grid[depth:])), 1)):
            if not side:
                continue
            vert = [side[-1][c].shape[leg] ** 2 for c in range(nc)]
            for cut in range(1, nc):
                horiz = int(np.prod([row[cut - 1].shape[4] ** 2 for row in side], dtype=np.float64))
                left = int(np.prod(vert[:cut], dtype=np.float64))
                best = max(best, min(horiz, left))
    return best


def cost_model(num_sites: int, D: int, chi: int) -> float:
    """``N (D^4 chi^3 + D^6 chi^2)`` operation-count model of the sweep."""
    return float(num_sites) * (D**4 * chi**3 + D**6 * chi**2)
