"""PEPS evolution with belief-propagation gauged truncation.

Conventions
-----------
A :class:`Peps` stores one ``numpy`` array per vertex. Axis 0 is the
physical index; axis ``1 + k`` is the bond to the ``k``-th neighbour in
:meth:`QubitGraph.neighbors` order. The state is the plain contraction of
all tensors; no weights live on the edges.

A message ``m[i, j]`` is the double-layer environment that vertex ``i`` and
everything behind it present to edge ``(i, j)``: a positive semi-definite
``D x D`` matrix indexed ``[ket, bra]`` on that bond, normalized to unit
trace. On a tree at the fixed point, ``m[i, j] (x) m[j, i]`` is the exact
environment of the edge.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuits import Coord, Gate, OtocCircuit, lattice_adjacent
from .tensor_core import DEFAULT_CUTOFF, DenseTensor, positive_qr, truncated_svd

Edge = tuple[Coord, Coord]

UNTRUNCATED_MAX_BOND = 128
EXACT_PEPS_MAX_BOND = 256
CHECKPOINT_MAGIC = b"OTOCPEPS"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# graph and state


@dataclass(frozen=True)
class QubitGraph:
    """Subgraph of the square lattice."""

    vertices: tuple[Coord, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        verts = tuple(sorted(tuple(v) for v in self.vertices))
        edges = tuple(sorted(tuple(sorted((tuple(a), tuple(b)))) for a, b in self.edges))
        vset = set(verts)
        for a, b in edges:
            if a not in vset or b not in vset:
                raise ValueError(f"edge {(a, b)} leaves the vertex set")
            if not lattice_adjacent(a, b):
                raise ValueError(f"edge {(a, b)} is not a lattice bond")
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)
        nbrs: dict[Coord, list[Coord]] = {v: [] for v in verts}
        for a, b in edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "_nbrs", {v: tuple(sorted(n)) for v, n in nbrs.items()})

    @classmethod
    def from_sites(cls, sites: Iterable[Coord]) -> "QubitGraph":
        """Induced subgraph of the square lattice on ``sites``."""
        sites = sorted(tuple(s) for s in sites)
        sset = set(sites)
        edges = []
        for r, c in sites:
            for other in ((r, c + 1), (r + 1, c)):
                if other in sset:
                    edges.append(((r, c), other))
        return cls(tuple(sites), tuple(edges))

    def neighbors(self, v: Coord) -> tuple[Coord, ...]:
        return self._nbrs[v]

    def has_edge(self, a: Coord, b: Coord) -> bool:
        return b in self._nbrs.get(a, ())

    def directed_edges(self) -> list[tuple[Coord, Coord]]:
        out = []
        for a, b in self.edges:
            out.append((a, b))
            out.append((b, a))
        return out

    def is_forest(self) -> bool:
        parent = {v: v for v in self.vertices}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    def to_dict(self) -> dict:
        return {"vertices": [list(v) for v in self.vertices],
                "edges": [[list(a), list(b)] for a, b in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "QubitGraph":
        return cls(tuple(tuple(v) for v in d["vertices"]),
                   tuple((tuple(a), tuple(b)) for a, b in d["edges"]))


def _edge(a: Coord, b: Coord) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(eq=False)
class Peps:
    """Tensor-network state on a :class:`QubitGraph`."""

    graph: QubitGraph
    tensors: dict[Coord, np.ndarray]

    def __post_init__(self):
        for v in self.graph.vertices:
            t = self.tensors[v]
            if t.ndim != 1 + len(self.graph.neighbors(v)) or t.shape[0] != 2:
                raise ValueError(f"tensor at {v} has shape {t.shape}")
        for a, b in self.graph.edges:
            if self.tensors[a].shape[self.axis(a, b)] != self.tensors[b].shape[self.axis(b, a)]:
                raise ValueError(f"bond dimension mismatch on edge {(a, b)}")

    def axis(self, v: Coord, w: Coord) -> int:
        """Axis of ``tensors[v]`` that carries the bond to ``w``."""
        return 1 + self.graph.neighbors(v).index(w)

    def bond_dim(self, a: Coord, b: Coord) -> int:
        return self.tensors[a].shape[self.axis(a, b)]

    @property
    def bond_dims(self) -> dict[Edge, int]:
        return {e: self.bond_dim(*e) for e in self.graph.edges}

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims.values(), default=1)

    def site_tensor(self, v: Coord) -> DenseTensor:
        labels = [("phys", v)] + [("bond", _edge(v, w)) for w in self.graph.neighbors(v)]
        return DenseTensor(self.tensors[v], labels)

    def copy(self) -> "Peps":
        return Peps(self.graph, {v: t.copy() for v, t in self.tensors.items()})


def init_product_peps(graph: QubitGraph) -> Peps:
    """``|0...0>`` with all bonds of dimension one."""
    tensors = {}
    for v in graph.vertices:
        t = np.zeros((2,) + (1,) * len(graph.neighbors(v)), dtype=np.complex128)
        t.reshape(2, -1)[0, 0] = 1.0
        tensors[v] = t
    return Peps(graph, tensors)


def _apply_on_axis(t: np.ndarray, ax: int, mat: np.ndarray) -> np.ndarray:
    """``t'[..., c, ...] = sum_a t[..., a, ...] mat[a, c]`` on axis ``ax``."""
    return np.moveaxis(np.tensordot(t, mat, axes=([ax], [0])), -1, ax)


# ---------------------------------------------------------------------------
# messages


@dataclass
class BpConfig:
    """Truncation and message-passing controls.

    ``max_D = None`` disables the bond cap; singular values at or below
    ``sv_cutoff`` (relative to the state norm) are always dropped.
    """

    max_D: int | None = None
    sv_cutoff: float = DEFAULT_CUTOFF
    bp_tolerance: float = 1e-10
    bp_max_iters: int = 100
    message_init: str = "identity"
    pinv_cutoff: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.max_D is not None and self.max_D < 1:
            raise ValueError("max_D must be >= 1")
        if self.bp_tolerance <= 0 or self.sv_cutoff < 0 or self.pinv_cutoff <= 0:
            raise ValueError("tolerances must be positive")
        if self.bp_max_iters < 1:
            raise ValueError("bp_max_iters must be >= 1")
        if self.message_init not in ("identity", "random-psd"):
            raise ValueError(f"unknown message_init {self.message_init!r}")


def _psd_factors(m: np.ndarray, rel_cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian square root of ``m`` and its pseudo-inverse."""
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    top = w.max() if w.size else 0.0
    root = np.sqrt(w)
    inv = np.zeros_like(root)
    keep = w > rel_cutoff * top
    inv[keep] = 1.0 / root[keep]
    return (v * root) @ v.conj().T, (v * inv) @ v.conj().T


class MessageSet:
    """Directed-edge messages with cached square-root factors."""

    def __init__(self, messages: dict[tuple[Coord, Coord], np.ndarray], pinv_cutoff: float = 1e-12):
        self.messages = dict(messages)
        self.pinv_cutoff = pinv_cutoff
        self._factors: dict[tuple[Coord, Coord], tuple[np.ndarray, np.ndarray]] = {}

    def __getitem__(self, key) -> np.ndarray:
        return self.messages[key]

    def sqrt(self, src: Coord, dst: Coord) -> np.ndarray:
        return self._factor(src, dst)[0]

    def inv_sqrt(self, src: Coord, dst: Coord) -> np.ndarray:
        return self._factor(src, dst)[1]

    def _factor(self, src, dst):
        key = (src, dst)
        if key not in self._factors:
            self._factors[key] = _psd_factors(self.messages[key], self.pinv_cutoff)
        return self._factors[key]

    def updated(self, changes: dict) -> "MessageSet":
        new = MessageSet({**self.messages, **changes}, self.pinv_cutoff)
        new._factors = {k: v for k, v in self._factors.items() if k not in changes}
        return new


def init_messages(p: Peps, cfg: BpConfig | None = None) -> MessageSet:
    """Identity (or seeded random PSD) messages, unit trace."""
    cfg = cfg or BpConfig()
    rng = np.random.default_rng(cfg.seed)
    msgs = {}
    for a, b in p.graph.directed_edges():
        d = p.bond_dim(a, b)
        if cfg.message_init == "identity":
            m = np.eye(d, dtype=np.complex128)
        else:
            x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            m = x @ x.conj().T
        msgs[(a, b)] = m / np.trace(m).real
    return MessageSet(msgs, cfg.pinv_cutoff)


def _outgoing_message(p: Peps, msgs: MessageSet, src: Coord, dst: Coord) -> np.ndarray:
    t = p.tensors[src]
    for k in p.graph.neighbors(src):
        if k != dst:
            t = _apply_on_axis(t, p.axis(src, k), msgs.sqrt(k, src))
    ax = p.axis(src, dst)
    a = np.moveaxis(t, ax, 0).reshape(t.shape[ax], -1)
    m = a @ a.conj().T
    m = (m + m.conj().T) / 2
    tr = np.trace(m).real
    return m / tr if tr > 0 else np.eye(m.shape[0]) / m.shape[0]


def bp_converge(p: Peps, msgs: MessageSet, cfg: BpConfig | None = None) -> tuple[MessageSet, int, float]:
    """Jacobi message passing until the largest message change drops below tolerance.

    Returns
    -------
    messages : MessageSet
    iterations : int
        Number of sweeps performed.
    residual : float
        Largest Frobenius change of a unit-trace message in the last sweep;
        at or above ``cfg.bp_tolerance`` when the iteration cap was hit.
    """
    cfg = cfg or BpConfig()
    directed = p.graph.directed_edges()
    if not directed:
        return msgs, 0, 0.0
    residual = np.inf
    it = 0
    for it in range(1, cfg.bp_max_iters + 1):
        new = {e: _outgoing_message(p, msgs, *e) for e in directed}
        residual = 0.0
        for e, m in new.items():
            old = msgs.messages.get(e)
            if old is None or old.shape != m.shape:
                residual = np.inf
            else:
                residual = max(residual, float(np.linalg.norm(m - old)))
        msgs = MessageSet(new, msgs.pinv_cutoff)
        if residual < cfg.bp_tolerance:
            break
    return msgs, it, float(residual)


# ---------------------------------------------------------------------------
# gate application


def _apply_single(p: Peps, g: Gate) -> Peps:
    v = g.sites[0]
    tensors = dict(p.tensors)
    tensors[v] = np.tensordot(g.matrix(), p.tensors[v], axes=([1], [0]))
    return Peps(p.graph, tensors)


def _split_site(p: Peps, msgs: MessageSet, v: Coord, w: Coord):
    """Absorb environment roots, then QR off the part touching ``(phys, bond vw)``."""
    t = p.tensors[v]
    others = [k for k in p.graph.neighbors(v) if k != w]
    for k in others:
        t = _apply_on_axis(t, p.axis(v, k), msgs.sqrt(k, v))
    outer_axes = [p.axis(v, k) for k in others]
    inner_axes = [0, p.axis(v, w)]
    perm = outer_axes + inner_axes
    moved = np.transpose(t, perm)
    outer_shape = moved.shape[: len(outer_axes)]
    n_out = int(np.prod(outer_shape, dtype=np.int64))
    q, r = positive_qr(moved.reshape(n_out, -1))
    r = r.reshape(r.shape[0], 2, t.shape[p.axis(v, w)])
    return q, r, others, outer_shape


def _rebuild_site(p: Peps, msgs: MessageSet, v: Coord, w: Coord, q, factor, others, outer_shape):
    """Inverse of :func:`_split_site` with the new ``(r, phys, bond)`` factor."""
    k_new = factor.shape[2]
    block = q @ factor.reshape(factor.shape[0], -1)
    block = block.reshape(tuple(outer_shape) + (2, k_new))
    # block axes: outer bonds (in `others` order), phys, new bond
    nbrs = p.graph.neighbors(v)
    src_pos = {k: i for i, k in enumerate(others)}
    order = []
    for k in nbrs:
        order.append(len(others) + 1 if k == w else src_pos[k])
    t = np.transpose(block, [len(others)] + order)
    for k in others:
        t = _apply_on_axis(t, 1 + nbrs.index(k), msgs.inv_sqrt(k, v))
    return np.ascontiguousarray(t)


@dataclass
class GateUpdate:
    """Result of one BP-gauged gate application."""

    peps: Peps
    messages: MessageSet
    discarded_weight: float
    singular_values: np.ndarray | None = None


def apply_gate_bp(p: Peps, msgs: MessageSet, g: Gate, cfg: BpConfig | None = None) -> GateUpdate:
    """Apply ``g`` and truncate the touched bond in the environment of ``msgs``.

    Single-qubit gates are contracted into their site tensor. For a
    two-qubit gate on edge ``(v, w)``: the square roots of the incoming
    messages from all other neighbours are absorbed into both tensors, each
    is QR split, the gate acts on the two small ``R`` factors, the result is
    SVD truncated, ``sqrt(lambda)`` goes to each side, the edge messages
    become ``diag(lambda)``, and the absorbed message roots are removed again
    with pseudo-inverses.
    """
    cfg = cfg or BpConfig()
    if not g.is_two_qubit:
        return GateUpdate(_apply_single(p, g), msgs, 0.0)
    v, w = g.sites
    if not p.graph.has_edge(v, w):
        raise ValueError(f"gate on {g.sites} does not match a graph edge")
    qv, rv, others_v, shape_v = _split_site(p, msgs, v, w)
    qw, rw, others_w, shape_w = _split_site(p, msgs, w, v)
    theta = np.tensordot(rv, rw, axes=([2], [2]))  # (iv, sv, iw, sw)
    op = g.matrix().reshape(2, 2, 2, 2)
    theta = np.einsum("abcd,icjd->iabj", op, theta)  # (iv, sv', sw', iw)
    dv, dw = theta.shape[0], theta.shape[3]
    mat = theta.reshape(dv * 2, 2 * dw)
    scale = np.linalg.norm(mat)
    u, s, vh, discarded = truncated_svd(mat / scale, cfg.max_D, cfg.sv_cutoff)
    s = s / np.linalg.norm(s)
    root = np.sqrt(s)
    fv = u.reshape(dv, 2, len(s)) * root
    fw = vh.reshape(len(s), 2, dw).transpose(2, 1, 0) * root
    tensors = dict(p.tensors)
    tensors[v] = _rebuild_site(p, msgs, v, w, qv, fv, others_v, shape_v)
    tensors[w] = _rebuild_site(p, msgs, w, v, qw, fw, others_w, shape_w)
    edge_msg = np.diag(s / s.sum()).astype(np.complex128)
    new_msgs = msgs.updated({(v, w): edge_msg, (w, v): edge_msg.copy()})
    return GateUpdate(Peps(p.graph, tensors), new_msgs, float(discarded), s)


# ---------------------------------------------------------------------------
# evolution drivers


@dataclass
class EvolutionDiagnostics:
    """Per-layer bookkeeping of a PEPS evolution."""

    layer_discarded: list[float] = field(default_factory=list)
    layer_max_bond: list[int] = field(default_factory=list)
    bp_iterations: list[int] = field(default_factory=list)
    bp_residuals: list[float] = field(default_factory=list)

    @property
    def total_discarded(self) -> float:
        return float(sum(self.layer_discarded))

    @property
    def total_bp_iterations(self) -> int:
        return int(sum(self.bp_iterations))


def gate_layers(gates: Sequence[Gate]) -> list[list[Gate]]:
    """Group consecutive gates sharing ``(segment, block, layer)``."""
    layers: list[list[Gate]] = []
    key = None
    for g in gates:
        k = (g.segment, g.block, g.layer)
        if k != key:
            layers.append([])
            key = k
        layers[-1].append(g)
    return layers


def evolve_peps_bp(
    c: OtocCircuit,
    cfg: BpConfig | None = None,
    resync_every: int = 1,
    max_bond_guard: int | None = None,
    on_gate: Callable[[Gate, Peps], None] | None = None,
) -> tuple[Peps, EvolutionDiagnostics]:
    """Evolve ``|0...0>`` through ``c`` with BP-gauged per-gate truncation.

    Messages are re-converged after every ``resync_every`` layers that
    contain two-qubit gates, before the next such layer is applied.
    ``on_gate`` is called with each gate and the state right after it.
    """
    cfg = cfg or BpConfig()
    if resync_every < 1:
        raise ValueError("resync_every must be >= 1")
    graph = QubitGraph.from_sites(c.active_qubits)
    p = init_product_peps(graph)
    msgs = init_messages(p, cfg)
    diag = EvolutionDiagnostics()
    since_sync = 0
    for layer in gate_layers(c.gates):
        has_two = any(g.is_two_qubit for g in layer)
        if has_two and since_sync >= resync_every:
            msgs, iters, res = bp_converge(p, msgs, cfg)
            diag.bp_iterations.append(iters)
            diag.bp_residuals.append(res)
            since_sync = 0
        discarded = 0.0
        for g in layer:
            upd = apply_gate_bp(p, msgs, g, cfg)
            p, msgs = upd.peps, upd.messages
            discarded += upd.discarded_weight
            if on_gate is not None:
                on_gate(g, p)
        if has_two:
            since_sync += 1
            if max_bond_guard is not None and p.max_bond > max_bond_guard:
                raise MemoryError(f"bond dimension {p.max_bond} exceeds the guard {max_bond_guard}")
        diag.layer_discarded.append(discarded)
        diag.layer_max_bond.append(p.max_bond)
    return p, diag


def evolve_peps_untruncated(
    c: OtocCircuit,
    sv_cutoff: float = DEFAULT_CUTOFF,
    max_bond: int = UNTRUNCATED_MAX_BOND,
    on_gate: Callable[[Gate, Peps], None] | None = None,
) -> Peps:
    """Evolution that only drops singular values below ``sv_cutoff``.

    Raises
    ------
    MemoryError
        When a bond grows beyond ``max_bond``.
    """
    cfg = BpConfig(max_D=None, sv_cutoff=sv_cutoff)
    p, _ = evolve_peps_bp(c, cfg, resync_every=1, max_bond_guard=max_bond, on_gate=on_gate)
    return p


def truncate_edge_bp(p: Peps, msgs: MessageSet, a: Coord, b: Coord, cfg: BpConfig):
    """Truncate edge ``(a, b)`` in the gauge defined by its two messages.

    With ``Y_a = sqrt(m[a, b])`` and ``Y_b = sqrt(m[b, a])`` the bond matrix
    ``Y_a^T Y_b`` is SVD truncated and the projectors
    ``pinv(Y)^T U sqrt(s)`` are contracted into the two tensors.
    """
    ya, ya_inv = msgs.sqrt(a, b), msgs.inv_sqrt(a, b)
    yb, yb_inv = msgs.sqrt(b, a), msgs.inv_sqrt(b, a)
    bond = ya.T @ yb
    scale = np.linalg.norm(bond)
    u, s, vh, discarded = truncated_svd(bond / scale, cfg.max_D, cfg.sv_cutoff)
    s = s / np.linalg.norm(s)
    root = np.sqrt(s)
    proj_a = (ya_inv.T @ u) * root
    proj_b = (yb_inv.T @ vh.T) * root
    tensors = dict(p.tensors)
    tensors[a] = _apply_on_axis(p.tensors[a], p.axis(a, b), proj_a)
    tensors[b] = _apply_on_axis(p.tensors[b], p.axis(b, a), proj_b)
    edge_msg = np.diag(s / s.sum()).astype(np.complex128)
    new_msgs = msgs.updated({(a, b): edge_msg, (b, a): edge_msg.copy()})
    return Peps(p.graph, tensors), new_msgs, float(discarded)


def final_truncate_bp(p: Peps, cfg: BpConfig, msgs: MessageSet | None = None) -> Peps:
    """Converge BP once, then truncate every edge in lexicographic order."""
    if msgs is None:
        msgs = init_messages(p, cfg)
    msgs, _, _ = bp_converge(p, msgs, cfg)
    for a, b in p.graph.edges:
        p, msgs, _ = truncate_edge_bp(p, msgs, a, b, cfg)
    return p


# ---------------------------------------------------------------------------
# exact construction


def exact_peps_from_circuit(c: OtocCircuit, max_bond: int = EXACT_PEPS_MAX_BOND) -> Peps:
    """PEPS obtained by splitting every two-qubit gate with an operator SVD.

    Each gate contributes a bond of dimension at most 4 to its edge; all
    bonds created on one edge are fused in chronological order.
    """
    graph = QubitGraph.from_sites(c.active_qubits)
    dims: dict[Edge, list[int]] = {e: [] for e in graph.edges}
    for g in c.gates:
        if g.is_two_qubit:
            e = _edge(*g.sites)
            if e not in dims:
                raise ValueError(f"gate on {g.sites} does not match a graph edge")
    site = {v: np.array([1.0, 0.0], dtype=np.complex128) for v in graph.vertices}
    legs: dict[Coord, list[Edge]] = {v: [] for v in graph.vertices}
    for g in c.gates:
        mat = g.matrix()
        if not g.is_two_qubit:
            v = g.sites[0]
            site[v] = np.tensordot(mat, site[v], axes=([1], [0]))
            continue
        v, w = g.sites
        op = mat.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)  # (v'v, w'w)
        u, s, vh, _ = truncated_svd(op, None, DEFAULT_CUTOFF * np.max(np.abs(op)))
        root = np.sqrt(s)
        a_part = (u * root).reshape(2, 2, len(s))  # (v', v, k)
        b_part = (vh.T * root).reshape(2, 2, len(s))  # (w', w, k)
        e = _edge(v, w)
        dims[e].append(len(s))
        if int(np.prod(dims[e])) > max_bond:
            raise MemoryError(f"edge {e} would exceed bond dimension {max_bond}")
        site[v] = np.tensordot(a_part, site[v], axes=([1], [0]))  # (v', k, ...)
        site[v] = np.moveaxis(site[v], 1, -1)
        site[w] = np.tensordot(b_part, site[w], axes=([1], [0]))
        site[w] = np.moveaxis(site[w], 1, -1)
        legs[v].append(e)
        legs[w].append(e)
    tensors = {}
    for v in graph.vertices:
        t = site[v]
        nbrs = graph.neighbors(v)
        order = [0]
        shape = [2]
        for w in nbrs:
            e = _edge(v, w)
            axes = [1 + k for k, leg in enumerate(legs[v]) if leg == e]
            order.extend(axes)
            shape.append(int(np.prod([t.shape[ax] for ax in axes], dtype=np.int64)) if axes else 1)
        tensors[v] = np.ascontiguousarray(np.transpose(t, order).reshape(shape))
    return Peps(graph, tensors)


# ---------------------------------------------------------------------------
# checkpoints


def save_peps(path: str | Path, p: Peps) -> None:
    """Write a versioned binary checkpoint.

    Layout: 8-byte magic, little-endian uint32 version, uint64 header
    length, UTF-8 JSON header (graph plus per-vertex shapes and index
    labels), then each tensor's complex128 data in vertex order.
    """
    header = {
        "graph": p.graph.to_dict(),
        "tensors": [
            {
                "vertex": list(v),
                "shape": list(p.tensors[v].shape),
                "indices": ["phys"] + [[list(v), list(w)] for w in p.graph.neighbors(v)],
            }
            for v in p.graph.vertices
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for v in p.graph.vertices:
            fh.write(np.ascontiguousarray(p.tensors[v]).astype("<c16").tobytes())


def load_peps(path: str | Path) -> Peps:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a PEPS checkpoint")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + hlen])
    graph = QubitGraph.from_dict(header["graph"])
    offset = 20 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(raw, dtype="<c16", count=n, offset=offset)
        tensors[tuple(entry["vertex"])] = data.astype(np.complex128).reshape(shape)
        offset += 16 * n
    return Peps(graph, tensors)
