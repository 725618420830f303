"""Random OTOC circuit ensembles on lines and square grids.

A circuit for the correlator is built from a brickwall evolution ``U``:

* ``otoc1``: ``U``, then Pauli X at the butterfly site, then ``U^dagger``;
  the observable is Pauli Z at the measurement site.
* ``otoc2``: ``U, B, U^dagger, M, U, B, U^dagger`` with ``M`` the Pauli Z
  applied mid-circuit.

Gates carry a ``segment`` tag (``"u"``, ``"b"``, ``"udag"`` or ``"m"``) and a
``block`` index so that the two copies of ``U`` in ``otoc2`` stay
distinguishable. Lightcone pruning removes gates that cannot influence the
measured value and then drops idle qubits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

Coord = tuple[int, int]

LAYER_PATTERN_1D = ("even", "odd")
# Staggered 4-cycle on the square lattice. A site with even (row + col)
# couples right, then down, then left, then up. Interleaving the two
# directions makes the causal cone a diamond: speed 1/2 along the lattice
# vectors and 1/(2 sqrt 2) along the diagonals.
LAYER_PATTERN_2D = ("right", "down", "left-shifted", "up-shifted")

CIRCUIT_FORMAT_VERSION = 1

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class Geometry:
    """A line (``rows == 1``) or a rectangular grid of qubits.

    Sites are ``(row, col)`` tuples; a line uses row 0 throughout.
    """

    kind: str
    rows: int
    cols: int

    def __post_init__(self):
        if self.kind not in ("line", "grid"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("geometry extents must be positive")
        if self.kind == "line" and self.rows != 1:
            raise ValueError("a line geometry has exactly one row")

    @classmethod
    def line(cls, width: int) -> "Geometry":
        return cls("line", 1, width)

    @classmethod
    def grid(cls, rows: int, cols: int) -> "Geometry":
        return cls("grid", rows, cols)

    @property
    def is_line(self) -> bool:
        return self.kind == "line"

    def contains(self, site: Sequence[int]) -> bool:
        r, c = site
        return 0 <= r < self.rows and 0 <= c < self.cols

    def sites(self) -> list[Coord]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def layer_bonds(self, layer: int) -> list[tuple[Coord, Coord]]:
        """Bonds receiving a two-qubit gate in ``layer``, sorted."""
        bonds = []
        if self.is_line:
            for c in range(layer % 2, self.cols - 1, 2):
                bonds.append(((0, c), (0, c + 1)))
            return bonds
        kind = LAYER_PATTERN_2D[layer % 4]
        parity = 0 if kind in ("right", "down") else 1
        horizontal = kind in ("right", "left-shifted")
        for r in range(self.rows):
            for c in range(self.cols):
                if (r + c) % 2 != parity:
                    continue
                other = (r, c + 1) if horizontal else (r + 1, c)
                if self.contains(other):
                    bonds.append(((r, c), other))
        return sorted(bonds)

    def to_dict(self) -> dict:
        pattern = LAYER_PATTERN_1D if self.is_line else LAYER_PATTERN_2D
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols,
                "layer_pattern": list(pattern)}

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(d["kind"], int(d["rows"]), int(d["cols"]))


def lattice_adjacent(a: Sequence[int], b: Sequence[int]) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


# ---------------------------------------------------------------------------
# gate kinds


@dataclass(frozen=True)
class SingleQubitRot:
    """``exp(i theta (cos(phi) X + sin(phi) Y))``."""

    theta: float
    phi: float
    name = "rot"

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array(
            [[c, 1j * s * np.exp(-1j * self.phi)], [1j * s * np.exp(1j * self.phi), c]],
            dtype=np.complex128,
        )

    def params(self) -> dict:
        return {"theta": self.theta, "phi": self.phi}


@dataclass(frozen=True)
class FSimLike:
    """Partial iSWAP ``exp(i alpha pi/4 (XX + YY))`` followed by a controlled phase.

    The controlled phase multiplies ``|11>`` by ``exp(-i cphase)``.
    """

    alpha: float = 1.0
    cphase: float = 0.35
    name = "fsim"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")

    def matrix(self) -> np.ndarray:
        angle = 2.0 * self.alpha * math.pi / 4.0
        m = np.zeros((4, 4), dtype=np.complex128)
        m[0, 0] = 1.0
        m[1, 1] = m[2, 2] = math.cos(angle)
        m[1, 2] = m[2, 1] = 1j * math.sin(angle)
        m[3, 3] = np.exp(-1j * self.cphase)
        return m

    def params(self) -> dict:
        return {"alpha": self.alpha, "cphase": self.cphase}


@dataclass(frozen=True, eq=False)
class HaarTwoQubit:
    """An explicit 4x4 unitary, typically Haar random."""

    unitary: np.ndarray
    name = "haar"

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=np.complex128)
        if u.shape != (4, 4):
            raise ValueError("two-qubit unitary must be 4x4")
        if np.max(np.abs(u.conj().T @ u - np.eye(4))) > 1e-12:
            raise ValueError("matrix is not unitary")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)

    def matrix(self) -> np.ndarray:
        return self.unitary.copy()

    def params(self) -> dict:
        return {"re": self.unitary.real.tolist(), "im": self.unitary.imag.tolist()}


@dataclass(frozen=True)
class PauliX:
    name = "x"

    def matrix(self) -> np.ndarray:
        return _PAULI_X.copy()

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class PauliZ:
    name = "z"

    def matrix(self) -> np.ndarray:
        return _PAULI_Z.copy()

    def params(self) -> dict:
        return {}


GateKind = SingleQubitRot | FSimLike | HaarTwoQubit | PauliX | PauliZ


def kind_from_dict(name: str, params: dict) -> GateKind:
    if name == "rot":
        return SingleQubitRot(float(params["theta"]), float(params["phi"]))
    if name == "fsim":
        return FSimLike(float(params["alpha"]), float(params["cphase"]))
    if name == "haar":
        return HaarTwoQubit(np.array(params["re"]) + 1j * np.array(params["im"]))
    if name == "x":
        return PauliX()
    if name == "z":
        return PauliZ()
    raise ValueError(f"unknown gate kind {name!r}")


def haar_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


@dataclass(frozen=True, eq=False)
class Gate:
    """A gate placed on one or two sites.

    ``adjoint`` marks the conjugate-transposed copies that make up ``U^dagger``.
    """

    kind: GateKind
    sites: tuple[Coord, ...]
    layer: int
    segment: str = "u"
    block: int = 0
    adjoint: bool = False

    def __post_init__(self):
        sites = tuple(tuple(int(x) for x in s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(sites) not in (1, 2):
            raise ValueError("gates act on one or two sites")
        if len(sites) == 2 and not lattice_adjacent(*sites):
            raise ValueError(f"two-qubit gate on non-adjacent sites {sites}")
        if self.layer < 0:
            raise ValueError("layer must be non-negative")
        if self.segment not in ("u", "b", "udag", "m"):
            raise ValueError(f"unknown segment {self.segment!r}")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.sites) == 2

    @property
    def mirror_key(self) -> tuple:
        return (self.layer, self.sites)

    def matrix(self) -> np.ndarray:
        m = self.kind.matrix()
        return m.conj().T if self.adjoint else m

    def adjoint_copy(self, segment: str) -> "Gate":
        return replace(self, segment=segment, adjoint=not self.adjoint)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.name,
            "params": self.kind.params(),
            "sites": [list(s) for s in self.sites],
            "layer": self.layer,
            "segment": self.segment,
            "block": self.block,
            "adjoint": self.adjoint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(
            kind=kind_from_dict(d["kind"], d["params"]),
            sites=tuple(tuple(s) for s in d["sites"]),
            layer=int(d["layer"]),
            segment=d.get("segment", "u"),
            block=int(d.get("block", 0)),
            adjoint=bool(d.get("adjoint", False)),
        )


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to regenerate one circuit ensemble.

    ``single_qubit_layers`` defaults to on for the iSWAP-like family and
    off for the Haar family, whose two-qubit gates already absorb any
    single-qubit rotation.
    """

    geometry: Geometry
    depth: int
    m_site: Coord
    b_site: Coord
    gate_family: str = "iswap"
    alpha: float = 1.0
    cphase: float = 0.35
    num_instances: int = 50
    master_seed: int = 0
    single_qubit_layers: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "m_site", tuple(int(x) for x in self.m_site))
        object.__setattr__(self, "b_site", tuple(int(x) for x in self.b_site))
        if self.gate_family not in ("iswap", "haar"):
            raise ValueError(f"unknown gate family {self.gate_family!r}")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if not self.geometry.contains(self.m_site):
            raise ValueError(f"m_site {self.m_site} outside geometry")
        if not self.geometry.contains(self.b_site):
            raise ValueError(f"b_site {self.b_site} outside geometry")
        if self.num_instances < 2:
            raise ValueError("an ensemble needs at least two instances")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")
        if self.single_qubit_layers is None:
            object.__setattr__(self, "single_qubit_layers", self.gate_family == "iswap")

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "depth": self.depth,
            "m_site": list(self.m_site),
            "b_site": list(self.b_site),
            "gate_family": self.gate_family,
            "alpha": self.alpha,
            "cphase": self.cphase,
            "num_instances": self.num_instances,
            "master_seed": self.master_seed,
            "single_qubit_layers": self.single_qubit_layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        return cls(
            geometry=Geometry.from_dict(d["geometry"]),
            depth=int(d["depth"]),
            m_site=tuple(d["m_site"]),
            b_site=tuple(d["b_site"]),
            gate_family=d["gate_family"],
            alpha=float(d["alpha"]),
            cphase=float(d["cphase"]),
            num_instances=int(d["num_instances"]),
            master_seed=int(d["master_seed"]),
            single_qubit_layers=bool(d["single_qubit_layers"]),
        )

    def ensemble_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def instance_rng(master_seed: int, instance_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, instance_index]))


def build_evolution(spec: EnsembleSpec, instance_index: int) -> list[Gate]:
    """Gates of the forward evolution ``U`` for one ensemble member.

    Random draws happen for every site and bond of the full geometry, in a
    fixed order, so instances share their layout across ``alpha`` values
    and pruning choices.
    """
    if not 0 <= instance_index < spec.num_instances:
        raise ValueError("instance_index out of range")
    rng = instance_rng(spec.master_seed, instance_index)
    geo = spec.geometry
    gates: list[Gate] = []
    for layer in range(spec.depth):
        if spec.single_qubit_layers:
            for site in geo.sites():
                theta = (0.25, 0.5, 0.75)[int(rng.integers(3))] * math.pi
                phi = float(rng.uniform(-1.0, 1.0)) * math.pi
                gates.append(Gate(SingleQubitRot(theta, phi), (site,), layer))
        for bond in geo.layer_bonds(layer):
            if spec.gate_family == "haar":
                kind: GateKind = HaarTwoQubit(haar_unitary(rng))
            else:
                kind = FSimLike(spec.alpha, spec.cphase)
            gates.append(Gate(kind, bond, layer))
    return gates


def _reverse_adjoint(u_gates: Sequence[Gate], block: int) -> list[Gate]:
    """``U^dagger`` in canonical order: layers descending, sites ascending."""
    by_layer: dict[int, list[Gate]] = {}
    for g in u_gates:
        by_layer.setdefault(g.layer, []).append(g)
    out = []
    for layer in sorted(by_layer, reverse=True):
        gs = by_layer[layer]
        two = sorted((g for g in gs if g.is_two_qubit), key=lambda g: g.sites)
        one = sorted((g for g in gs if not g.is_two_qubit), key=lambda g: g.sites)
        for g in two + one:
            out.append(replace(g, segment="udag", block=block, adjoint=not g.adjoint))
    return out


@dataclass(frozen=True, eq=False)
class OtocCircuit:
    """Ordered gate list for one correlator evaluation."""

    geometry: Geometry
    active_qubits: tuple[Coord, ...]
    gates: tuple[Gate, ...]
    m_site: Coord
    b_site: Coord
    order: str = "otoc1"
    depth: int = 0
    seed: int | None = None
    instance: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "active_qubits", tuple(sorted(tuple(q) for q in self.active_qubits)))
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "m_site", tuple(self.m_site))
        object.__setattr__(self, "b_site", tuple(self.b_site))
        if self.order not in ("otoc1", "otoc2"):
            raise ValueError(f"unknown order {self.order!r}")
        active = set(self.active_qubits)
        if self.m_site not in active:
            raise ValueError("measurement site must be active")
        for g in self.gates:
            if not set(g.sites) <= active:
                raise ValueError(f"gate on inactive sites {g.sites}")
        n_b = sum(1 for g in self.gates if g.segment == "b")
        if n_b != (1 if self.order == "otoc1" else 2):
            raise ValueError(f"{self.order} needs {1 if self.order == 'otoc1' else 2} butterfly gates")

    @property
    def num_qubits(self) -> int:
        return len(self.active_qubits)

    def two_qubit_gates(self) -> list[Gate]:
        return [g for g in self.gates if g.is_two_qubit]

    def to_dict(self) -> dict:
        return {
            "format_version": CIRCUIT_FORMAT_VERSION,
            "geometry": self.geometry.to_dict(),
            "active_qubits": [list(q) for q in self.active_qubits],
            "gates": [g.to_dict() for g in self.gates],
            "m_site": list(self.m_site),
            "b_site": list(self.b_site),
            "order": self.order,
            "depth": self.depth,
            "seed": self.seed,
            "instance": self.instance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "OtocCircuit":
        if int(d.get("format_version", CIRCUIT_FORMAT_VERSION)) != CIRCUIT_FORMAT_VERSION:
            raise ValueError("unsupported circuit format version")
        return cls(
            geometry=Geometry.from_dict(d["geometry"]),
            active_qubits=tuple(tuple(q) for q in d["active_qubits"]),
            gates=tuple(Gate.from_dict(g) for g in d["gates"]),
            m_site=tuple(d["m_site"]),
            b_site=tuple(d["b_site"]),
            order=d["order"],
            depth=int(d.get("depth", 0)),
            seed=d.get("seed"),
            instance=d.get("instance"),
        )

    @classmethod
    def from_json(cls, text: str) -> "OtocCircuit":
        return cls.from_dict(json.loads(text))


def build_otoc_circuit(
    u_gates: Sequence[Gate],
    spec: EnsembleSpec,
    order: str = "otoc1",
    instance: int | None = None,
) -> OtocCircuit:
    """Assemble the full correlator circuit around a forward evolution."""
    if not spec.geometry.contains(spec.b_site):
        raise ValueError(f"b_site {spec.b_site} outside geometry")
    if order not in ("otoc1", "otoc2"):
        raise ValueError(f"unknown order {order!r}")
    depth = spec.depth
    blocks = 1 if order == "otoc1" else 2
    gates: list[Gate] = []
    for block in range(blocks):
        if block == 1:
            gates.append(Gate(PauliZ(), (spec.m_site,), depth, segment="m", block=0))
        u_block = [replace(g, segment="u", block=block) for g in u_gates]
        gates.extend(u_block)
        gates.append(Gate(PauliX(), (spec.b_site,), depth, segment="b", block=block))
        gates.extend(_reverse_adjoint(u_block, block))
    return OtocCircuit(
        geometry=spec.geometry,
        active_qubits=tuple(spec.geometry.sites()),
        gates=tuple(gates),
        m_site=spec.m_site,
        b_site=spec.b_site,
        order=order,
        depth=depth,
        seed=spec.master_seed,
        instance=instance,
    )


def generate_instance(
    spec: EnsembleSpec, instance_index: int, order: str = "otoc1", prune: bool = True
) -> OtocCircuit:
    """Build (and by default prune) one ensemble member."""
    c = build_otoc_circuit(build_evolution(spec, instance_index), spec, order, instance_index)
    return prune_geometric_lightcones(c) if prune else c


# ---------------------------------------------------------------------------
# lightcones and pruning


def backward_cone(gates: Sequence[Gate], indices: Sequence[int], start: Iterable[Coord]) -> set[int]:
    """Indices of gates (visited latest-first) causally upstream of ``start``.

    ``indices`` lists the candidate gates in application order; ``start``
    are the sites of an operator placed after all of them.
    """
    reach = set(start)
    marked = set()
    for i in reversed(list(indices)):
        sites = gates[i].sites
        if reach.intersection(sites):
            marked.add(i)
            reach.update(sites)
    return marked


def forward_cone(gates: Sequence[Gate], indices: Sequence[int], start: Iterable[Coord]) -> set[int]:
    """Indices of gates causally downstream of ``start`` placed before them all."""
    reach = set(start)
    marked = set()
    for i in indices:
        sites = gates[i].sites
        if reach.intersection(sites):
            marked.add(i)
            reach.update(sites)
    return marked


def prune_geometric_lightcones(c: OtocCircuit, passes: Sequence[int] = (1, 2, 3)) -> OtocCircuit:
    """Remove gates that cannot affect the measured correlator, then idle qubits.

    Pass 1 cancels every ``U``/``U^dagger`` pair outside the lightcone of
    the butterfly. Pass 2 drops ``U^dagger`` gates outside the past cone of
    the final measurement. Passes 1 and 2 are exact identities. Pass 3 drops
    ``U`` gates outside the future cone of the measured site at time zero,
    which changes the initial-state convention of the correlator.
    """
    gates = list(c.gates)
    keep = [True] * len(gates)
    blocks = sorted({g.block for g in gates if g.segment == "b"})

    if 1 in passes:
        for block in blocks:
            u_idx = [i for i, g in enumerate(gates) if g.segment == "u" and g.block == block]
            b_gate = next(g for g in gates if g.segment == "b" and g.block == block)
            udag_idx = [i for i, g in enumerate(gates) if g.segment == "udag" and g.block == block]
            # U^dagger mirrors U, so B's forward cone through U^dagger is the
            # mirror image of its backward cone through U. Computing it
            # directly keeps the pass valid on already pruned circuits.
            marked = backward_cone(gates, u_idx, b_gate.sites) | forward_cone(gates, udag_idx, b_gate.sites)
            for i in u_idx + udag_idx:
                keep[i] = keep[i] and i in marked

    if 2 in passes:
        idx = [i for i in range(len(gates)) if keep[i]]
        marked = backward_cone(gates, idx, [c.m_site])
        for i in idx:
            if gates[i].segment == "udag" and i not in marked:
                keep[i] = False

    if 3 in passes:
        first = min(blocks)
        idx = [i for i, g in enumerate(gates) if keep[i] and g.segment == "u" and g.block == first]
        marked = forward_cone(gates, idx, [c.m_site])
        for i in idx:
            if i not in marked:
                keep[i] = False

    kept = [g for g, k in zip(gates, keep) if k]
    active = {c.m_site}
    for g in kept:
        active.update(g.sites)
    return replace(c, gates=tuple(kept), active_qubits=tuple(sorted(active)))


def max_gates_per_bond(c: OtocCircuit) -> tuple[dict[tuple[Coord, Coord], int], int]:
    """Two-qubit gate count on every bond, and the maximum over bonds."""
    counts: dict[tuple[Coord, Coord], int] = {}
    for g in c.gates:
        if g.is_two_qubit:
            bond = tuple(sorted(g.sites))
            counts[bond] = counts.get(bond, 0) + 1
    return dict(sorted(counts.items())), max(counts.values(), default=0)


@dataclass(frozen=True)
class LightconeGeometry:
    """Geometric lightcone speeds (sites per layer) and the local depth they imply.

    ``direction`` selects the applicable speed: ``"1d"``, ``"horizontal"``
    (along a lattice vector) or ``"diagonal"``.
    """

    depth: int
    v_mb: float
    direction: str = "1d"
    c_h: float = 0.5
    c_d: float = 1.0 / (2.0 * math.sqrt(2.0))
    c_1d: float = 1.0

    def __post_init__(self):
        if self.direction not in ("1d", "horizontal", "diagonal"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not 0 <= self.v_mb <= self.speed:
            raise ValueError("v_mb must lie in [0, c]")

    @property
    def speed(self) -> float:
        return {"1d": self.c_1d, "horizontal": self.c_h, "diagonal": self.c_d}[self.direction]

    @property
    def ell_g(self) -> float:
        """Maximal local depth ``(1 - v_mb / c) * T``."""
        return (1.0 - self.v_mb / self.speed) * self.depth


def line_ensemble(
    depth: int,
    v_mb_over_c: float = 0.6,
    gate_family: str = "iswap",
    num_instances: int = 50,
    master_seed: int = 0,
    **kwargs,
) -> EnsembleSpec:
    """1D ensemble with the butterfly ``round(v * T)`` sites right of the measurement.

    Pruned circuits span ``T + 1`` qubits and carry about ``(1 - v) * T``
    two-qubit gates on their busiest bond.

    The line is wide enough that the pruned region never touches its ends.
    """
    if not 0 <= v_mb_over_c <= 1:
        raise ValueError("v_mb_over_c must lie in [0, 1]")
    dist = int(round(v_mb_over_c * depth))
    # an odd column makes the first layer spread the measurement cone away
    # from the butterfly, which keeps the overlap region tight
    m_col = (depth // 2 + 2) | 1
    width = m_col + depth + 3
    return EnsembleSpec(
        geometry=Geometry.line(width),
        depth=depth,
        m_site=(0, m_col),
        b_site=(0, m_col + dist),
        gate_family=gate_family,
        num_instances=num_instances,
        master_seed=master_seed,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# butterfly placement


@dataclass
class BSelection:
    """Outcome of the butterfly-placement search."""

    b_site: Coord
    sigma: dict[Coord, float]
    sigma_max: float
    survivors: list[Coord]
    gates_per_bond: dict[Coord, int] = field(default_factory=dict)
    total_gates: dict[Coord, int] = field(default_factory=dict)
    num_qubits: dict[Coord, int] = field(default_factory=dict)


def select_b_location(
    geometry: Geometry,
    depth: int,
    m_site: Coord = (4, 4),
    sigma_threshold: float = 0.3,
    probe_instances: int = 50,
    *,
    gate_family: str = "iswap",
    alpha: float = 1.0,
    cphase: float = 0.35,
    master_seed: int = 0,
    candidates: Sequence[Coord] | None = None,
    max_probe_qubits: int = 16,
) -> BSelection:
    """Choose a butterfly site with a large correlator spread and a hard layout.

    For each candidate, the ensemble standard deviation of the
    correlator is computed by exact simulation of ``probe_instances``
    pruned circuits. Candidates with spread below ``sigma_threshold`` times
    the largest spread are discarded. The survivor with the most two-qubit
    gates on a single bond wins; total gate count and then site order break
    ties.

    Raises
    ------
    ValueError
        If a candidate's pruned circuit exceeds ``max_probe_qubits`` or no
        candidate carries any signal.
    """
    from .statevector import otoc_exact

    m_site = tuple(m_site)
    cands = [tuple(s) for s in (candidates if candidates is not None else geometry.sites())]
    sel = BSelection(b_site=m_site, sigma={}, sigma_max=0.0, survivors=[])
    layouts = {}
    for b in cands:
        spec = EnsembleSpec(geometry, depth, m_site, b, gate_family, alpha, cphase,
                            max(probe_instances, 2), master_seed)
        values = []
        for i in range(probe_instances):
            circ = generate_instance(spec, i, order="otoc1")
            if circ.num_qubits > max_probe_qubits:
                raise ValueError(
                    f"candidate {b} prunes to {circ.num_qubits} qubits, above the probe limit"
                )
            values.append(otoc_exact(circ))
        sel.sigma[b] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        layout = generate_instance(spec, 0, order="otoc1")
        layouts[b] = layout
        sel.gates_per_bond[b] = max_gates_per_bond(layout)[1]
        sel.total_gates[b] = len(layout.two_qubit_gates())
        sel.num_qubits[b] = layout.num_qubits
    sel.sigma_max = max(sel.sigma.values(), default=0.0)
    if sel.sigma_max <= 1e-12:
        raise ValueError(f"no candidate carries signal (maximal spread {sel.sigma_max:.3g})")
    sel.survivors = sorted(b for b in cands if sel.sigma[b] >= sigma_threshold * sel.sigma_max)
    sel.b_site = min(
        sel.survivors,
        key=lambda b: (-sel.gates_per_bond[b], -sel.total_gates[b], b),
    )
    return sel
