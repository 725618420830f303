"""Command-line harness: ``gen``, ``run`` and ``report``.

``gen`` writes one JSON circuit file per instance plus ``manifest.json``.
``run`` simulates those circuits and writes a results CSV. ``report`` turns
results into SNR tables, required-D tables and fits. Output is a
deterministic function of the inputs; wall-clock timings go to an optional
sidecar file so they never perturb the CSV.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .circuits import (
    EnsembleSpec,
    Geometry,
    OtocCircuit,
    generate_instance,
    line_ensemble,
    max_gates_per_bond,
    select_b_location,
)
from .experiments import METHODS, RunRecord, exact_value, run_method

CSV_HEADER = (
    "ensemble_hash", "instance", "method", "D", "chi", "alpha", "exact", "approx",
    "fidelity", "discarded_weight", "runtime_s", "bp_iters",
)
WORKERS_ENV = "OTOC_WORKERS"


def code_hash() -> str:
    """SHA-256 over the package's own source files."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for path in sorted(root.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _coord(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'row,col', got {text!r}")
    return int(parts[0]), int(parts[1])


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _chi_list(text: str) -> list[int | None]:
    return [None if part == "inf" else int(part) for part in text.split(",") if part]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    out = Path(args.out)
    if args.one_d:
        spec = line_ensemble(
            args.depth, args.vmb, gate_family=args.gate_family, num_instances=args.instances,
            master_seed=args.seed, alpha=args.alpha,
        )
        selection = None
    else:
        geom = Geometry.grid(args.grid, args.grid)
        m_site = args.m_site
        selection = None
        if args.select_b:
            selection = select_b_location(
                geom, args.depth, m_site, args.sigma_threshold, args.probe_instances,
                gate_family=args.gate_family, alpha=args.alpha, master_seed=args.seed,
                candidates=_probe_candidates(geom, m_site, args.depth, args.gate_family, args.max_probe_qubits),
                max_probe_qubits=args.max_probe_qubits,
            )
            b_site = selection.b_site
        elif args.b_site is not None:
            b_site = args.b_site
        else:
            raise SystemExit("2D generation needs --b-site or --select-b")
        spec = EnsembleSpec(geom, args.depth, m_site, b_site, args.gate_family, args.alpha,
                            num_instances=args.instances, master_seed=args.seed)
    circuits_dir = out / "circuits"
    circuits_dir.mkdir(parents=True, exist_ok=True)
    instances = []
    for i in range(spec.num_instances):
        c = generate_instance(spec, i, order=args.order)
        name = f"instance_{i:04d}.json"
        (circuits_dir / name).write_text(c.to_json())
        instances.append({
            "instance": i,
            "file": f"circuits/{name}",
            "num_qubits": c.num_qubits,
            "two_qubit_gates": len(c.two_qubit_gates()),
            "max_gates_per_bond": max_gates_per_bond(c)[1],
        })
    manifest = {
        "ensemble_hash": spec.ensemble_hash(),
        "code_hash": code_hash(),
        "order": args.order,
        "spec": spec.to_dict(),
        "v_mb_over_c": args.vmb if args.one_d else None,
        "instances": instances,
    }
    if selection is not None:
        manifest["b_selection"] = {
            "b_site": list(selection.b_site),
            "sigma_max": selection.sigma_max,
            "sigma": {f"{r},{c}": v for (r, c), v in sorted(selection.sigma.items())},
            "survivors": [list(s) for s in selection.survivors],
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    n_values = sorted({d["num_qubits"] for d in instances})
    g_values = sorted({d["max_gates_per_bond"] for d in instances})
    print(f"ensemble {spec.ensemble_hash()}: {spec.num_instances} circuits, "
          f"N={n_values}, max gates/bond={g_values}, b_site={list(spec.b_site)}")
    if selection is not None:
        print(_sigma_map(selection))
    return 0


def _probe_candidates(geom: Geometry, m_site, depth: int, gate_family: str, max_qubits: int):
    """Sites within the geometric cone whose pruned layout fits the probe budget."""
    r, c = m_site
    out = []
    for s in geom.sites():
        if abs(s[0] - r) + abs(s[1] - c) > depth:
            continue
        spec = EnsembleSpec(geom, depth, m_site, s, gate_family, num_instances=2)
        if generate_instance(spec, 0).num_qubits <= max_qubits:
            out.append(s)
    return out


def _sigma_map(sel) -> str:
    rows = sorted({s[0] for s in sel.sigma})
    cols = sorted({s[1] for s in sel.sigma})
    lines = ["sigma map (* survivor, B selected):"]
    for r in rows:
        cells = []
        for c in cols:
            s = (r, c)
            if s not in sel.sigma:
                cells.append("      ")
                continue
            mark = "B" if s == sel.b_site else ("*" if s in sel.survivors else " ")
            cells.append(f"{sel.sigma[s]:5.3f}{mark}")
        lines.append(" ".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# run


def _load_manifest(path: Path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return json.loads(path.read_text()), path.parent


def _run_instance(job) -> list[RunRecord]:
    text, method, Ds, chis, with_fidelity = job
    c = OtocCircuit.from_json(text)
    exact = exact_value(c)
    records = []
    for D in Ds:
        for chi in chis:
            records.append(run_method(c, method, D, chi, exact=exact, with_fidelity=with_fidelity))
    return records


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def cmd_run(args) -> int:
    manifest, root = _load_manifest(args.circuits)
    spec = EnsembleSpec.from_dict(manifest["spec"])
    method = args.method
    Ds: list[int | None] = [None] if method == "exact" else _int_list(args.D) if args.D else [None]
    chis: list[int | None] = _chi_list(args.chi) if method.startswith("peps") else [None]
    entries = manifest["instances"]
    if args.instances:
        wanted = set(_int_list(args.instances))
        entries = [e for e in entries if e["instance"] in wanted]
    jobs = [((root / e["file"]).read_text(), method, Ds, chis, not args.no_fidelity) for e in entries]
    workers = _workers(args.workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_instance, jobs))
    else:
        batches = [_run_instance(j) for j in jobs]
    records = sorted(
        (r for batch in batches for r in batch),
        key=lambda r: (r.instance, r.D if r.D is not None else math.inf, r.chi if r.chi is not None else math.inf),
    )
    text = results_csv(manifest["ensemble_hash"], spec.alpha, records, record_runtime=args.record_runtime)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    if args.timings:
        with open(args.timings, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "D", "chi", "runtime_s"])
            for r in records:
                w.writerow([r.instance, _fmt(r.D), "inf" if r.chi is None else r.chi, f"{r.runtime_s:.6f}"])
    print(f"wrote {len(records)} rows to {out}")
    return 0


def results_csv(ensemble_hash: str, alpha: float, records: Sequence[RunRecord], record_runtime: bool = False) -> str:
    """Results table; ``runtime_s`` stays empty unless ``record_runtime`` is set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([
            ensemble_hash, r.instance, r.method, _fmt(r.D), "inf" if r.chi is None else r.chi,
            _fmt(float(alpha)), _fmt(r.exact), _fmt(r.approx), _fmt(r.fidelity),
            _fmt(r.discarded_weight), f"{r.runtime_s:.6f}" if record_runtime else "", _fmt(r.bp_iters),
        ])
    return buf.getvalue()


def read_results(paths: Sequence[str | Path]) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path} does not carry the results header")
            rows.extend(reader)
    return rows


# ---------------------------------------------------------------------------
# report


def _num(text: str) -> float | None:
    return float(text) if text not in ("", None) else None


def _D_key(text: str) -> float:
    return math.inf if text == "" else float(text)


def _chi_key(text: str) -> float:
    return math.inf if text == "inf" else float(text)


def _group_snr(rows: list[dict]) -> dict:
    """SNR per ``(ensemble, method, alpha, D, chi)``."""
    groups = defaultdict(list)
    for r in rows:
        if r["exact"] == "":
            continue
        groups[(r["ensemble_hash"], r["method"], r["alpha"], r["D"], r["chi"])].append(r)
    out = {}
    for key, members in groups.items():
        members.sort(key=lambda r: int(r["instance"]))
        exact = [float(r["exact"]) for r in members]
        approx = [float(r["approx"]) for r in members]
        try:
            out[key] = metrics.snr(exact, approx)
        except metrics.ZeroVarianceError:
            out[key] = math.nan
    return out


def cmd_report(args) -> int:
    rows = read_results(args.results)
    if not rows:
        raise SystemExit("no result rows selected")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    targets = [float(t) for t in args.targets.split(",")] if args.targets else []
    manifests = {}
    for path in args.manifest or []:
        man, _ = _load_manifest(path)
        manifests[man["ensemble_hash"]] = man
    snrs = _group_snr(rows)
    panels = defaultdict(dict)
    for (ens, method, alpha, D, chi), value in snrs.items():
        panels[(ens, method, alpha)][(D, chi)] = value
    summary = {"heatmaps": [], "required_D": [], "fits": []}
    for (ens, method, alpha), cells in sorted(panels.items()):
        Ds = sorted({k[0] for k in cells}, key=_D_key)
        chis = sorted({k[1] for k in cells}, key=_chi_key)
        name = f"snr_{ens}_{method}_alpha{alpha}.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["D"] + [f"chi={c}" for c in chis])
        for D in Ds:
            w.writerow([D or "inf"] + [_fmt(cells.get((D, c))) for c in chis])
        (out / name).write_text(buf.getvalue())
        summary["heatmaps"].append(name)
        finite = [D for D in Ds if D != ""]
        for chi in chis:
            xs, ys = [], []
            for D in finite:
                value = cells.get((D, chi), math.nan)
                if not math.isnan(value):
                    xs.append(float(D))
                    ys.append(value)
            for t in targets:
                entry = {"ensemble_hash": ens, "method": method, "alpha": alpha, "chi": chi, "target": t}
                try:
                    entry["required_D"] = metrics.required_D_for_target(xs, ys, t)
                except ValueError as exc:
                    entry["required_D"] = None
                    entry["note"] = str(exc)
                man = manifests.get(ens)
                if man is not None:
                    entry["max_gates_per_bond"] = max(d["max_gates_per_bond"] for d in man["instances"])
                    entry["num_qubits"] = max(d["num_qubits"] for d in man["instances"])
                    if man.get("v_mb_over_c") is not None:
                        pred = metrics.ScalingPrediction("1D", man["v_mb_over_c"])
                        entry["predicted_D"] = metrics.predicted_bond_dim(pred, entry["num_qubits"])
                summary["required_D"].append(entry)
    summary["fits"] = _infidelity_fits(rows)
    _write_required_table(out / "required_D.csv", summary["required_D"])
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=_json_default) + "\n")
    print(f"wrote {len(summary['heatmaps'])} heatmaps and {len(summary['required_D'])} required-D entries to {out}")
    return 0


def _json_default(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    raise TypeError(type(x))


def _infidelity_fits(rows: list[dict]) -> list[dict]:
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["fidelity"] == "" or r["D"] == "":
            continue
        groups[(r["ensemble_hash"], r["method"], r["alpha"], r["chi"])][float(r["D"])].append(1.0 - float(r["fidelity"]))
    fits = []
    for key, by_D in sorted(groups.items()):
        xs = sorted(by_D)
        ys = [float(np.mean(by_D[x])) for x in xs]
        entry = dict(zip(("ensemble_hash", "method", "alpha", "chi"), key))
        entry["D"] = xs
        entry["mean_infidelity"] = ys
        try:
            fit = metrics.fit_exponential(xs, ys)
            entry.update(rate=fit.slope, prefactor=fit.prefactor, r_squared=fit.r_squared)
        except ValueError as exc:
            entry["note"] = str(exc)
        fits.append(entry)
    return fits


def _write_required_table(path: Path, entries: list[dict]) -> None:
    cols = ["ensemble_hash", "method", "alpha", "chi", "target", "required_D",
            "num_qubits", "max_gates_per_bond", "predicted_D"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for e in entries:
        w.writerow([_fmt(e.get(c)) for c in cols])
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otoc-tn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a circuit ensemble")
    dim = g.add_mutually_exclusive_group(required=True)
    dim.add_argument("--1d", dest="one_d", action="store_true")
    dim.add_argument("--2d", dest="two_d", action="store_true")
    g.add_argument("--depth", type=int, required=True)
    g.add_argument("--vmb", type=float, default=0.6, help="1D butterfly velocity over light speed")
    g.add_argument("--instances", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gate-family", choices=("iswap", "haar"), default="iswap")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--order", choices=("otoc1", "otoc2"), default="otoc1")
    g.add_argument("--grid", type=int, default=14, help="2D grid side length")
    g.add_argument("--m-site", type=_coord, default=(6, 6))
    g.add_argument("--b-site", type=_coord, default=None)
    g.add_argument("--select-b", action="store_true", help="choose B by exact spread probing")
    g.add_argument("--sigma-threshold", type=float, default=0.3)
    g.add_argument("--probe-instances", type=int, default=50)
    g.add_argument("--max-probe-qubits", type=int, default=16)
    g.add_argument("--out", default="ensemble")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="simulate an ensemble")
    r.add_argument("--circuits", required=True, help="ensemble directory or manifest path")
    r.add_argument("--method", choices=METHODS, required=True)
    r.add_argument("--D", default="", help="bond dimensions, e.g. 2,4,8 or 2-16")
    r.add_argument("--chi", default="inf", help="boundary dimensions; 'inf' for exact extraction")
    r.add_argument("--instances", default="", help="subset of instance indices")
    r.add_argument("--workers", type=int, default=None, help=f"process count (default ${WORKERS_ENV} or 1)")
    r.add_argument("--no-fidelity", action="store_true")
    r.add_argument("--record-runtime", action="store_true", help="fill runtime_s (breaks byte identity)")
    r.add_argument("--timings", default=None, help="sidecar CSV for wall-clock timings")
    r.add_argument("--out", default="results.csv")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize results")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--targets", default="5,10")
    p.add_argument("--manifest", nargs="*", default=None)
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
