"""Command-line front end: validation, min cuts, moments, spectra, rank scans.

Structured results go to stdout as JSON, per-value series as CSV; progress for
long sweeps goes to stderr.  Every run is determined by its flags and seed,
and the flags are echoed into the output.  Exit codes: 0 ok, 2 validation
failure, 3 budget exceeded, 4 violated combinatorial identity.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from .errors import BudgetExceeded, LemmaViolation, ValidationError
from . import netgraph, numeric, wick
from .netgraph import classify_case, is_connected_network, load_network, min_cut


def _echo(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(meta: dict, header: str, rows: list[str], args) -> None:
    lines = []
    if not getattr(args, "no_timestamp", False):
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines.append(f"# timestamp: {stamp}")
    for key, val in meta.items():
        lines.append(f"# {key}: {val}")
    lines.append(header)
    lines.extend(rows)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path!r}: {exc}") from exc
    return load_network(text), text


def cmd_validate(args) -> int:
    g, _ = _load(args.network)
    connected = is_connected_network(g)
    doc = {
        "config": _echo(args),
        "name": g.name,
        "valid": True,
        "connected": connected,
        "num_vertices": g.num_vertices,
        "num_edges": g.num_edges,
        "num_inputs": g.num_inputs,
        "num_outputs": g.num_outputs,
    }
    if not connected:
        doc["warning"] = (
            "network is not connected: some vertex reaches no open edge"
        )
    _emit_json(doc, args.out)
    return 0 if connected else 2


def cmd_mincut(args) -> int:
    g, _ = _load(args.network)
    result = min_cut(g)
    doc = {
        "config": _echo(args),
        "network": g.name,
        "mc": result.mc,
        "cut": {
            "sbar": sorted(result.cut.sbar),
            "tbar": sorted(result.cut.tbar),
            "cut_set": list(result.cut.cut_set),
        },
        "paths": [
            {"edges": list(p.edges), "vertices": list(p.vertices)}
            for p in result.paths.paths
        ],
        "case": classify_case(g),
    }
    _emit_json(doc, args.out)
    return 0


def cmd_moments_exact(args) -> int:
    g, _ = _load(args.network)
    if args.product:
        powers = [int(tok) for tok in args.product.split(",") if tok]
        parts = [wick.build_closed_network(g, kk) for kk in powers]
        closed = wick.build_product_closed_network(parts)
        coeffs = wick.enumerate_polynomial(closed, args.ensemble, jobs=args.jobs)
        poly = wick.MomentPolynomial(coeffs, args.ensemble, 0, g.name)
        doc = poly.to_jsonable()
        doc["k"] = None
        doc["product"] = powers
    else:
        poly = wick.enumerate_moment(g, args.k, args.ensemble, jobs=args.jobs)
        doc = poly.to_jsonable()
    doc["config"] = _echo(args)
    _emit_json(doc, args.out)
    return 0


def cmd_moments_mc(args) -> int:
    g, _ = _load(args.network)
    mean, stderr = numeric.mc_moment(
        g, args.k, args.N, args.samples, args.ensemble, args.seed
    )
    doc = {
        "config": _echo(args),
        "network": g.name,
        "mean": mean,
        "stderr": stderr,
    }
    _emit_json(doc, args.out)
    return 0


def cmd_spectrum(args) -> int:
    if (args.chgue is None) == (args.network is None):
        raise ValidationError("give exactly one of --network or --chgue")
    if args.chgue is not None:
        sample = numeric.chgue_baseline(args.chgue, numeric.stream(args.seed, 0))
        meta_net = "chgue"
    else:
        g, _ = _load(args.network)
        tensors = _draw_tensors(g, args.N, args.ensemble, args.seed, 0)
        op = numeric.contract_network(
            g, tensors, args.N, provenance={"seed": args.seed, "ensemble": args.ensemble}
        )
        sample = numeric.spectrum(op, args.normalization)
        meta_net = g.name
    meta = {
        "network": meta_net,
        "N": sample.meta["N"],
        "seed": args.seed,
        "ensemble": getattr(args, "ensemble", "n/a") if args.chgue is None else "chgue",
        "normalization": sample.normalization,
        "divisor": repr(sample.divisor),
    }
    rows = [
        f"{i},{float(raw)!r},{float(norm)!r}"
        for i, (raw, norm) in enumerate(zip(sample.values, sample.normalized))
    ]
    _emit_csv(meta, "index,sigma,sigma_normalized", rows, args)
    return 0


def _draw_tensors(g, bond_dim, ensemble, seed, sample_idx):
    verts = g.vertices
    if ensemble == "identical":
        d = g.uniform_degree() if verts else 0
        return numeric.sample_tensor(
            bond_dim, d, numeric.stream(seed, bond_dim, sample_idx, 0)
        )
    return {
        v: numeric.sample_tensor(
            bond_dim, g.degrees[v], numeric.stream(seed, bond_dim, sample_idx, i + 1)
        )
        for i, v in enumerate(verts)
    }


def _parse_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        values = list(range(int(lo), int(hi) + 1))
    else:
        values = [int(spec)]
    if not values:
        raise ValidationError(f"empty N range {spec!r}")
    return values


def _scan_cell(task):
    text, bond_dim, sample_idx, seed, abs_floor, rel_floor = task
    g = load_network(text)
    tensors = _draw_tensors(g, bond_dim, "identical", seed, sample_idx)
    op = numeric.contract_network(g, tensors, bond_dim)
    sample = numeric.spectrum(op, "knorm")
    report = numeric.numerical_rank(sample, abs_floor, rel_floor)
    norm = sample.normalized
    min_sigma = float(norm[-1]) if len(norm) else 0.0
    next_sigma = float(norm[-2]) if len(norm) > 1 else min_sigma
    qmc = op.rank_cap
    return (
        bond_dim,
        sample_idx,
        qmc,
        report.rank,
        qmc - report.rank,
        min_sigma,
        next_sigma,
        report.verdict,
    )


def cmd_rank_scan(args) -> int:
    _, text = _load(args.network)
    bond_dims = _parse_range(args.N_range)
    tasks = [
        (text, n, s, args.seed, args.abs_floor, args.rel_floor)
        for n in bond_dims
        for s in range(args.samples)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            cells = list(pool.map(_scan_cell, tasks))
    else:
        cells = []
        for i, task in enumerate(tasks):
            cells.append(_scan_cell(task))
            print(f"rank-scan {i + 1}/{len(tasks)}", file=sys.stderr)
    cells.sort(key=lambda c: (c[0], c[1]))
    meta = {
        "network": args.network,
        "seed": args.seed,
        "samples_per_N": args.samples,
        "abs_floor": repr(args.abs_floor),
        "rel_floor": repr(args.rel_floor),
        "sigma_scale": "K-normalized (divided by sqrt(N^(|E|-MC)))",
        "verdicts": ",".join(c[7] for c in cells),
    }
    rows = [
        f"{n},{n % 4},{qmc},{rank},{deficit},{mins!r},{nexts!r}"
        for n, _s, qmc, rank, deficit, mins, nexts, _v in cells
    ]
    _emit_csv(meta, "N,N_mod_4,qmc,rank,deficit,min_sigma,next_sigma", rows, args)
    return 0


def cmd_kron_check(args) -> int:
    g, _ = _load(args.network)
    d = g.uniform_degree() if g.degrees else 0
    t1 = numeric.sample_tensor(args.N1, d, numeric.stream(args.seed, 1))
    t2 = numeric.sample_tensor(args.N2, d, numeric.stream(args.seed, 2))
    composite = numeric.kron_compose(t1, t2)
    ranks = {}
    for label, tensor, n in (
        ("factor1", t1, args.N1),
        ("factor2", t2, args.N2),
        ("composite", composite, args.N1 * args.N2),
    ):
        op = numeric.contract_network(g, tensor, n)
        report = numeric.numerical_rank(numeric.spectrum(op, "raw"))
        ranks[label] = report.rank
    product = ranks["factor1"] * ranks["factor2"]
    doc = {
        "config": _echo(args),
        "network": g.name,
        "ranks": ranks,
        "rank_product": product,
        "composite_matches_product": ranks["composite"] == product,
        "composite_at_least_product": ranks["composite"] >= product,
    }
    _emit_json(doc, args.out)
    if not doc["composite_at_least_product"]:
        raise LemmaViolation("composite rank fell below the factor rank product")
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="qmflab", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, network=True, out=True):
        if network:
            p.add_argument("--network", required=True, help="network JSON file")
        if out:
            p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("validate", help="parse, validate and connectivity-check")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mincut", help="min cut, witness, flow paths, case label")
    common(p)
    p.set_defaults(func=cmd_mincut)

    p = sub.add_parser("moments-exact", help="exact moment polynomial")
    common(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--ensemble", choices=("identical", "independent"),
                   default="identical")
    p.add_argument("--product", default=None,
                   help="comma list of powers for a product of traces")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_moments_exact)

    p = sub.add_parser("moments-mc", help="Monte-Carlo moment estimate")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--ensemble", choices=("identical", "independent"),
                   default="identical")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_moments_mc)

    p = sub.add_parser("spectrum", help="singular value spectrum CSV")
    p.add_argument("--network", default=None)
    p.add_argument("--chgue", type=int, default=None,
                   help="emit a square-Gaussian baseline of this size instead")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--ensemble", choices=("identical", "independent"),
                   default="identical")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=("knorm", "raw"), default="knorm")
    p.add_argument("--out", default=None)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("rank-scan", help="numerical rank sweep over N")
    common(p)
    p.add_argument("--N-range", dest="N_range", required=True,
                   help="single N or range a..b")
    p.add_argument("--samples", type=int, default=3, help="draws per N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--abs-floor", dest="abs_floor", type=float, default=0.0)
    p.add_argument("--rel-floor", dest="rel_floor", type=float, default=1e-10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_rank_scan)

    p = sub.add_parser("kron-check", help="index-pairing composite rank check")
    common(p)
    p.add_argument("--N1", type=int, required=True)
    p.add_argument("--N2", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kron_check)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except LemmaViolation as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
