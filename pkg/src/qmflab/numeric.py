"""Dense linear algebra over tensor networks: sampling, contraction, spectra.

Conventions fixed here so results are reproducible bit for bit:

* complex Gaussian entries have unit mean square, i.e. real and imaginary
  parts are independent normals of variance 1/2;
* random streams are counter-based (Philox) and derived from integer key
  paths, one stream per (seed, experiment point, vertex);
* the contracted operator's rows are indexed by output-side open ends and its
  columns by input-side open ends, both sorted by edge id, with identity
  edges contributing a Kronecker delta between their two ends.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import BudgetExceeded, LemmaViolation, ValidationError
from . import netgraph
from .netgraph import TensorNetworkGraph, min_cut

DEFAULT_BUDGET_BYTES = 4 * 1024**3
_BUDGET_ENV = "QMFLAB_BUDGET_BYTES"


def budget_bytes(override: int | None = None) -> int:
    if override is not None:
        return override
    return int(os.environ.get(_BUDGET_ENV, DEFAULT_BUDGET_BYTES))


def stream(*key: int) -> np.random.Generator:
    """Counter-based generator for an integer key path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(tuple(key))))


@dataclass(frozen=True)
class DenseTensor:
    """Complex tensor with one axis per slot, all extents equal."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def degree(self) -> int:
        return self.values.ndim

    @property
    def bond_dim(self) -> int:
        return self.values.shape[0] if self.values.ndim else 1


def sample_tensor(
    bond_dim: int, degree: int, rng: np.random.Generator, provenance: dict | None = None
) -> DenseTensor:
    """Tensor of i.i.d. complex Gaussians with E[|z|^2] = 1."""
    if bond_dim < 1 or degree < 0:
        raise ValidationError(f"bad tensor shape N={bond_dim}, d={degree}")
    shape = (bond_dim,) * degree
    z = _complex_normal(rng, shape)
    return DenseTensor(z, dict(provenance or {}))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / math.sqrt(2.0)


def _complex_normal_batch(rng: np.random.Generator, batch: int, shape) -> np.ndarray:
    # each sample's draws are contiguous in the stream, so results do not
    # depend on how a sweep is chunked into batches
    block = rng.standard_normal((batch, 2) + tuple(shape))
    return (block[:, 0] + 1j * block[:, 1]) / math.sqrt(2.0)


@dataclass(frozen=True)
class OperatorMatrix:
    """Contracted linear operator with its network provenance."""

    matrix: np.ndarray
    network: str
    bond_dim: int
    num_edges: int
    mc: int
    provenance: dict = field(default_factory=dict)

    @property
    def knorm_divisor(self) -> float:
        return math.sqrt(float(self.bond_dim) ** (self.num_edges - self.mc))

    @property
    def rank_cap(self) -> int:
        return self.bond_dim**self.mc


def _einsum_plan(g: TensorNetworkGraph, batched: bool):
    """Operand subscripts for contracting the network, integer-index form.

    Every edge owns index ids; identity edges own a second id for their
    input-side end.  Returns (vertex order, vertex subscripts, identity edge
    ids, identity subscripts, row ids, col ids, batch index or None).
    """
    end_to_edge = g.endpoint_map()
    n_edges = g.num_edges
    extra = {}
    for j, eid in enumerate(g.edge_ids(netgraph.IDENTITY)):
        extra[eid] = n_edges + j
    batch_idx = n_edges + len(extra) if batched else None

    verts = g.vertices
    vsubs = []
    for v in verts:
        sub = [end_to_edge[(v, s)] for s in range(1, g.degrees[v] + 1)]
        if batched:
            sub = [batch_idx] + sub
        vsubs.append(sub)
    id_eids = sorted(extra)
    id_subs = [[eid, extra[eid]] for eid in id_eids]

    rows = [eid for eid in g.output_ids]
    cols = [eid if g.edges[eid].kind == netgraph.INPUT else extra[eid]
            for eid in g.input_ids]
    return verts, vsubs, id_eids, id_subs, rows, cols, batch_idx


def _peak_bytes(subscripts, out_sub, bond_dim, batch_idx, batch_len) -> int:
    def size(sub) -> int:
        n = 1
        for ix in set(sub):
            n *= batch_len if ix == batch_idx else bond_dim
        return n

    total = sum(size(s) for s in subscripts) + size(out_sub)
    return 16 * total


def contract_network(
    g: TensorNetworkGraph,
    assignment: DenseTensor | Mapping[str, DenseTensor],
    bond_dim: int,
    *,
    provenance: dict | None = None,
    budget: int | None = None,
) -> OperatorMatrix:
    """Contract the network into its operator (rows: outputs, cols: inputs)."""
    batched = _contract(g, assignment, bond_dim, budget=budget)
    mc = min_cut(g).mc
    return OperatorMatrix(
        batched[0], g.name, bond_dim, g.num_edges, mc, dict(provenance or {})
    )


def _vertex_arrays(g, assignment, bond_dim, batch_len):
    verts = g.vertices
    if isinstance(assignment, DenseTensor):
        if verts and not g.is_degree_uniform:
            raise ValidationError(
                f"{g.name!r}: one shared tensor needs degree-uniform vertices"
            )
        per_vertex = {v: assignment for v in verts}
    else:
        per_vertex = dict(assignment)
        missing = set(verts) - set(per_vertex)
        if missing:
            raise ValidationError(f"no tensor assigned to {sorted(missing)}")
    arrays = []
    for v in verts:
        t = per_vertex[v]
        want_core = (bond_dim,) * g.degrees[v]
        shape = t.values.shape[1:] if batch_len else t.values.shape
        if shape != want_core:
            raise ValidationError(
                f"tensor at {v!r} has shape {t.values.shape}, expected "
                f"{'batch + ' if batch_len else ''}{want_core}"
            )
        arrays.append(t.values)
    return arrays


def _contract(g, assignment, bond_dim, *, budget=None, batch_len: int = 0):
    """Shared einsum core; returns an array of shape ([batch,] D_T, D_S)."""
    batched = batch_len > 0
    verts, vsubs, id_eids, id_subs, rows, cols, batch_idx = _einsum_plan(g, batched)
    arrays = _vertex_arrays(g, assignment, bond_dim, batch_len)
    operands, subscripts = [], []
    for arr, sub in zip(arrays, vsubs):
        operands.append(arr)
        subscripts.append(sub)
    eye = np.eye(bond_dim) if id_eids else None
    for sub in id_subs:
        operands.append(eye)
        subscripts.append(sub)
    out_sub = ([batch_idx] if batched else []) + rows + cols

    cap = budget_bytes(budget)
    peak = _peak_bytes(subscripts, out_sub, bond_dim, batch_idx, batch_len)
    if peak > cap:
        raise BudgetExceeded(
            f"contracting {g.name!r} at N={bond_dim} needs ~{peak} bytes, over "
            f"the budget of {cap} (set {_BUDGET_ENV} to raise it)"
        )

    d_t = bond_dim ** len(rows)
    d_s = bond_dim ** len(cols)
    lead = (batch_len,) if batched else ()
    if not operands:
        out = np.ones(lead + (1, 1), dtype=complex)
        return out if batched else (out,)
    args = []
    for op, sub in zip(operands, subscripts):
        args.extend((op, sub))
    args.append(out_sub)
    mode = "optimal" if len(operands) <= 8 else "greedy"
    path = np.einsum_path(*args, optimize=mode)[0]
    raw = np.einsum(*args, optimize=path)
    out = raw.reshape(lead + (d_t, d_s))
    return out if batched else (out,)


@dataclass(frozen=True)
class SpectrumSample:
    """Singular values (descending), raw plus the recorded normalization."""

    values: np.ndarray
    normalization: str            # raw | knorm | chgue
    divisor: float
    mu_len: int                   # padding length of the spectral measure
    meta: dict = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.divisor

    def padded_normalized(self) -> np.ndarray:
        vals = self.normalized
        if len(vals) >= self.mu_len:
            return vals
        return np.concatenate([vals, np.zeros(self.mu_len - len(vals))])


def spectrum(op: OperatorMatrix, normalization: str = "knorm") -> SpectrumSample:
    """Full singular value spectrum of a contracted operator."""
    if normalization not in ("knorm", "raw"):
        raise ValidationError(f"unknown normalization {normalization!r}")
    try:
        vals = np.linalg.svd(op.matrix, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise LemmaViolation(
            f"SVD failed for {op.network!r} N={op.bond_dim} "
            f"(provenance {op.provenance})"
        ) from exc
    divisor = op.knorm_divisor if normalization == "knorm" else 1.0
    meta = {
        "network": op.network,
        "N": op.bond_dim,
        "num_edges": op.num_edges,
        "mc": op.mc,
        **op.provenance,
    }
    return SpectrumSample(vals, normalization, divisor, op.rank_cap, meta)


def chgue_baseline(size: int, rng: np.random.Generator) -> SpectrumSample:
    """Singular values of a square unit-variance complex Gaussian matrix;
    dividing by sqrt(size) sends the spectrum to the quarter circle on [0,2].
    """
    if size < 1:
        raise ValidationError(f"baseline size must be >= 1, got {size}")
    m = _complex_normal(rng, (size, size))
    vals = np.linalg.svd(m, compute_uv=False)
    return SpectrumSample(
        vals, "chgue", math.sqrt(size), size, {"network": "chgue", "N": size}
    )


@dataclass(frozen=True)
class RankReport:
    rank: int
    threshold: float
    smallest_kept: float
    largest_dropped: float
    ratio: float
    verdict: str                  # confident | ambiguous


def numerical_rank(
    sample: SpectrumSample, abs_floor: float = 0.0, rel_floor: float = 1e-10
) -> RankReport:
    """Count singular values above max(abs_floor, rel_floor * sigma_max).

    The verdict is ``confident`` when kept and dropped values are separated
    by a ratio of at least 1e6 (vacuously when nothing is dropped).
    """
    vals = sample.values
    smax = float(vals[0]) if len(vals) else 0.0
    if smax == 0.0:
        return RankReport(0, 0.0, 0.0, 0.0, math.inf, "confident")
    threshold = max(abs_floor, rel_floor * smax)
    kept = vals >= threshold if threshold > 0 else vals > 0
    rank = int(np.count_nonzero(kept))
    smallest_kept = float(vals[rank - 1]) if rank else 0.0
    largest_dropped = float(vals[rank]) if rank < len(vals) else 0.0
    if largest_dropped == 0.0:
        ratio = math.inf
    else:
        ratio = smallest_kept / largest_dropped
    verdict = "confident" if ratio >= 1e6 else "ambiguous"
    return RankReport(rank, threshold, smallest_kept, largest_dropped, ratio, verdict)


_ENS_CODE = {"identical": 0, "independent": 1}


def mc_moment(
    g: TensorNetworkGraph,
    k: int,
    bond_dim: int,
    samples: int,
    ensemble: str,
    seed: int,
    *,
    batch_size: int = 1024,
    budget: int | None = None,
) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of tr((L^dag L)^k).

    One Philox stream per (seed, N, k, ensemble, vertex); the identical
    ensemble reuses a single stream and tensor for all vertices of a draw.
    """
    if ensemble not in _ENS_CODE:
        raise ValidationError(f"unknown ensemble {ensemble!r}")
    if k < 1 or samples < 1:
        raise ValidationError("need k >= 1 and samples >= 1")
    verts = g.vertices
    code = _ENS_CODE[ensemble]
    if ensemble == "identical":
        d = g.uniform_degree() if verts else 0
        streams = {v: stream(seed, bond_dim, k, code, 0) for v in verts[:1]}
    else:
        streams = {
            v: stream(seed, bond_dim, k, code, i + 1) for i, v in enumerate(verts)
        }
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        chunk = min(batch_size, samples - done)
        per_vertex = {}
        if ensemble == "identical" and verts:
            shared = _complex_normal_batch(
                streams[verts[0]], chunk, (bond_dim,) * d
            )
            for v in verts:
                per_vertex[v] = DenseTensor(shared)
        else:
            for v in verts:
                per_vertex[v] = DenseTensor(
                    _complex_normal_batch(
                        streams[v], chunk, (bond_dim,) * g.degrees[v]
                    )
                )
        l_batch = _contract(g, per_vertex, bond_dim, budget=budget, batch_len=chunk)
        vals = _trace_moment(l_batch, k)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        done += chunk
    mean = total / samples
    if samples == 1:
        return mean, math.inf
    var = (total_sq - samples * mean**2) / (samples - 1)
    return mean, math.sqrt(max(var, 0.0) / samples)


def _trace_moment(l_batch: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return np.einsum("bij,bij->b", l_batch.conj(), l_batch).real
    if k == 2:
        gram = np.einsum("bji,bjk->bik", l_batch.conj(), l_batch)
        return np.einsum("bij,bij->b", gram.conj(), gram).real
    svals = np.linalg.svd(l_batch, compute_uv=False)
    return (svals ** (2 * k)).sum(axis=1)


def rank_lower_bound(op: OperatorMatrix | np.ndarray, k: int) -> float:
    """(tr(L^dag L)^k / tr((L^dag L)^k))^(1/(k-1)); the rank is at least this."""
    if k <= 1:
        raise ValidationError("the moment rank bound needs k > 1")
    m = op.matrix if isinstance(op, OperatorMatrix) else op
    svals = np.linalg.svd(m, compute_uv=False)
    t1 = float((svals**2).sum())
    tk = float((svals ** (2 * k)).sum())
    if tk == 0.0:
        raise ValidationError("zero operator: the rank bound is undefined")
    return (t1**k / tk) ** (1.0 / (k - 1))


def small_sv_fraction(sample: SpectrumSample, epsilon: float) -> float:
    """Smoothed fraction of near-zero normalized singular values.

    Pads the spectrum with zeros to the spectral-measure length, then averages
    f(sigma / epsilon) where f is 1 on [0, 1], 0 on [2, inf) and the cubic
    smoothstep complement in between.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if sample.normalization == "raw":
        raise ValidationError("small_sv_fraction expects a normalized spectrum")
    x = sample.padded_normalized() / epsilon
    t = np.clip(x - 1.0, 0.0, 1.0)
    f = 1.0 - 3.0 * t**2 + 2.0 * t**3
    f[x >= 2.0] = 0.0
    return float(f.sum() / sample.mu_len)


@dataclass(frozen=True)
class ProductSVReport:
    r_a: int
    r_b: int
    inner_dim: int
    bound: int
    count: int
    ok: bool


def check_product_sv_count(
    a: OperatorMatrix | np.ndarray,
    b: OperatorMatrix | np.ndarray,
    eps_a: float,
    eps_b: float,
) -> ProductSVReport:
    """Verify the product bound: with r_a values of A >= eps_a and r_b values
    of B >= eps_b, A @ B keeps at least r_a + r_b - inner singular values of
    size eps_a * eps_b (up to a 1e-9 relative float slack).
    """
    ma = a.matrix if isinstance(a, OperatorMatrix) else a
    mb = b.matrix if isinstance(b, OperatorMatrix) else b
    if ma.shape[1] != mb.shape[0]:
        raise ValidationError(
            f"inner dimensions differ: {ma.shape} vs {mb.shape}"
        )
    inner = ma.shape[1]
    r_a = int(np.count_nonzero(np.linalg.svd(ma, compute_uv=False) >= eps_a))
    r_b = int(np.count_nonzero(np.linalg.svd(mb, compute_uv=False) >= eps_b))
    bound = r_a + r_b - inner
    prod_vals = np.linalg.svd(ma @ mb, compute_uv=False)
    count = int(np.count_nonzero(prod_vals >= eps_a * eps_b * (1.0 - 1e-9)))
    ok = count >= bound
    report = ProductSVReport(r_a, r_b, inner, bound, count, ok)
    if not ok:
        raise LemmaViolation(f"product singular value bound failed: {report}")
    return report


def kron_compose(t1: DenseTensor, t2: DenseTensor) -> DenseTensor:
    """Index-pairing composite: entries multiply and each slot's index becomes
    the pair (i, j) flattened to range over bond_dim1 * bond_dim2."""
    if t1.degree != t2.degree:
        raise ValidationError(
            f"degree mismatch: {t1.degree} vs {t2.degree}"
        )
    d = t1.degree
    n1, n2 = t1.bond_dim, t2.bond_dim
    out = np.multiply.outer(t1.values, t2.values)
    perm = [axis for pair in zip(range(d), range(d, 2 * d)) for axis in pair]
    out = out.transpose(perm).reshape((n1 * n2,) * d)
    prov = {"composite_of": (t1.provenance, t2.provenance)}
    return DenseTensor(out, prov)
