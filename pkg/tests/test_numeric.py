import json

import numpy as np
import pytest

from qmflab.errors import BudgetExceeded, LemmaViolation, ValidationError
from qmflab.netgraph import load_network, min_cut
from qmflab.numeric import (
    DenseTensor,
    OperatorMatrix,
    SpectrumSample,
    chgue_baseline,
    check_product_sv_count,
    contract_network,
    kron_compose,
    mc_moment,
    numerical_rank,
    rank_lower_bound,
    sample_tensor,
    small_sv_fraction,
    spectrum,
    stream,
)
from qmflab.wick import enumerate_moment

IDENTITY_ONLY = '{"name":"wire","vertices":[],"edges":[{"kind":"identity"}]}'


# ---------------------------------------------------------------- sampling

def test_gaussian_moments():
    rng = stream(42)
    t = sample_tensor(100, 3, rng)  # 1e6 entries
    z = t.values.ravel()
    assert abs((np.abs(z) ** 2).mean() - 1.0) < 0.005
    assert abs(z.mean().real) < 0.005 and abs(z.mean().imag) < 0.005


def test_sampling_is_deterministic():
    a = sample_tensor(7, 3, stream(5, 1, 2))
    b = sample_tensor(7, 3, stream(5, 1, 2))
    assert np.array_equal(a.values, b.values)
    c = sample_tensor(7, 3, stream(5, 1, 3))
    assert not np.array_equal(a.values, c.values)


def test_sample_tensor_shape_guard():
    with pytest.raises(ValidationError):
        sample_tensor(0, 2, stream(1))


# ------------------------------------------------------------- contraction

def test_identity_network_contracts_to_identity():
    g = load_network(IDENTITY_ONLY)
    op = contract_network(g, {}, 5)
    assert np.array_equal(op.matrix, np.eye(5))
    assert op.mc == 1 and op.num_edges == 1


def test_chain_contracts_to_the_sampled_matrix(chain_d2):
    # row index = output slot, column = input slot, so L is the transpose of
    # the tensor viewed with axes (input, output)
    t = sample_tensor(6, 2, stream(9))
    op = contract_network(chain_d2, {"v": t}, 6)
    assert np.array_equal(op.matrix, t.values.T)


def test_figconn_matches_manual_contraction(figconn):
    t1 = sample_tensor(3, 3, stream(10, 1))
    t2 = sample_tensor(3, 3, stream(10, 2))
    op = contract_network(figconn, {"v1": t1, "v2": t2}, 3)
    manual = np.einsum(
        t1.values, [0, 1, 3], t2.values, [2, 4, 5], [3, 4, 5, 0, 1, 2]
    ).reshape(27, 27)
    assert np.allclose(op.matrix, manual)


def test_figconn_spectrum_is_outer_product(figconn):
    t1 = sample_tensor(4, 3, stream(11, 1))
    t2 = sample_tensor(4, 3, stream(11, 2))
    op = contract_network(figconn, {"v1": t1, "v2": t2}, 4)
    sv = spectrum(op, "raw").values
    l1 = np.einsum(t1.values, [0, 1, 2], [2, 0, 1]).reshape(4, 16)
    l2 = np.einsum(t2.values, [0, 1, 2], [1, 2, 0]).reshape(16, 4)
    s1 = np.linalg.svd(l1, compute_uv=False)
    s2 = np.linalg.svd(l2, compute_uv=False)
    outer = np.sort(np.outer(s1, s2).ravel())[::-1]
    assert np.allclose(sv[: len(outer)], outer, rtol=1e-10, atol=1e-12 * outer[0])
    assert np.all(sv[len(outer):] < 1e-10 * outer[0])


def test_identical_assignment_needs_uniform_degree():
    g = load_network(json.dumps({
        "name": "mixed",
        "vertices": [{"id": "a", "degree": 1}, {"id": "b", "degree": 3}],
        "edges": [
            {"kind": "input", "end": {"vertex": "a", "slot": 1}},
            {"kind": "input", "end": {"vertex": "b", "slot": 1}},
            {"kind": "closed", "ends": [{"vertex": "b", "slot": 2}, {"vertex": "b", "slot": 3}]},
        ],
    }))
    t = sample_tensor(2, 1, stream(1))
    with pytest.raises(ValidationError, match="degree-uniform"):
        contract_network(g, t, 2)


def test_contraction_budget(figconn):
    t = sample_tensor(3, 3, stream(0))
    with pytest.raises(BudgetExceeded):
        contract_network(figconn, t, 3, budget=10)


def test_dimension_mismatch_rejected(chain_d2):
    t = sample_tensor(3, 2, stream(0))
    with pytest.raises(ValidationError, match="shape"):
        contract_network(chain_d2, {"v": t}, 4)


# ----------------------------------------------------------------- spectra

def test_identity_network_spectrum_all_ones():
    g = load_network(IDENTITY_ONLY)
    s = spectrum(contract_network(g, {}, 7), "raw")
    assert np.allclose(s.values, 1.0)


def test_chain_knorm_first_moment(chain_d2):
    t = sample_tensor(400, 2, stream(21))
    op = contract_network(chain_d2, {"v": t}, 400)
    s = spectrum(op, "knorm")
    assert s.divisor == pytest.approx(np.sqrt(400.0))
    assert abs((s.normalized**2).mean() - 1.0) < 0.05


def test_spectrum_padding():
    g = load_network(IDENTITY_ONLY)
    s = spectrum(contract_network(g, {}, 4), "knorm")
    assert len(s.padded_normalized()) == s.mu_len == 4


# ------------------------------------------------------------------- ranks

def test_zero_matrix_rank():
    sample = SpectrumSample(np.zeros(5), "raw", 1.0, 5)
    rep = numerical_rank(sample)
    assert rep.rank == 0 and rep.verdict == "confident"


def test_rank_gap_verdicts():
    clear = SpectrumSample(np.array([1.0, 0.5, 1e-16]), "raw", 1.0, 3)
    rep = numerical_rank(clear)
    assert rep.rank == 2 and rep.verdict == "confident" and rep.ratio >= 1e6
    murky = SpectrumSample(np.array([1.0, 1e-9, 1e-11]), "raw", 1.0, 3)
    rep = numerical_rank(murky)
    assert rep.verdict == "ambiguous"


def test_numerical_rank_uses_relative_floor():
    sample = SpectrumSample(np.array([1e4, 1.0, 1e-8]), "raw", 1.0, 3)
    rep = numerical_rank(sample, rel_floor=1e-10)
    assert rep.rank == 2  # threshold 1e-6 drops only the last value


# ------------------------------------------------------------- Monte Carlo

def test_mc_moment_matches_exact_polynomial(figconn, chain_d2):
    exact = enumerate_moment(figconn, 1, "identical").evaluate(3)
    mean, err = mc_moment(figconn, 1, 3, 4000, "identical", seed=11)
    assert abs(mean - exact) < 3 * err
    exact = enumerate_moment(figconn, 1, "independent").evaluate(3)
    mean, err = mc_moment(figconn, 1, 3, 4000, "independent", seed=11)
    assert abs(mean - exact) < 3 * err
    mean, err = mc_moment(chain_d2, 2, 5, 4000, "identical", seed=3)
    assert abs(mean - 250.0) < 3 * err


def test_mc_moment_deterministic(chain_d2):
    a = mc_moment(chain_d2, 2, 4, 500, "identical", seed=8)
    b = mc_moment(chain_d2, 2, 4, 500, "identical", seed=8)
    assert a == b
    c = mc_moment(chain_d2, 2, 4, 500, "identical", seed=9)
    assert a != c


def test_mc_moment_batching_invariance(chain_d2):
    a = mc_moment(chain_d2, 1, 3, 700, "identical", seed=4, batch_size=64)
    b = mc_moment(chain_d2, 1, 3, 700, "identical", seed=4, batch_size=700)
    assert a == pytest.approx(b)


def test_mc_moment_k3_path(chain_d2):
    mean, err = mc_moment(chain_d2, 3, 3, 2000, "identical", seed=5)
    exact = enumerate_moment(chain_d2, 3, "identical").evaluate(3)
    assert abs(mean - exact) < 4 * err


# ------------------------------------------------------------- rank bounds

def test_rank_lower_bound_identity():
    op = np.eye(9)
    assert rank_lower_bound(op, 2) == pytest.approx(9.0)


def test_rank_lower_bound_rank_one():
    m = np.outer([1.0, 2.0, 0.5], [3.0, 1.0, 1.0])
    for k in (2, 3, 4):
        assert rank_lower_bound(m, k) == pytest.approx(1.0)


def test_rank_lower_bound_below_numerical_rank(chain_d2):
    for s in range(100):
        t = sample_tensor(4, 2, stream(77, s))
        op = contract_network(chain_d2, {"v": t}, 4)
        bound = rank_lower_bound(op, 2)
        rep = numerical_rank(spectrum(op, "raw"))
        assert bound <= rep.rank + 1e-9


def test_rank_lower_bound_guards():
    with pytest.raises(ValidationError):
        rank_lower_bound(np.eye(2), 1)
    with pytest.raises(ValidationError, match="zero operator"):
        rank_lower_bound(np.zeros((3, 3)), 2)


# ---------------------------------------------------------------- baseline

def test_chgue_single_value():
    s = chgue_baseline(1, stream(2))
    assert len(s.values) == 1 and s.values[0] >= 0


def test_chgue_moments_small():
    s = chgue_baseline(800, stream(3))
    q = s.normalized**2
    assert abs(q.mean() - 1.0) < 0.1
    assert abs((q**2).mean() - 2.0) < 0.25


# --------------------------------------------------------- small sv counts

def test_small_sv_fraction_vanishes_above_cutoff():
    s = SpectrumSample(np.array([3.0, 2.5]), "knorm", 1.0, 2)
    assert small_sv_fraction(s, 1.0) == 0.0


def test_small_sv_fraction_identity_at_eps_one():
    g = load_network(IDENTITY_ONLY)
    s = spectrum(contract_network(g, {}, 5), "knorm")
    assert small_sv_fraction(s, 1.0) == pytest.approx(1.0)


def test_small_sv_fraction_counts_single_tiny_value():
    mu_len = 16
    vals = np.concatenate([np.full(15, 1.0), [1e-12]])
    s = SpectrumSample(vals, "knorm", 1.0, mu_len)
    assert small_sv_fraction(s, 1e-6) == pytest.approx(1.0 / 16)


def test_small_sv_fraction_guards():
    s = SpectrumSample(np.array([1.0]), "raw", 1.0, 1)
    with pytest.raises(ValidationError):
        small_sv_fraction(s, 1.0)
    s = SpectrumSample(np.array([1.0]), "knorm", 1.0, 1)
    with pytest.raises(ValidationError):
        small_sv_fraction(s, 0.0)


# ------------------------------------------------------------ product rank

def test_product_sv_identity_saturates():
    eye = np.eye(6)
    rep = check_product_sv_count(eye, eye, 1.0, 1.0)
    assert rep.bound == 6 and rep.count == 6 and rep.ok


def test_product_sv_vacuous_when_bound_nonpositive():
    a = np.zeros((4, 4))
    b = np.eye(4)
    rep = check_product_sv_count(a, b, 0.5, 0.5)
    assert rep.r_a == 0 and rep.bound <= 0 and rep.ok


def test_product_sv_dimension_mismatch():
    with pytest.raises(ValidationError):
        check_product_sv_count(np.eye(3), np.eye(4), 0.1, 0.1)


def test_product_sv_random_sample():
    for s in range(50):
        rng = stream(55, s)
        a = (rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20)))
        b = (rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20)))
        ea = 0.1 * np.linalg.svd(a, compute_uv=False)[0]
        eb = 0.1 * np.linalg.svd(b, compute_uv=False)[0]
        check_product_sv_count(a, b, ea, eb)  # raises on violation


# --------------------------------------------------------------- composite

def test_kron_compose_rank_multiplies(chain_d2):
    t1 = sample_tensor(2, 2, stream(60, 1))
    t2 = sample_tensor(2, 2, stream(60, 2))
    comp = kron_compose(t1, t2)
    r1 = numerical_rank(spectrum(contract_network(chain_d2, {"v": t1}, 2), "raw")).rank
    r2 = numerical_rank(spectrum(contract_network(chain_d2, {"v": t2}, 2), "raw")).rank
    rc = numerical_rank(spectrum(contract_network(chain_d2, {"v": comp}, 4), "raw")).rank
    assert rc == r1 * r2 == 4


def test_kron_compose_trivial_factor(chain_d2):
    t1 = sample_tensor(3, 2, stream(61))
    ones = DenseTensor(np.ones((1, 1)))
    comp = kron_compose(t1, ones)
    a = contract_network(chain_d2, {"v": t1}, 3).matrix
    b = contract_network(chain_d2, {"v": comp}, 3).matrix
    assert np.allclose(a, b)


def test_kron_compose_degree_mismatch():
    with pytest.raises(ValidationError):
        kron_compose(sample_tensor(2, 2, stream(1)), sample_tensor(2, 3, stream(2)))


def test_kron_composite_preserves_deficit(fignum_recovered):
    # rank (QMC-1)^2 at N=4 with the composed tensor, versus full rank 16 for
    # a generic draw: the composite inherits the factor deficits
    t1 = sample_tensor(2, 3, stream(62, 1))
    t2 = sample_tensor(2, 3, stream(62, 2))
    comp = kron_compose(t1, t2)
    op = contract_network(fignum_recovered, comp, 4)
    rank = numerical_rank(spectrum(op, "raw")).rank
    assert rank == 9 >= (2**2 - 1) ** 2
