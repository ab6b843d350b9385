"""core state container, sampling, and linear-algebra helper checks."""

import math

import numpy as np
import pytest

from recoverlib import qcore
from recoverlib.qcore import MultipartiteState, Rng


def _rand_state(dims, rank, seed):
    return qcore.random_density(dims, rank, Rng(seed))


def test_construction_validates_shape_and_labels():
    """dims, labels, and matrix side must be mutually consistent."""
    with pytest.raises(ValueError):
        MultipartiteState((2, 2), ("A",), np.eye(4) / 4)
    with pytest.raises(ValueError):
        MultipartiteState((2, 2), ("A", "A"), np.eye(4) / 4)
    with pytest.raises(ValueError):
        MultipartiteState((2, 2), ("A", "B"), np.eye(3) / 3)
    with pytest.raises(ValueError):
        MultipartiteState((2, -1), ("A", "B"), np.eye(2) / 2)


def test_construction_rejects_non_hermitian():
    m = np.eye(2, dtype=complex) / 2
    m[0, 1] = 0.1
    with pytest.raises(ValueError, match="Hermitian"):
        MultipartiteState((2,), ("A",), m)


def test_construction_rejects_negative_eigenvalue():
    m = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(ValueError, match="positive semidefinite"):
        MultipartiteState((2,), ("A",), m)


def test_construction_trace_policy():
    """trace within 1e-6 of 1 is renormalized, anything further is rejected."""
    m = np.eye(2, dtype=complex) * (1 + 5e-7) / 2
    s = MultipartiteState((2,), ("A",), m)
    assert abs(float(np.trace(s.matrix).real) - 1.0) < 1e-12
    with pytest.raises(ValueError, match="trace"):
        MultipartiteState((2,), ("A",), np.eye(2, dtype=complex) * (1 + 1e-4) / 2)


def test_construction_is_idempotent():
    """reconstructing from a constructed matrix changes nothing bitwise."""
    for seed in range(10):
        s = _rand_state((2, 3), 4, seed)
        again = MultipartiteState(s.dims, s.labels, s.matrix)
        assert np.array_equal(again.matrix, s.matrix)


@pytest.mark.parametrize("dims,rank", [((2, 2), 1), ((2, 2), 4), ((2, 3), 3), ((2, 2, 2), 8)])
def test_random_density_invariants(dims, rank):
    """sampled states are unit-trace PSD with the requested rank."""
    for seed in range(20):
        s = qcore.random_density(dims, rank, Rng(seed))
        ev = np.linalg.eigvalsh(s.matrix)
        assert ev.min() > -1e-12
        assert abs(ev.sum() - 1.0) < 1e-9
        assert int(np.sum(ev > 1e-10)) <= rank


def test_partial_trace_gives_probability_spectrum():
    """reduced states have eigenvalue vectors that are probabilities."""
    for seed in range(30):
        s = _rand_state((2, 2, 3), 12, seed)
        for keep in (["A"], ["B"], ["C"], ["A", "C"]):
            r = qcore.partial_trace(s, keep)
            ev = np.linalg.eigvalsh(r.matrix)
            assert ev.min() > -1e-9
            assert abs(ev.sum() - 1.0) < 1e-9


def test_tensor_then_partial_trace_is_identity():
    for seed in range(20):
        a = qcore.random_density((2,), 2, Rng(seed), labels=("A",))
        b = qcore.random_density((3,), 3, Rng(seed + 100), labels=("B",))
        t = qcore.tensor(a, b)
        back = qcore.partial_trace(t, ["A"])
        assert np.max(np.abs(back.matrix - a.matrix)) < 1e-12


def test_permute_systems_round_trip():
    for seed in range(10):
        s = _rand_state((2, 3, 2), 12, seed)
        p = qcore.permute_systems(s, ["C", "A", "B"])
        assert p.labels == ("C", "A", "B")
        assert p.dims == (2, 2, 3)
        back = qcore.permute_systems(p, ["A", "B", "C"])
        assert np.max(np.abs(back.matrix - s.matrix)) < 1e-14


def test_permutation_matrix_swaps_kron_factors():
    rng = Rng(3)
    x = qcore.random_density((2,), 2, rng).matrix
    y = qcore.random_density((3,), 3, rng).matrix
    perm = qcore.permutation_matrix((2, 3), (1, 0))
    swapped = perm @ np.kron(x, y) @ perm.T
    assert np.max(np.abs(swapped - np.kron(y, x))) < 1e-14


def test_purify_round_trip_marginal():
    """tracing the reference out of a purification recovers the input."""
    for seed in range(10):
        s = _rand_state((2, 2), 3, seed)
        psi = qcore.purify(s, "R")
        back = qcore.partial_trace(psi.to_density(), ["A", "B"])
        assert np.max(np.abs(back.matrix - s.matrix)) < 1e-8


def test_purify_reference_dim_default_is_rank():
    s = _rand_state((2, 2), 2, 0)
    psi = qcore.purify(s, "R")
    assert psi.dims[-1] == 2 and psi.labels[-1] == "R"


def test_schmidt_weights_and_reconstruction():
    for seed in range(10):
        v = qcore.random_pure((2, 3), Rng(seed), labels=("A", "B"))
        w, left, right = qcore.schmidt(v, ["A"])
        assert abs(float(np.sum(w)) - 1.0) < 1e-10
        assert all(w[i] >= w[i + 1] - 1e-12 for i in range(len(w) - 1))
        rebuilt = sum(
            math.sqrt(float(w[i])) * np.kron(left[i], right[i]) for i in range(len(w))
        )
        phase = np.vdot(rebuilt, v.amplitudes)
        phase /= abs(phase)
        assert np.max(np.abs(rebuilt * phase - v.amplitudes)) < 1e-10


def test_max_entangled_marginals_are_maximally_mixed():
    for d in (2, 3, 4):
        s = qcore.max_entangled(d).to_density()
        for keep in (["A"], ["B"]):
            r = qcore.partial_trace(s, keep)
            assert np.max(np.abs(r.matrix - np.eye(d) / d)) < 1e-12


def test_basis_vector_and_maximally_mixed():
    v = qcore.basis_vector((2, 3), (1, 2))
    assert v.amplitudes[1 * 3 + 2] == 1.0
    m = qcore.maximally_mixed((2, 2))
    assert np.max(np.abs(m.matrix - np.eye(4) / 4)) < 1e-15


def test_schatten_norm_ordering():
    """the alpha-norm is nonincreasing in alpha for each fixed matrix."""
    rng = Rng(17)
    for _ in range(100):
        x = rng.gen.normal(size=(4, 4)) + 1j * rng.gen.normal(size=(4, 4))
        n1 = qcore.schatten_norm(x, 1)
        n2 = qcore.schatten_norm(x, 2)
        n8 = qcore.schatten_norm(x, 8)
        n_big = qcore.schatten_norm(x, 64)
        assert n1 >= n2 - 1e-10 >= n8 - 2e-10 >= n_big - 3e-10
        assert n_big >= float(np.linalg.svd(x, compute_uv=False)[0]) - 1e-8


def test_schatten_norm_rejects_alpha_below_one():
    with pytest.raises(ValueError):
        qcore.schatten_norm(np.eye(2), 0.5)


def test_rng_reproducibility_and_streams():
    """identical (seed, stream) draws match; distinct streams differ."""
    a = Rng(7, 3).gen.normal(size=8)
    b = Rng(7, 3).gen.normal(size=8)
    c = Rng(7, 4).gen.normal(size=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    s1 = qcore.random_density((2, 2), 4, Rng(11, 0))
    s2 = qcore.random_density((2, 2), 4, Rng(11, 0))
    assert np.array_equal(s1.matrix, s2.matrix)


def test_rng_spawn_matches_stream_constructor():
    base = Rng(5)
    direct = Rng(5, 9).gen.normal(size=4)
    spawned = base.spawn(9).gen.normal(size=4)
    assert np.array_equal(direct, spawned)


def test_digest_is_deterministic_and_input_sensitive():
    s = _rand_state((2, 2), 4, 1)
    t = _rand_state((2, 2), 4, 2)
    assert qcore.digest_of(s.matrix) == qcore.digest_of(s.matrix)
    assert qcore.digest_of(s.matrix) != qcore.digest_of(t.matrix)
