"""fidelity-of-recovery optimization checks across the three backends."""

import math

import numpy as np
import pytest

from recoverlib import infoquant as iq
from recoverlib import qcore, recopt
from recoverlib.qcore import MultipartiteState, Rng


def _rand_state(dims, rank, seed):
    return qcore.random_density(dims, rank, Rng(seed))


def _markov_state(seed):
    """flagged mixture of products, which is exactly recoverable from C."""
    rng = Rng(seed)
    probs = rng.gen.dirichlet(np.ones(2))
    m = np.zeros((8, 8), dtype=complex)
    for x in range(2):
        ra = qcore.random_density((2,), 2, rng).matrix
        rb = qcore.random_density((2,), 2, rng).matrix
        flag = np.zeros((2, 2))
        flag[x, x] = 1.0
        m += probs[x] * np.kron(np.kron(ra, rb), flag)
    return MultipartiteState((2, 2, 2), ("A", "B", "C"), m)


def _bell_times_sigma(seed):
    bell = qcore.max_entangled(2).to_density().matrix
    sigma = qcore.random_density((2,), 2, Rng(seed)).matrix
    return MultipartiteState((2, 2, 2), ("A", "B", "C"), np.kron(bell, sigma))


def test_markov_states_are_perfectly_recoverable():
    for seed in range(3):
        r = recopt.fidelity_of_recovery(_markov_state(seed), "A", "B", "C")
        assert r.value > 1.0 - 1e-6
        assert r.bound == "exact-within-tol"


def test_maximal_entanglement_saturates_the_dimension_bound():
    """an uninformative conditioner pins F at one over the A dimension squared."""
    s = _bell_times_sigma(11)
    r = recopt.fidelity_of_recovery(s, "A", "B", "C")
    assert abs(r.value - 0.25) < 1e-5
    i = recopt.surprisal_of_recovery(s, "A", "B", "C")
    assert abs(i.value - 2.0) < 1e-4
    assert i.kind == "surprisal"


def test_classical_copy_hits_one_over_alphabet_size():
    copy = np.zeros((4, 4), dtype=complex)
    copy[0, 0] = copy[3, 3] = 0.5
    sigma = qcore.random_density((2,), 2, Rng(5)).matrix
    s = MultipartiteState((2, 2, 2), ("X", "B", "C"), np.kron(copy, sigma))
    r = recopt.fidelity_of_recovery(s, "X", "B", "C")
    assert abs(r.value - 0.5) < 1e-5


def test_fidelity_stays_in_dimension_window():
    for seed in range(10):
        r = recopt.fidelity_of_recovery(_rand_state((2, 2, 2), 8, seed), "A", "B", "C")
        assert 0.25 - 1e-7 <= r.value <= 1.0 + 1e-7


def test_backends_are_ordered():
    """petz <= seesaw <= convex, and the convex gap is certified."""
    for seed in range(6):
        s = _rand_state((2, 2, 2), 8, seed + 100)
        f_petz = recopt.fidelity_of_recovery(s, "A", "B", "C", backend="petz")
        f_seesaw = recopt.fidelity_of_recovery(s, "A", "B", "C", backend="seesaw")
        f_convex = recopt.fidelity_of_recovery(s, "A", "B", "C", backend="convex")
        assert f_petz.value <= f_seesaw.value + 1e-9
        assert f_seesaw.value <= f_convex.value + 1e-7
        assert f_convex.residuals["duality_gap"] <= 1e-6
        assert f_petz.bound == "lower-bound"
        assert f_seesaw.bound == "lower-bound"
        assert f_convex.bound == "exact-within-tol"


def test_surprisal_flips_bound_orientation():
    s = _rand_state((2, 2, 2), 8, 200)
    i_petz = recopt.surprisal_of_recovery(s, "A", "B", "C", backend="petz")
    assert i_petz.bound == "upper-bound"
    i_convex = recopt.surprisal_of_recovery(s, "A", "B", "C")
    assert i_convex.bound == "exact-within-tol"
    f = recopt.fidelity_of_recovery(s, "A", "B", "C")
    assert abs(i_convex.value + math.log2(f.value)) < 1e-9


def test_certificate_achieves_the_reported_value():
    """replaying the recovery channel reproduces the fidelity exactly."""
    from recoverlib import channels as chn

    s = _rand_state((2, 2, 2), 4, 300)
    r = recopt.fidelity_of_recovery(s, "A", "B", "C")
    rebuilt = chn.apply(r.certificate, qcore.partial_trace(s, ["B", "C"]), "C", ["A", "C"])
    target = qcore.permute_systems(s, rebuilt.labels)
    f = float(iq.fidelity(target.matrix, rebuilt.matrix))
    assert f >= r.value - 1e-6


def test_pure_states_satisfy_the_recoverability_lower_bound():
    """conditional mutual information dominates the surprisal on pure states."""
    for seed in range(10):
        psi = qcore.random_pure((2, 2, 2), Rng(seed + 400), labels=("A", "B", "C"))
        s = psi.to_density()
        i_val = float(iq.cqmi(s, "A", "B", "C"))
        r = recopt.fidelity_of_recovery(s, "A", "B", "C")
        assert i_val >= -math.log2(r.value) - 1e-5


def test_group_arguments_must_partition():
    s = _rand_state((2, 2, 2), 8, 500)
    with pytest.raises(ValueError):
        recopt.fidelity_of_recovery(s, "A", "B", [])
    with pytest.raises(ValueError):
        recopt.fidelity_of_recovery(s, [], ["A", "B"], "C")
    with pytest.raises(ValueError):
        recopt.fidelity_of_recovery(s, "A", "B", "D")
    with pytest.raises(ValueError):
        recopt.fidelity_of_recovery(s, ["A", "B"], ["B"], ["C"])


def test_fidelity_ab_closed_forms():
    """products are reachable exactly; maximal entanglement caps at 1/4."""
    a = qcore.random_density((2,), 2, Rng(1), labels=("A",))
    b = qcore.random_density((2,), 2, Rng(2), labels=("B",))
    prod = qcore.tensor(a, b)
    r = recopt.fidelity_AB(prod, "A", "B")
    assert r.value > 1.0 - 1e-6
    bell = qcore.max_entangled(2).to_density()
    r2 = recopt.fidelity_AB(bell, "A", "B")
    assert abs(r2.value - 0.25) < 1e-5


def test_weak_chain_rule_on_random_states():
    """recovering more takes at least as much surprisal."""
    for seed in range(5):
        s = _rand_state((2, 2, 2), 8, seed + 600)
        joint = recopt.fidelity_AB(s, "A", ["B", "C"]).value
        cond = recopt.fidelity_of_recovery(s, "A", "B", "C").value
        assert -math.log2(joint) >= -math.log2(cond) - 2e-6


def test_multipartite_recovery_on_products_is_near_perfect():
    a = qcore.random_density((2,), 2, Rng(7), labels=("A",))
    b = qcore.random_density((2,), 2, Rng(8), labels=("B",))
    c = qcore.random_density((2,), 2, Rng(9), labels=("C",))
    s = qcore.tensor(qcore.tensor(a, b), c)
    r = recopt.multipartite_for(s, ["A", "B"], "C", restarts=1, sweeps=6)
    assert r.value > 1.0 - 1e-5
    assert r.bound == "lower-bound"


def test_multipartite_recovery_argument_validation():
    s = _rand_state((2, 2, 2), 8, 700)
    with pytest.raises(ValueError):
        recopt.multipartite_for(s, ["A"], ["B", "C"])
    with pytest.raises(ValueError):
        recopt.multipartite_for(s, ["A", "B", "C"], [])


def test_solver_error_carries_residuals():
    err = recopt.SolverConvergenceError("no certificate", {"duality_gap": 0.5})
    assert err.residuals["duality_gap"] == 0.5
