"""entropic and fidelity-type quantity checks against closed forms."""

import math

import numpy as np
import pytest

from recoverlib import infoquant as iq
from recoverlib import qcore
from recoverlib.qcore import MultipartiteState, Rng


def _rand_state(dims, rank, seed):
    return qcore.random_density(dims, rank, Rng(seed))


def _rand_pair(dim, seed):
    rng = Rng(seed)
    p = qcore.random_density((dim,), dim, rng).matrix
    q = qcore.random_density((dim,), dim, rng).matrix
    return p, q


def _rand_kraus(d_in, d_out, n_kraus, seed):
    """Kraus operators sliced from a Haar random isometry."""
    rng = Rng(seed)
    g = rng.gen.normal(size=(d_out * n_kraus, d_in)) + 1j * rng.gen.normal(
        size=(d_out * n_kraus, d_in)
    )
    v, _ = np.linalg.qr(g)
    return [v[i * d_out : (i + 1) * d_out, :] for i in range(n_kraus)]


def test_fidelity_closed_forms():
    """unit on identical states, overlap squared on pure pairs."""
    p, _ = _rand_pair(3, 0)
    assert abs(float(iq.fidelity(p, p)) - 1.0) < 1e-12
    u = qcore.random_pure((4,), Rng(1)).amplitudes
    v = qcore.random_pure((4,), Rng(2)).amplitudes
    f = float(iq.fidelity(np.outer(u, u.conj()), np.outer(v, v.conj())))
    assert abs(f - abs(np.vdot(u, v)) ** 2) < 1e-10


def test_fidelity_is_multiplicative_on_products():
    p1, q1 = _rand_pair(2, 3)
    p2, q2 = _rand_pair(3, 4)
    lhs = float(iq.fidelity(np.kron(p1, p2), np.kron(q1, q2)))
    rhs = float(iq.fidelity(p1, q1)) * float(iq.fidelity(p2, q2))
    assert abs(lhs - rhs) < 1e-10


def test_fidelity_monotone_under_channels():
    """applying any channel can only increase fidelity."""
    for seed in range(100):
        p, q = _rand_pair(3, seed)
        kraus = _rand_kraus(3, 2, 3, seed + 1000)
        np_out = sum(k @ p @ k.conj().T for k in kraus)
        nq_out = sum(k @ q @ k.conj().T for k in kraus)
        assert float(iq.fidelity(np_out, nq_out)) >= float(iq.fidelity(p, q)) - 1e-8


def test_fidelity_brackets_trace_distance():
    """1 - sqrt(F) <= T/2 <= sqrt(1 - F) on random pairs."""
    for seed in range(100):
        p, q = _rand_pair(4, seed)
        f = float(iq.fidelity(p, q))
        half_t = float(iq.trace_distance(p, q)) / 2.0
        assert 1.0 - math.sqrt(f) <= half_t + 1e-8
        assert half_t <= math.sqrt(1.0 - f) + 1e-8


def test_trace_distance_extremes():
    e0 = np.diag([1.0, 0.0]).astype(complex)
    e1 = np.diag([0.0, 1.0]).astype(complex)
    assert abs(float(iq.trace_distance(e0, e1)) - 2.0) < 1e-12
    assert float(iq.trace_distance(e0, e0)) == 0.0


def test_purified_distance_matches_fidelity():
    p, q = _rand_pair(3, 9)
    f = float(iq.fidelity(p, q))
    assert abs(float(iq.purified_distance(p, q)) - math.sqrt(1.0 - f)) < 1e-10


def test_root_fidelity_jointly_concave():
    """sqrt F of averages dominates the average of sqrt F."""
    for seed in range(50):
        rng = Rng(seed)
        w = float(rng.gen.uniform(0.1, 0.9))
        p1, q1 = _rand_pair(3, seed + 200)
        p2, q2 = _rand_pair(3, seed + 400)
        lhs = float(iq.root_fidelity(w * p1 + (1 - w) * p2, w * q1 + (1 - w) * q2))
        rhs = w * float(iq.root_fidelity(p1, q1)) + (1 - w) * float(iq.root_fidelity(p2, q2))
        assert lhs >= rhs - 1e-8


def test_root_fidelity_additive_on_flagged_ensembles():
    """orthogonal flags turn joint concavity into an equality."""
    w = 0.3
    p1, q1 = _rand_pair(2, 5)
    p2, q2 = _rand_pair(2, 6)
    f0 = np.diag([1.0, 0.0])
    f1 = np.diag([0.0, 1.0])
    p = w * np.kron(p1, f0) + (1 - w) * np.kron(p2, f1)
    q = w * np.kron(q1, f0) + (1 - w) * np.kron(q2, f1)
    lhs = float(iq.root_fidelity(p, q))
    rhs = w * float(iq.root_fidelity(p1, q1)) + (1 - w) * float(iq.root_fidelity(p2, q2))
    assert abs(lhs - rhs) < 1e-8


def test_von_neumann_entropy_closed_forms():
    assert float(iq.von_neumann_entropy(np.diag([1.0, 0.0]))) == 0.0
    assert abs(float(iq.von_neumann_entropy(np.eye(4) / 4)) - 2.0) < 1e-12


@pytest.mark.parametrize("eps,value", [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0)])
def test_binary_entropy_endpoints(eps, value):
    assert abs(float(iq.binary_entropy(eps)) - value) < 1e-12


def test_binary_entropy_rejects_outside_unit_interval():
    with pytest.raises(ValueError):
        iq.binary_entropy(-0.01)
    with pytest.raises(ValueError):
        iq.binary_entropy(1.01)


def test_cqmi_closed_forms():
    """bell pairs carry two bits; products carry none."""
    bell = qcore.max_entangled(2).to_density()
    assert abs(float(iq.cqmi(bell, "A", "B")) - 2.0) < 1e-10
    a = qcore.random_density((2,), 2, Rng(0), labels=("A",))
    b = qcore.random_density((2,), 2, Rng(1), labels=("B",))
    c = qcore.random_density((2,), 2, Rng(2), labels=("C",))
    prod = qcore.tensor(qcore.tensor(a, b), c)
    assert abs(float(iq.cqmi(prod, "A", "B", "C"))) < 1e-10


def test_cqmi_nonnegative_on_random_states():
    """strong subadditivity over a large randomized sample."""
    for seed in range(500):
        s = _rand_state((2, 2, 2), 8, seed)
        assert float(iq.cqmi(s, "A", "B", "C")) >= -1e-7


def test_cqmi_group_arguments():
    s = _rand_state((2, 2, 2, 2), 16, 77)
    joint = float(iq.cqmi(s, ["A", "B"], "C", "D"))
    assert joint >= -1e-9


def test_relative_entropy_closed_forms():
    p, _ = _rand_pair(3, 12)
    assert abs(float(iq.relative_entropy(p, p))) < 1e-10
    q = np.eye(3) / 3
    d = float(iq.relative_entropy(p, q))
    oracle = float(
        np.trace(p @ (_logm(p) - _logm(q))).real / math.log(2)
    )
    assert abs(d - oracle) < 1e-8


def _logm(m):
    ev, u = np.linalg.eigh(m)
    ev = np.clip(ev, 1e-300, None)
    return u @ np.diag(np.log(ev)) @ u.conj().T


def test_relative_entropy_flags_support_escape():
    rho = np.diag([0.5, 0.5, 0.0]).astype(complex)
    sigma = np.diag([1.0, 0.0, 0.0]).astype(complex)
    d = iq.relative_entropy(rho, sigma)
    assert d.infinite


def test_renyi_families_monotone_in_alpha():
    """both divergences are nondecreasing across the alpha grid."""
    grid = (0.3, 0.5, 0.7, 0.9, 1.1, 1.5, 2.0)
    for seed in range(30):
        p, q = _rand_pair(3, seed + 700)
        petz = [float(iq.renyi_relative_entropy(p, q, a)) for a in grid]
        sand = [float(iq.sandwiched_renyi(p, q, a)) for a in grid]
        for i in range(len(grid) - 1):
            assert petz[i] <= petz[i + 1] + 1e-7
            assert sand[i] <= sand[i + 1] + 1e-7


def test_sandwiched_below_petz_renyi():
    for seed in range(30):
        p, q = _rand_pair(3, seed + 900)
        for alpha in (0.5, 0.9, 1.5, 2.0):
            s = float(iq.sandwiched_renyi(p, q, alpha))
            r = float(iq.renyi_relative_entropy(p, q, alpha))
            assert s <= r + 1e-8


def test_alpha_to_one_brackets_relative_entropy():
    """alpha = 1 +/- 1e-4 sandwiches the quantum relative entropy."""
    for seed in range(20):
        p, q = _rand_pair(3, seed + 1100)
        d = float(iq.relative_entropy(p, q))
        lo = float(iq.sandwiched_renyi(p, q, 1.0 - 1e-4))
        hi = float(iq.sandwiched_renyi(p, q, 1.0 + 1e-4))
        assert lo - 1e-3 <= d <= hi + 1e-3
        lo_p = float(iq.renyi_relative_entropy(p, q, 1.0 - 1e-4))
        hi_p = float(iq.renyi_relative_entropy(p, q, 1.0 + 1e-4))
        assert lo_p - 1e-3 <= d <= hi_p + 1e-3


def test_renyi_rejects_bad_alpha():
    p, q = _rand_pair(2, 0)
    with pytest.raises(ValueError):
        iq.renyi_relative_entropy(p, q, 1.0)
    with pytest.raises(ValueError):
        iq.sandwiched_renyi(p, q, -0.5)


def test_conditional_renyi_entropy_closed_forms():
    """-1 bit on maximal entanglement, 0 on a perfect copy, 1 when independent."""
    bell = qcore.max_entangled(2).to_density()
    assert abs(float(iq.conditional_renyi_entropy(bell, "A", "B", 2.0)) + 1.0) < 1e-9
    copy = MultipartiteState(
        (2, 2), ("X", "B"), np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex)
    )
    tau = qcore.random_density((2,), 2, Rng(21)).matrix
    free = MultipartiteState((2, 2), ("X", "B"), np.kron(np.eye(2) / 2, tau))
    for alpha in (0.5, 0.75, 2.0):
        assert abs(float(iq.conditional_renyi_entropy(copy, "X", "B", alpha))) < 1e-9
        assert abs(float(iq.conditional_renyi_entropy(free, "X", "B", alpha)) - 1.0) < 1e-9


def test_renyi_cqmi_below_cqmi_at_half():
    """the alpha = 1/2 quantity never exceeds the von Neumann one."""
    for seed in range(50):
        s = _rand_state((2, 2, 2), 8, seed + 1300)
        i1 = float(iq.cqmi(s, "A", "B", "C"))
        ih = float(iq.renyi_cqmi(s, "A", "B", "C", 0.5))
        assert ih <= i1 + 1e-7


def test_renyi_cqmi_rejects_alpha_one():
    s = _rand_state((2, 2, 2), 8, 0)
    with pytest.raises(ValueError):
        iq.renyi_cqmi(s, "A", "B", "C", 1.0)


def test_quantity_carries_kind_and_digest():
    bell = qcore.max_entangled(2).to_density()
    v = iq.cqmi(bell, "A", "B")
    assert v.kind == "cqmi"
    assert isinstance(v.digest, str) and v.digest
