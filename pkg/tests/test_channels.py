"""channel construction, conversion, and named-construction checks."""

import math

import numpy as np
import pytest

from recoverlib import channels as chn
from recoverlib import infoquant as iq
from recoverlib import qcore
from recoverlib.channels import Isometry, Povm, QuantumChannel
from recoverlib.qcore import MultipartiteState, Rng


def _rand_isometry(d_in, d_big, rng):
    g = rng.gen.normal(size=(d_big, d_in)) + 1j * rng.gen.normal(size=(d_big, d_in))
    v, _ = np.linalg.qr(g)
    return v


def _rand_kraus(d_in, d_out, n_kraus, rng):
    v = _rand_isometry(d_in, d_out * n_kraus, rng)
    return [v[i * d_out : (i + 1) * d_out, :] for i in range(n_kraus)]


def _rand_povm(dim, outcomes, rng):
    """positive effects from squared Gaussians, whitened to sum to identity."""
    raw = []
    for _ in range(outcomes):
        g = rng.gen.normal(size=(dim, dim)) + 1j * rng.gen.normal(size=(dim, dim))
        raw.append(g @ g.conj().T)
    total = sum(raw)
    ev, u = np.linalg.eigh(total)
    whiten = (u * ev**-0.5) @ u.conj().T
    return Povm([whiten @ h @ whiten for h in raw])


def _partial_transpose(m, d1, d2):
    x = m.reshape(d1, d2, d1, d2)
    return np.transpose(x, (0, 3, 2, 1)).reshape(d1 * d2, d1 * d2)


def test_random_constructions_satisfy_choi_invariants():
    """Choi matrices from random Kraus sets are PSD with a TP partial trace."""
    for seed in range(200):
        rng = Rng(seed)
        d_in, d_out, nk = 2 + seed % 2, 2 + (seed // 2) % 2, 2 + seed % 3
        ch = chn.kraus_to_choi(_rand_kraus(d_in, d_out, nk, rng), (d_in,), (d_out,))
        ev = np.linalg.eigvalsh(ch.choi)
        assert ev.min() > -1e-9
        tp = np.trace(ch.choi.reshape(d_in, d_out, d_in, d_out), axis1=1, axis2=3)
        assert np.max(np.abs(tp - np.eye(d_in))) < 1e-9


def test_channel_validation_rejects_bad_choi():
    with pytest.raises(ValueError):
        QuantumChannel((2,), (2,), -np.eye(4))
    j = np.eye(4, dtype=complex)
    j[0, 0] = 2.0
    with pytest.raises(ValueError):
        QuantumChannel((2,), (2,), j)


def test_apply_preserves_state_invariants():
    for seed in range(50):
        rng = Rng(seed)
        s = qcore.random_density((2, 3), 5, rng, labels=("A", "B"))
        ch = chn.kraus_to_choi(_rand_kraus(2, 2, 2, rng), (2,), (2,))
        out = chn.apply(ch, s, "A")
        assert out.labels == ("A", "B")
        ev = np.linalg.eigvalsh(out.matrix)
        assert ev.min() > -1e-10 and abs(ev.sum() - 1.0) < 1e-9


def test_apply_matches_kraus_action():
    rng = Rng(4)
    s = qcore.random_density((2, 2), 4, rng, labels=("A", "B"))
    kraus = _rand_kraus(2, 3, 2, rng)
    ch = chn.kraus_to_choi(kraus, (2,), (3,))
    out = chn.apply(ch, s, "B")
    oracle = sum(
        np.kron(np.eye(2), k) @ s.matrix @ np.kron(np.eye(2), k).conj().T for k in kraus
    )
    assert out.dims == (2, 3)
    assert np.max(np.abs(out.matrix - oracle)) < 1e-10


def test_choi_kraus_round_trip():
    for seed in range(20):
        rng = Rng(seed + 300)
        ch = chn.kraus_to_choi(_rand_kraus(3, 2, 3, rng), (3,), (2,))
        back = chn.kraus_to_choi(chn.choi_to_kraus(ch), (3,), (2,))
        assert np.max(np.abs(back.choi - ch.choi)) < 1e-9


def test_stinespring_dilation_reproduces_channel():
    rng = Rng(9)
    ch = chn.kraus_to_choi(_rand_kraus(2, 2, 3, rng), (2,), (2,))
    v = chn.stinespring(ch)
    s = qcore.random_density((2,), 2, rng, labels=("A",))
    big = v.matrix @ s.matrix @ v.matrix.conj().T
    d_env = big.shape[0] // 2
    lifted = MultipartiteState((2, d_env), ("O", "E"), big)
    out = qcore.partial_trace(lifted, ["O"])
    direct = chn.apply(ch, s, "A")
    assert np.max(np.abs(out.matrix - direct.matrix)) < 1e-9


def test_petz_recovery_reconstructs_product_states():
    """building the map from the AC marginal restores the full product."""
    for seed in range(10):
        rng = Rng(seed + 40)
        a = qcore.random_density((2,), 2, rng, labels=("A",))
        b = qcore.random_density((2,), 2, rng, labels=("B",))
        c = qcore.random_density((2,), 2, rng, labels=("C",))
        full = qcore.tensor(qcore.tensor(a, b), c)
        r = chn.petz_recovery(qcore.partial_trace(full, ["A", "C"]), "A", "C")
        rebuilt = chn.apply(r, qcore.partial_trace(full, ["B", "C"]), "C", ["A", "C"])
        target = qcore.permute_systems(full, rebuilt.labels)
        assert np.max(np.abs(rebuilt.matrix - target.matrix)) < 1e-9


def test_petz_recovery_exact_on_flagged_markov_states():
    """states with vanishing conditional mutual information recover exactly."""
    for seed in range(5):
        rng = Rng(seed + 60)
        probs = rng.gen.dirichlet(np.ones(2))
        m = np.zeros((8, 8), dtype=complex)
        for x in range(2):
            ra = qcore.random_density((2,), 2, rng).matrix
            rb = qcore.random_density((2,), 2, rng).matrix
            flag = np.zeros((2, 2))
            flag[x, x] = 1.0
            m += probs[x] * np.kron(np.kron(ra, rb), flag)
        s = MultipartiteState((2, 2, 2), ("A", "B", "C"), m)
        assert abs(float(iq.cqmi(s, "A", "B", "C"))) < 1e-10
        r = chn.petz_recovery(qcore.partial_trace(s, ["A", "C"]), "A", "C")
        rebuilt = chn.apply(r, qcore.partial_trace(s, ["B", "C"]), "C", ["A", "C"])
        target = qcore.permute_systems(s, rebuilt.labels)
        assert np.max(np.abs(rebuilt.matrix - target.matrix)) < 1e-8


def test_povm_validation():
    with pytest.raises(ValueError):
        Povm([np.eye(2) * 0.5])
    with pytest.raises(ValueError):
        Povm([np.diag([1.5, 1.0]), np.diag([-0.5, 0.0])])
    p = _rand_povm(2, 3, Rng(0))
    assert p.dim == 2 and p.outcomes == 3


def test_measurement_isometry_is_isometric_and_consistent():
    """tracing the environment off the isometry action reproduces the stats."""
    for seed in range(20):
        rng = Rng(seed + 500)
        p = _rand_povm(2, 3, rng)
        v = chn.measurement_isometry(p)
        assert np.max(np.abs(v.matrix.conj().T @ v.matrix - np.eye(2))) < 1e-9
        s = qcore.random_density((2,), 2, rng, labels=("A",))
        big = MultipartiteState(
            v.out_dims, ("X", "E"), v.matrix @ s.matrix @ v.matrix.conj().T
        )
        stats = qcore.partial_trace(big, ["X"]).matrix
        direct = chn.apply(chn.measurement_channel(p), s, "A", "X").matrix
        assert np.max(np.abs(stats - direct)) < 1e-9
        born = np.array([float(np.trace(e @ s.matrix).real) for e in p.effects])
        assert np.max(np.abs(np.diag(stats).real - born)) < 1e-9


def test_isometry_inverse_channel_undoes_embedding():
    for seed in range(20):
        rng = Rng(seed + 700)
        vm = _rand_isometry(2, 5, rng)
        v = Isometry(vm, (2,), (5,))
        tau = qcore.random_density((2,), 2, rng).matrix
        inv = chn.isometry_inverse_channel(v, tau)
        s = qcore.random_density((2,), 2, rng, labels=("A",))
        lifted = MultipartiteState((5,), ("A",), vm @ s.matrix @ vm.conj().T)
        back = chn.apply(inv, lifted, "A")
        assert np.max(np.abs(back.matrix - s.matrix)) < 1e-9


def test_eb_channel_choi_has_positive_partial_transpose():
    """measure-and-prepare structure forces a PPT Choi matrix."""
    for seed in range(30):
        rng = Rng(seed + 900)
        p = _rand_povm(2, 4, rng)
        preps = [qcore.random_density((2,), 2, rng).matrix for _ in range(4)]
        ch = chn.eb_channel(p, preps)
        pt = _partial_transpose(ch.choi, 2, 2)
        assert float(np.linalg.eigvalsh(pt)[0]) > -1e-9


def test_eb_channel_applies_measure_and_prepare():
    rng = Rng(31)
    p = _rand_povm(2, 3, rng)
    preps = [qcore.random_density((2,), 2, rng).matrix for _ in range(3)]
    ch = chn.eb_channel(p, preps)
    s = qcore.random_density((2,), 2, rng, labels=("A",))
    out = chn.apply(ch, s, "A")
    oracle = sum(
        float(np.trace(e @ s.matrix).real) * t for e, t in zip(p.effects, preps)
    )
    assert np.max(np.abs(out.matrix - oracle)) < 1e-10


def test_dephasing_channel_kills_off_diagonals():
    ch = chn.dephasing_channel(3)
    s = qcore.random_density((3,), 3, Rng(2), labels=("A",))
    out = chn.apply(ch, s, "A")
    assert np.max(np.abs(out.matrix - np.diag(np.diag(s.matrix)))) < 1e-12


def test_dephasing_channel_respects_custom_basis():
    rng = Rng(8)
    u = _rand_isometry(2, 2, rng)
    ch = chn.dephasing_channel(2, basis=u)
    s = qcore.random_density((2,), 2, rng, labels=("A",))
    out = chn.apply(ch, s, "A")
    rotated = u.conj().T @ out.matrix @ u
    assert np.max(np.abs(rotated - np.diag(np.diag(rotated)))) < 1e-10


def test_private_state_untwisted_is_bell_times_shield():
    sigma = qcore.random_density((2, 2), 4, Rng(3), labels=("Ap", "Bp"))
    tw = [np.eye(4, dtype=complex) for _ in range(2)]
    gamma = chn.private_state(2, (2, 2), tw, sigma)
    assert gamma.labels == ("A", "B", "Ap", "Bp")
    bell = qcore.max_entangled(2).to_density()
    assert np.max(np.abs(gamma.matrix - np.kron(bell.matrix, sigma.matrix))) < 1e-12


def test_private_state_key_is_perfectly_correlated():
    """computational measurements on the key systems always agree."""
    sigma = qcore.random_density((2, 2), 4, Rng(13), labels=("Ap", "Bp"))
    tw = [qcore.random_unitary(4, Rng(14, k)) for k in range(2)]
    gamma = chn.private_state(2, (2, 2), tw, sigma)
    key = qcore.partial_trace(gamma, ["A", "B"]).matrix
    diag = np.diag(key).real
    agree = diag[0] + diag[3]
    assert abs(agree - 1.0) < 1e-9
    assert abs(diag[0] - 0.5) < 1e-9 and abs(diag[3] - 0.5) < 1e-9
