"""Geometric squashed entanglement.

E(A;B) = -1/2 log2 Fsq(A;B), where Fsq is the largest conditional fidelity
of recovery F(A;B|E) over all extensions omega_ABE of rho_AB.  Every
extension arises by squashing the reference system of a fixed purification
psi_ABE' through a channel S, so the search runs over squashing channels
into an environment of chosen dimension:

  - a recovery step solves the certified convex program for F(A;B|E) at
    fixed S,
  - a squash step improves S at fixed recovery map; both fidelity
    arguments are then affine in the Choi matrix of S, so the step is a
    single semidefinite program.

Any feasible pair gives F(A;B|E) <= Fsq, hence the heuristic value lower
bounds Fsq and upper bounds E in bits.  Pure states, separable states with
a known decomposition, and private states admit exact or certified
special-case treatment below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import channels as chn
from . import qcore, recopt
from .channels import QuantumChannel
from .qcore import MultipartiteState, PureStateVector, Rng

F_RANGE_TOL = 1e-7
E_LINK_TOL = 1e-9
DEFAULT_RESTARTS = 5
DEFAULT_SWEEPS = 8
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class GseResult:
    """geometric squashed entanglement value (bits) with its certificates.

    f_sq_value is the best conditional fidelity of recovery found and
    e_value = -1/2 log2 f_sq_value.  extension_certificate squashes the
    canonical purification reference into the environment whose dimension
    is env_dim; recovery_certificate recovers the traced-out part from
    that environment.
    """

    e_value: float
    f_sq_value: float
    bound: str
    extension_certificate: QuantumChannel | None
    env_dim: int
    recovery_certificate: QuantumChannel | None
    restarts: int

    def __post_init__(self):
        if self.bound not in ("exact", "upper-bound-on-E"):
            raise ValueError(f"unknown bound label {self.bound!r}")
        if not -1e-12 <= self.f_sq_value <= 1.0 + F_RANGE_TOL:
            raise ValueError(f"fidelity {self.f_sq_value!r} outside [0, 1]")
        link = self.e_value + 0.5 * math.log2(max(self.f_sq_value, 1e-300))
        if abs(link) > E_LINK_TOL:
            raise ValueError(f"e_value inconsistent with f_sq_value by {link:.3e}")


def _pick_label(used, base: str) -> str:
    lab = base
    while lab in used:
        lab = lab + "'"
    return lab


def _as_unit_vector(v) -> np.ndarray:
    vec = v.amplitudes if isinstance(v, PureStateVector) else np.asarray(v, dtype=complex).reshape(-1)
    nrm = float(np.linalg.norm(vec))
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state vector norm {nrm!r} further than 1e-8 from 1")
    return vec / nrm


def _split_groups(s: MultipartiteState, a, b) -> tuple[list[str], list[str]]:
    if len(s.labels) < 2:
        raise ValueError("need at least two subsystems")
    if a is None and b is None:
        return [s.labels[0]], list(s.labels[1:])
    if a is None or b is None:
        raise ValueError("pass both groups or neither")
    return recopt._normalize_groups(s, a, b)


def _canonical_purification(sp: MultipartiteState) -> tuple[MultipartiteState, str, int]:
    """purify with a reference of dimension |A||B|, appended last."""
    ref = sp.dim
    r_lab = _pick_label(sp.labels, "R")
    psi = qcore.purify(sp, r_lab, ref_dim=ref).to_density()
    return psi, r_lab, ref


def _canonical_squash(ref: int, env: int) -> QuantumChannel:
    """identity when the environment matches the reference, otherwise an
    isometric embedding or a truncation completed to a channel."""
    if env >= ref:
        return chn.kraus_to_choi([np.eye(env, ref, dtype=complex)], in_dims=(ref,), out_dims=(env,))
    emb = chn.Isometry(np.eye(ref, env, dtype=complex), (env,), (ref,))
    return chn.isometry_inverse_channel(emb, np.eye(env) / env)


def _random_squash(ref: int, env: int, rng: Rng) -> QuantumChannel:
    """channel from a random Stinespring isometry with a ref-sized garbage system."""
    u = qcore.random_unitary(env * ref, rng)
    v3 = u[:, :ref].reshape(env, ref, ref)
    return chn.kraus_to_choi([v3[:, g, :] for g in range(ref)], in_dims=(ref,), out_dims=(env,))


def _squash_step(
    psi: MultipartiteState, r_lab: str, ga: list[str], gb: list[str], env: int, recovery: QuantumChannel
) -> tuple[np.ndarray, float]:
    """one improvement of the squashing channel at fixed recovery map.

    Both fidelity arguments are affine images of the squashing Choi matrix,
    so maximizing root fidelity over channels is a semidefinite program.
    """
    sp = qcore.permute_systems(psi, list(ga) + list(gb) + [r_lab])
    ref = sp.dims[-1]
    dab = sp.dim // ref
    da = math.prod(sp.dims[: len(ga)])
    db = dab // da
    d = dab * env
    rho4 = sp.matrix.reshape(dab, ref, dab, ref)
    jr4 = np.asarray(recovery.choi).reshape(env, da * env, env, da * env)
    prm = qcore.permutation_matrix((db, da, env), (1, 0, 2))

    # reference coordinates with identically zero rows (purification
    # padding) cannot affect the objective, so the variable shrinks
    keep = [k for k in range(ref) if float(np.max(np.abs(rho4[:, k]))) > 0.0]
    n_r = len(keep)
    rho4_r = rho4[:, keep][:, :, :, keep]

    def fn_p_r(j):
        return np.einsum("rksi,koip->rosp", rho4_r, j.reshape(n_r, env, n_r, env)).reshape(d, d)

    def fn_q_from(full):
        pbe = np.einsum("ipiq->pq", full.reshape(da, db * env, da, db * env))
        out = np.einsum("rksi,koip->rosp", pbe.reshape(db, env, db, env), jr4)
        return prm @ out.reshape(d, d) @ prm.T

    lm_p = recopt.probe_map(fn_p_r, n_r * env, d)
    lm_q = recopt.probe_map(lambda j: fn_q_from(fn_p_r(j)), n_r * env, d)
    s_var = cp.Variable((n_r * env, n_r * env), hermitian=True)
    big = cp.Variable((2 * d, 2 * d), hermitian=True)
    cons = [
        s_var >> 0,
        cp.partial_trace(s_var, (n_r, env), 1) == np.eye(n_r),
        big >> 0,
        big[:d, :d] == lm_p.cvx(s_var),
        big[d:, d:] == lm_q.cvx(s_var),
    ]
    problem = cp.Problem(cp.Maximize(cp.real(cp.trace(big[:d, d:]))), cons)
    recopt._solve_cvx(problem)
    j_red = np.asarray(s_var.value)
    if n_r < ref:
        sel = np.eye(ref, dtype=complex)[:, keep]
        w = np.kron(sel, np.eye(env, dtype=complex))
        j_full = w @ j_red @ w.conj().T
        j_full += np.kron(np.eye(ref) - sel @ sel.conj().T, np.eye(env) / env)
    else:
        j_full = j_red
    j_new = recopt.project_to_channel(j_full, ref, env)

    def fn_p(j):
        return np.einsum("rksi,koip->rosp", rho4, j.reshape(ref, env, ref, env)).reshape(d, d)

    full_new = fn_p(j_new)
    f_new = recopt._fidelity_value(full_new, fn_q_from(full_new))
    return j_new, f_new


def _alternate(
    psi: MultipartiteState,
    r_lab: str,
    e_lab: str,
    ga: list[str],
    gb: list[str],
    j0: np.ndarray,
    env: int,
    sweeps: int,
    tol: float,
) -> tuple[float, np.ndarray, QuantumChannel | None]:
    ref = psi.dims_of([r_lab])[0]
    j_s = np.asarray(j0, dtype=complex)
    best_f, best_j, best_cert = -1.0, j_s, None
    rounds = max(int(sweeps), 1)
    for sweep in range(rounds):
        squash = QuantumChannel((ref,), (env,), j_s)
        omega = chn.apply(squash, psi, r_lab, out_labels=e_lab)
        rec = recopt.fidelity_of_recovery(omega, ga, gb, [e_lab], backend="convex")
        if rec.value > best_f:
            best_f, best_j, best_cert = min(rec.value, 1.0), j_s, rec.certificate
        if sweep == rounds - 1 or best_f >= 1.0 - 1e-9:
            break
        try:
            j_new, f_new = _squash_step(psi, r_lab, ga, gb, env, rec.certificate)
        except recopt.SolverConvergenceError:
            break
        if f_new - best_f <= tol * max(best_f, 1e-12):
            break
        j_s = j_new
    return best_f, best_j, best_cert


def gse_heuristic(
    rho_AB: MultipartiteState,
    env_dim: int | None = None,
    restarts: int = DEFAULT_RESTARTS,
    sweeps: int = DEFAULT_SWEEPS,
    rng: Rng | None = None,
    tol: float = DEFAULT_TOL,
    a=None,
    b=None,
    warm_start: QuantumChannel | None = None,
) -> GseResult:
    """upper-bound the geometric squashed entanglement by alternating steps.

    Fixes the canonical purification of rho_AB, squashes its reference into
    an environment of dimension env_dim (default |A||B|), and alternates a
    certified recovery solve with a semidefinite update of the squashing
    channel.  Restart 0 uses the canonical squashing channel (identity when
    dimensions permit), further restarts draw random isometry-induced
    channels, and an optional warm-start channel is appended as one more
    restart.  The best fidelity over all restarts is returned; groups a and
    b may name the two sides of a multi-subsystem input.
    """
    ga, gb = _split_groups(rho_AB, a, b)
    sp = qcore.permute_systems(rho_AB, ga + gb)
    psi, r_lab, ref = _canonical_purification(sp)
    env = ref if env_dim is None else int(env_dim)
    if env < 1:
        raise ValueError("env_dim must be at least 1")
    e_lab = _pick_label(sp.labels + (r_lab,), "E")
    rng = Rng(0) if rng is None else rng

    starts: list[np.ndarray] = []
    if restarts >= 1:
        starts.append(np.asarray(_canonical_squash(ref, env).choi))
    for _ in range(max(int(restarts) - 1, 0)):
        starts.append(np.asarray(_random_squash(ref, env, rng).choi))
    if warm_start is not None:
        if warm_start.d_in != ref or warm_start.d_out != env:
            raise ValueError(
                f"warm start maps {warm_start.d_in}->{warm_start.d_out}, need {ref}->{env}"
            )
        starts.append(np.asarray(warm_start.choi))
    if not starts:
        raise ValueError("need restarts >= 1 or a warm start")

    best: tuple[float, np.ndarray, QuantumChannel | None] | None = None
    for j0 in starts:
        trio = _alternate(psi, r_lab, e_lab, ga, gb, j0, env, sweeps, tol)
        if best is None or trio[0] > best[0]:
            best = trio
    f, j_s, cert = best
    f = min(max(f, 0.0), 1.0)
    squash = QuantumChannel((ref,), (env,), j_s)
    e = -0.5 * math.log2(max(f, 1e-300))
    return GseResult(e, f, "upper-bound-on-E", squash, env, cert, len(starts))


def gse_pure(phi) -> GseResult:
    """exact geometric squashed entanglement of a bipartite pure state.

    Extensions of a pure state are product, so the value reduces to
    -log2 of the largest eigenvalue of the A marginal; the certificates
    are the trace-out squashing channel and the preparation of the top
    eigenvector.
    """
    rho = phi.to_density() if isinstance(phi, PureStateVector) else phi
    if len(rho.labels) != 2:
        raise ValueError("expected a bipartite state")
    purity = float(np.trace(rho.matrix @ rho.matrix).real)
    if purity < 1.0 - 1e-9:
        raise ValueError(f"input not pure: purity {purity!r}")
    da, db = rho.dims
    ra = qcore.partial_trace(rho, [rho.labels[0]])
    lam, vecs = np.linalg.eigh(ra.matrix)
    top = min(max(float(lam[-1]), 1e-300), 1.0)
    a_top = vecs[:, -1]
    squash = QuantumChannel((da * db,), (1,), np.eye(da * db))
    prep = QuantumChannel((1,), (da, 1), np.outer(a_top, a_top.conj()))
    return GseResult(-math.log2(top), top * top, "exact", squash, 1, prep, 0)


def separable_witness_extension(decomposition) -> tuple[MultipartiteState, QuantumChannel]:
    """flagged extension and measure-and-prepare recovery for a separable state.

    decomposition lists (weight, pure state on A, pure state on B); the
    extension records the mixture index in an environment flag, and the
    recovery measures the flag and reprepares the matching A factor, which
    reproduces the extension perfectly.
    """
    if not decomposition:
        raise ValueError("decomposition must be nonempty")
    ws, avs, bvs = [], [], []
    for w, av, bv in decomposition:
        ws.append(float(w))
        avs.append(_as_unit_vector(av))
        bvs.append(_as_unit_vector(bv))
    if any(w < -1e-12 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
        raise ValueError("weights must form a probability vector")
    da, db = len(avs[0]), len(bvs[0])
    if any(len(v) != da for v in avs) or any(len(v) != db for v in bvs):
        raise ValueError("component dimensions must agree")
    n = len(ws)
    mat = np.zeros((da * db * n, da * db * n), dtype=complex)
    kraus = []
    for x, (w, av, bv) in enumerate(zip(ws, avs, bvs)):
        flag = np.zeros((n, n), dtype=complex)
        flag[x, x] = 1.0
        pair = np.kron(np.outer(av, av.conj()), np.outer(bv, bv.conj()))
        mat += w * np.kron(pair, flag)
        kraus.append(np.kron(av.reshape(da, 1), flag))
    ext = MultipartiteState((da, db, n), ("A", "B", "E"), mat)
    rec = chn.kraus_to_choi(kraus, in_dims=(n,), out_dims=(da, n))
    return ext, rec


def squash_to_extension(
    rho_AB: MultipartiteState, squash: QuantumChannel, a=None, b=None, env_label: str | None = None
) -> MultipartiteState:
    """apply a squashing channel to the canonical purification reference."""
    ga, gb = _split_groups(rho_AB, a, b)
    sp = qcore.permute_systems(rho_AB, ga + gb)
    psi, r_lab, ref = _canonical_purification(sp)
    if squash.d_in != ref:
        raise ValueError(f"squashing channel input {squash.d_in} does not match reference {ref}")
    base = env_label if env_label is not None else "E"
    if len(squash.out_dims) == 1:
        e_labels = [_pick_label(sp.labels + (r_lab,), base)]
    else:
        e_labels = []
        for i in range(len(squash.out_dims)):
            e_labels.append(_pick_label(tuple(sp.labels) + (r_lab,) + tuple(e_labels), f"{base}{i}"))
    return chn.apply(squash, psi, r_lab, out_labels=e_labels)


def extension_to_squash(extension: MultipartiteState, a, b, e) -> QuantumChannel:
    """squashing channel that turns the canonical purification into the extension.

    Given omega extending its AB marginal, returns S from the reference of
    qcore.purify(rho_AB, ref_dim=|A||B|) to the environment E such that
    (id (x) S)(psi) = omega exactly; the auxiliary purifying system of
    omega is traced out inside S.
    """
    ga, gb, ge = recopt._normalize_groups(extension, a, b, e)
    if len(ge) != 1:
        raise ValueError("the environment must be a single subsystem")
    sp = qcore.permute_systems(extension, ga + gb + ge)
    d_e = sp.dims[-1]
    dab = sp.dim // d_e
    rho = qcore.partial_trace(sp, ga + gb)

    # eigendata matching the deterministic recipe inside qcore.purify
    lam, vecs = np.linalg.eigh(rho.matrix)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    keep = lam > qcore.EIG_CUTOFF
    lam, vecs = lam[keep], vecs[:, keep]
    vecs = np.column_stack([qcore._phase_fix(vecs[:, i]) for i in range(len(lam))])
    r = len(lam)

    # purify the extension over G, padded so E(x)G can host the reference
    r_g = max(-(-dab // d_e), 1)
    g_lab = _pick_label(sp.labels, "G")
    theta = qcore.purify(sp, g_lab, ref_dim=max(r_g, _rank_of(sp.matrix)))
    r_g = theta.dims[-1]
    th_m = theta.amplitudes.reshape(dab, d_e * r_g)

    # isometry W: reference -> E(x)G with (I (x) W) psi = theta
    cols = (th_m.conj().T @ vecs) / np.sqrt(lam)
    w = np.zeros((d_e * r_g, dab), dtype=complex)
    w[:, :r] = cols.conj()
    if dab > r:
        perp = np.eye(d_e * r_g) - w[:, :r] @ w[:, :r].conj().T
        pl, pv = np.linalg.eigh(perp)
        w[:, r:] = pv[:, np.argsort(pl)[::-1][: dab - r]]
    w3 = w.reshape(d_e, r_g, dab)
    return chn.kraus_to_choi([w3[:, g, :] for g in range(r_g)], in_dims=(dab,), out_dims=(d_e,))


def _rank_of(m: np.ndarray) -> int:
    lam = np.linalg.eigvalsh(m)
    return int(np.sum(lam > qcore.EIG_CUTOFF))


def flagged_mixture_extension(components) -> MultipartiteState:
    """extension of a mixture with the mixing index flagged in the environment.

    components lists (weight, extension state) sharing dims and labels
    (A, B, E); the result extends sum_x p_x rho^x_AB with E and the flag
    merged into a single environment subsystem.
    """
    if not components:
        raise ValueError("components must be nonempty")
    ws = [float(p) for p, _ in components]
    states = [s for _, s in components]
    if any(w < -1e-12 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
        raise ValueError("weights must form a probability vector")
    first = states[0]
    if len(first.labels) != 3:
        raise ValueError("component extensions must have subsystems (A, B, E)")
    if any(s.dims != first.dims or s.labels != first.labels for s in states):
        raise ValueError("component extensions must share dims and labels")
    d_a, d_b, d_e = first.dims
    n = len(states)
    mat = np.zeros((d_a * d_b * d_e * n,) * 2, dtype=complex)
    for x, (w, s) in enumerate(zip(ws, states)):
        flag = np.zeros((n, n), dtype=complex)
        flag[x, x] = 1.0
        mat += w * np.kron(s.matrix, flag)
    return MultipartiteState((d_a, d_b, d_e * n), first.labels, mat)


def product_extension(s1: MultipartiteState, s2: MultipartiteState) -> MultipartiteState:
    """extension of a tensor product with the parts merged pairwise.

    Both inputs carry subsystems (A, B, E); the output extends
    rho1 (x) rho2 on merged subsystems (A1A2, B1B2, E1E2), labeled as in
    the first input.
    """
    if len(s1.labels) != 3 or len(s2.labels) != 3:
        raise ValueError("extensions must have subsystems (A, B, E)")
    alias = MultipartiteState(s2.dims, ("_A2", "_B2", "_E2"), s2.matrix)
    t = qcore.tensor(s1, alias)
    a1, b1, e1 = s1.labels
    sp = qcore.permute_systems(t, [a1, "_A2", b1, "_B2", e1, "_E2"])
    dims = (s1.dims[0] * s2.dims[0], s1.dims[1] * s2.dims[1], s1.dims[2] * s2.dims[2])
    return MultipartiteState(dims, s1.labels, sp.matrix)


def private_state_fidelity_cap(
    gamma: MultipartiteState, squash: QuantumChannel | None = None, tol: float | None = None
) -> float:
    """convex-backend F(AA';BB'|E) for a squashed extension of a private state.

    gamma carries subsystems (key A, key B, shield A, shield B) as built by
    channels.private_state; squash maps the canonical purification
    reference (dimension |AA'|·|BB'|) into the environment and defaults to
    the trace-out channel with a trivial environment.
    """
    if len(gamma.labels) != 4:
        raise ValueError("expected a four-subsystem private state")
    la, lb, lap, lbp = gamma.labels
    sp = qcore.permute_systems(gamma, [la, lap, lb, lbp])
    psi, r_lab, ref = _canonical_purification(sp)
    if squash is None:
        squash = QuantumChannel((ref,), (1,), np.eye(ref))
    if squash.d_in != ref:
        raise ValueError(f"squashing channel input {squash.d_in} does not match reference {ref}")
    e_labels = []
    for i in range(len(squash.out_dims)):
        base = "E" if len(squash.out_dims) == 1 else f"E{i}"
        e_labels.append(_pick_label(tuple(sp.labels) + (r_lab,) + tuple(e_labels), base))
    omega = chn.apply(squash, psi, r_lab, out_labels=e_labels)
    rec = recopt.fidelity_of_recovery(omega, [la, lap], [lb, lbp], e_labels, backend="convex", tol=tol)
    return float(min(rec.value, 1.0))
