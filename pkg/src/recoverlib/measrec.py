"""Surprisal of measurement recoverability and quantum discord.

D_F(A;B) = -log2 sup F(rho_AB, E_A(rho_AB)) with the supremum over
entanglement-breaking channels on A.  The see-saw backend alternates two
certified concave fidelity steps (optimal preparations at fixed
measurement, optimal measurement at fixed preparations), always holding a
feasible measure-and-prepare channel, so its value upper-bounds D_F.  The
PPT backend relaxes the entanglement-breaking constraint to a positive
partial transpose on the Choi matrix, giving a lower bound on D_F that is
exact for qubit measurements, where PPT and separability coincide.

Discord D(A;B) = I(A;B) - sup over measurements of I(X;B) is estimated by
feasible rank-one measurements (an upper bound on the discord), and the
identity linking it to the conditional mutual information of the
measurement isometry's output is provided for any measurement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import channels as chn
from . import infoquant as iq
from . import qcore, recopt
from .channels import Povm, QuantumChannel
from .qcore import MultipartiteState, PureStateVector, Rng
from .recopt import VarSpec, probe_map

F_RANGE_TOL = 1e-7
D_LINK_TOL = 1e-9
SEESAW_CAP = 60
SEESAW_STEP_GAP = 1e-4
GRID_THETA = 30
GRID_PHI = 60

_BOUNDS = ("exact-within-tol", "upper-bound-on-D", "lower-bound-on-D")


@dataclass(frozen=True)
class DfmResult:
    """surprisal of measurement recoverability (bits) with its certificate.

    f_value is the achieved or relaxed fidelity and d_value = -log2 f_value.
    channel_certificate is the measure-and-prepare channel realizing
    f_value for the see-saw and exact backends, and the relaxed channel
    with positive partial transpose otherwise.
    """

    d_value: float
    f_value: float
    bound: str
    channel_certificate: QuantumChannel | None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound not in _BOUNDS:
            raise ValueError(f"unknown bound label {self.bound!r}")
        if not 0.0 <= self.f_value <= 1.0 + F_RANGE_TOL:
            raise ValueError(f"fidelity {self.f_value!r} outside [0, 1]")
        if self.channel_certificate is not None:
            floor = 1.0 / self.channel_certificate.d_in - F_RANGE_TOL
            if self.f_value < floor:
                raise ValueError(f"fidelity {self.f_value!r} below the dimension bound {floor!r}")
        link = self.d_value + math.log2(max(self.f_value, 1e-300))
        if abs(link) > D_LINK_TOL:
            raise ValueError(f"d_value inconsistent with f_value by {link:.3e}")


def _split_bipartite(s: MultipartiteState, a: str) -> tuple[MultipartiteState, str, str]:
    if len(s.labels) != 2:
        raise ValueError(f"expected a bipartite state, got subsystems {s.labels}")
    if a not in s.labels:
        raise ValueError(f"unknown label {a!r}; have {s.labels}")
    lb = next(l for l in s.labels if l != a)
    return qcore.permute_systems(s, [a, lb]), a, lb


def _conditional_b(rho4: np.ndarray, effect: np.ndarray) -> np.ndarray:
    """Tr_A[(effect (x) I) rho], unnormalized post-measurement B state."""
    return np.einsum("ak,kbac->bc", effect, rho4)


def _psd_root(m: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    lam = np.sqrt(np.clip(lam, 0.0, None))
    return (vecs * lam) @ vecs.conj().T


def _measured_blocks(sp: MultipartiteState, effects) -> list[np.ndarray]:
    da, db = sp.dims
    rho4 = sp.matrix.reshape(da, db, da, db)
    return [_conditional_b(rho4, e) for e in effects]


def _classical_mi(sp: MultipartiteState, effects) -> float:
    """I(X;B) of the flagged measurement output, in bits."""
    blocks = _measured_blocks(sp, effects)
    h_b = iq.von_neumann_entropy(sum(blocks))
    val = float(h_b)
    for blk in blocks:
        p = float(np.trace(blk).real)
        if p > 1e-15:
            val -= p * float(iq.von_neumann_entropy(blk / p))
    return val


def _prep_step(sp: MultipartiteState, effects, gap_tol: float):
    """optimal preparations at fixed measurement: one certified program."""
    da, db = sp.dims
    blocks = _measured_blocks(sp, effects)
    specs, live = [], []
    for x, blk in enumerate(blocks):
        if float(np.trace(blk).real) <= 1e-14:
            continue
        lm = probe_map(lambda s, b=blk: np.kron(s, b), da, da * db)
        specs.append(VarSpec(f"s{x}", da, lm, ("trace",)))
        live.append(x)
    out = recopt.FidelityProgram(sp.matrix, specs).solve(gap_tol=gap_tol)
    preps = [np.eye(da) / da] * len(effects)
    for x in live:
        preps[x] = out["values"][f"s{x}"]
    return preps, out


def _povm_step(sp: MultipartiteState, preps, gap_tol: float):
    """optimal measurement at fixed preparations: one certified program."""
    da, db = sp.dims
    rho4 = sp.matrix.reshape(da, db, da, db)
    specs = []
    for x, prep in enumerate(preps):
        lm = probe_map(lambda l, s=prep: np.kron(s, _conditional_b(rho4, l)), da, da * db)
        specs.append(VarSpec(f"l{x}", da, lm, ("group", "povm", da)))
    out = recopt.FidelityProgram(sp.matrix, specs).solve(gap_tol=gap_tol)
    effects = [out["values"][f"l{x}"] for x in range(len(preps))]
    return effects, out


def _seesaw_dfm(sp: MultipartiteState, effects0, tol: float):
    # steps hold feasible channels throughout, so a loose per-step gap is
    # harmless; the returned value is re-evaluated exactly on the certificate
    effects = [np.asarray(e, dtype=complex) for e in effects0]
    best_f, best_effects, best_preps = -1.0, None, None
    sweeps = 0
    residuals: dict = {}
    for sweep in range(SEESAW_CAP):
        sweeps = sweep + 1
        preps, out1 = _prep_step(sp, effects, SEESAW_STEP_GAP)
        f1 = out1["f_lo"]
        if f1 > best_f:
            best_f, best_effects, best_preps = f1, [e.copy() for e in effects], preps
        effects, out2 = _povm_step(sp, preps, SEESAW_STEP_GAP)
        f2 = out2["f_lo"]
        residuals = out2["residuals"]
        if f2 > best_f:
            best_f, best_effects, best_preps = f2, effects, preps
        if f2 - f1 <= tol * max(best_f, 1e-12) and sweep > 0:
            break
    else:
        raise recopt.SolverConvergenceError(
            f"measurement see-saw did not converge in {SEESAW_CAP} sweeps", residuals
        )
    return best_f, best_effects, best_preps, sweeps, residuals


def _rank_one_effects(iso_rows: np.ndarray) -> list[np.ndarray]:
    return [np.outer(row.conj(), row) for row in iso_rows]


def _padded_projective(da: int, n_out: int, basis: np.ndarray | None = None) -> list[np.ndarray]:
    b = np.eye(da, dtype=complex) if basis is None else basis
    effects = [np.outer(b[:, x], b[:, x].conj()) for x in range(da)]
    effects += [np.zeros((da, da), dtype=complex)] * (n_out - da)
    return effects


def _wh_orbit_effects(da: int) -> list[np.ndarray]:
    """symmetric rank-one povm from the Weyl-Heisenberg orbit of a fiducial."""
    psi = np.array([math.cos(0.3 + 0.1 * k) + 1j * math.sin(0.2 * k + 0.05) for k in range(da)])
    psi = psi / np.linalg.norm(psi)
    om = np.exp(2j * math.pi / da)
    shift = np.roll(np.eye(da), 1, axis=0).astype(complex)
    clock = np.diag(om ** np.arange(da))
    effects = []
    for p in range(da):
        for q in range(da):
            v = np.linalg.matrix_power(shift, p) @ np.linalg.matrix_power(clock, q) @ psi
            effects.append(np.outer(v, v.conj()) / da)
    return effects


def dfm(
    rho_AB: MultipartiteState,
    a: str,
    backend: str = "seesaw",
    tol: float | None = None,
    rng: Rng | None = None,
) -> DfmResult:
    """-log2 of the best fidelity between the state and a measured version.

    backend seesaw alternates concave preparation and measurement steps
    over measure-and-prepare channels with |A|^2 outcomes and evaluates the
    final channel exactly (upper bound on D_F); backend ppt-relax maximizes
    over channels on A with a positive partial transpose Choi matrix
    (lower bound on D_F, exact for qubit A).
    """
    sp, la, lb = _split_bipartite(rho_AB, a)
    da, db = sp.dims
    gap_tol = recopt.DEFAULT_GAP_TOL

    if backend == "seesaw":
        stop = recopt.SEESAW_TOL if tol is None else tol
        n_out = da * da
        lam_a, vec_a = np.linalg.eigh(qcore.partial_trace(sp, [la]).matrix)
        starts = [
            _padded_projective(da, n_out),
            _padded_projective(da, n_out, basis=vec_a),
            _wh_orbit_effects(da),
        ]
        if rng is not None:
            u = qcore.random_unitary(n_out, rng)
            starts.append(_rank_one_effects(u[:, :da]))
        rho_a = qcore.partial_trace(sp, [la]).matrix

        def luders_preps(effects):
            # the post-measurement states are exactly optimal near a fixed
            # point, where solver precision limits the solved preparations
            out = []
            for e in effects:
                root = _psd_root(e)
                blk = root @ rho_a @ root
                p = float(np.trace(blk).real)
                out.append(blk / p if p > 1e-14 else np.eye(da) / da)
            return out

        f, cert, diag = -1.0, None, {}
        for effects0 in starts:
            f_step, effects, preps, sweeps, residuals = _seesaw_dfm(sp, effects0, stop)
            candidates = [
                (effects, preps),
                (effects, luders_preps(effects)),
                (effects0, luders_preps(effects0)),
            ]
            for cand_eff, cand_preps in candidates:
                trial_cert = chn.eb_channel(Povm(cand_eff), cand_preps)
                measured = chn.apply(trial_cert, sp, la)
                f_cand = float(iq.fidelity(sp.matrix, measured.matrix))
                if f_cand > f:
                    f, cert = f_cand, trial_cert
                    diag = {"sweeps": sweeps, "starts": len(starts), "residuals": residuals}
        f = min(max(f, 0.0), 1.0)
        return DfmResult(-math.log2(max(f, 1e-300)), f, "upper-bound-on-D", cert, diag)

    if backend == "ppt-relax":
        gap = gap_tol if tol is None else tol
        d = da * db
        rho_ba = qcore.permute_systems(sp, [lb, la]).matrix
        rho4 = rho_ba.reshape(db, da, db, da)
        prm = qcore.permutation_matrix((db, da), (1, 0))

        def fn(j):
            out = np.einsum("rksi,koip->rosp", rho4, j.reshape(da, da, da, da))
            return prm @ out.reshape(d, d) @ prm.T

        lm = probe_map(fn, da * da, d)
        safe = np.eye(da * da, dtype=complex) / da
        spec = VarSpec("J", da * da, lm, ("tp", da, da), ppt=(da, da), ppt_safe=(safe, 1.0 / da))
        out = recopt.FidelityProgram(sp.matrix, [spec]).solve(gap_tol=gap)
        # the dual value upper-bounds the relaxed supremum, hence sup F
        f = min(out["f_hi"], 1.0)
        cert = QuantumChannel((da,), (da,), out["values"]["J"])
        bound = "exact-within-tol" if da == 2 else "lower-bound-on-D"
        diag = {"iterations": out["iterations"], "residuals": out["residuals"]}
        return DfmResult(-math.log2(max(f, 1e-300)), f, bound, cert, diag)

    raise ValueError(f"unknown backend {backend!r}")


def dfm_pure(psi_AB) -> DfmResult:
    """exact surprisal of measurement recoverability of a pure state.

    The optimum is the eigenbasis measure-and-prepare channel of the A
    marginal, giving D_F = -log2 Tr[psi_A^2].
    """
    rho = psi_AB.to_density() if isinstance(psi_AB, PureStateVector) else psi_AB
    if len(rho.labels) != 2:
        raise ValueError("expected a bipartite state")
    purity = float(np.trace(rho.matrix @ rho.matrix).real)
    if purity < 1.0 - 1e-9:
        raise ValueError(f"input not pure: purity {purity!r}")
    ra = qcore.partial_trace(rho, [rho.labels[0]])
    lam, vecs = np.linalg.eigh(ra.matrix)
    f = float(np.sum(np.clip(lam, 0.0, None) ** 2))
    f = min(max(f, 1e-300), 1.0)
    projectors = [np.outer(vecs[:, x], vecs[:, x].conj()) for x in range(ra.dim)]
    cert = chn.eb_channel(Povm(projectors), projectors)
    return DfmResult(-math.log2(f), f, "exact-within-tol", cert, {"purity": purity})


def _bloch_projectors(theta: float, phi: float) -> list[np.ndarray]:
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    pauli = (
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    )
    ndot = sum(c * p for c, p in zip(n, pauli))
    up = (np.eye(2, dtype=complex) + ndot) / 2
    return [up, np.eye(2, dtype=complex) - up]


def _grid_discord_qubit(sp: MultipartiteState) -> tuple[float, list[np.ndarray]]:
    """projective Bloch-sphere grid search with local refinement."""
    best = (-1.0, 0.0, 0.0)
    for theta in np.linspace(0.0, math.pi, GRID_THETA):
        for phi in np.linspace(0.0, 2 * math.pi, GRID_PHI, endpoint=False):
            val = _classical_mi(sp, _bloch_projectors(theta, phi))
            if val > best[0]:
                best = (val, theta, phi)

    def neg(x):
        return -_classical_mi(sp, _bloch_projectors(x[0], x[1]))

    res = minimize(neg, [best[1], best[2]], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12})
    if -res.fun > best[0]:
        best = (-res.fun, res.x[0], res.x[1])
    return best[0], _bloch_projectors(best[1], best[2])


def _iso_from_params(x: np.ndarray, n_out: int, da: int) -> np.ndarray:
    g = x[: n_out * da].reshape(n_out, da) + 1j * x[n_out * da :].reshape(n_out, da)
    u, _, vh = np.linalg.svd(g, full_matrices=False)
    return u @ vh


def _ascent_discord(sp: MultipartiteState, rng: Rng) -> tuple[float, list[np.ndarray]]:
    """local ascent over rank-one measurements with |A|^2 outcomes."""
    da = sp.dims[0]
    n_out = da * da
    lam_a, vec_a = np.linalg.eigh(qcore.partial_trace(sp, [sp.labels[0]]).matrix)

    def pack(v):
        rows = np.zeros((n_out, da), dtype=complex)
        rows[: v.shape[1], :] = v.conj().T
        return np.concatenate([rows.real.reshape(-1), rows.imag.reshape(-1)])

    def neg(x):
        iso = _iso_from_params(x, n_out, da)
        return -_classical_mi(sp, _rank_one_effects(iso))

    starts = [pack(np.eye(da, dtype=complex)), pack(vec_a)]
    for k in range(2):
        u = qcore.random_unitary(n_out, rng.spawn(40 + k))
        starts.append(np.concatenate([u[:, :da].real.reshape(-1), u[:, :da].imag.reshape(-1)]))
    best_val, best_iso = -1.0, None
    for x0 in starts:
        res = minimize(neg, x0, method="L-BFGS-B", options={"maxiter": 300})
        iso = _iso_from_params(res.x, n_out, da)
        val = _classical_mi(sp, _rank_one_effects(iso))
        if val > best_val:
            best_val, best_iso = val, iso
    return best_val, _rank_one_effects(best_iso)


def discord(
    rho_AB: MultipartiteState, a: str, optimizer: str = "auto", rng: Rng | None = None
) -> tuple[float, Povm]:
    """quantum discord I(A;B) - sup I(X;B) over measurements on A, in bits.

    The supremum is taken over feasible rank-one measurements (projective
    Bloch grid with refinement for qubit A, parametrized local ascent with
    |A|^2 outcomes otherwise), so the value is an upper bound on the
    discord.  Returns the value and the best measurement found.
    """
    sp, la, lb = _split_bipartite(rho_AB, a)
    da = sp.dims[0]
    if optimizer not in ("auto", "grid", "ascent"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if optimizer == "grid" and da != 2:
        raise ValueError("the grid optimizer handles qubit A only")
    rng = Rng(0) if rng is None else rng
    i_ab = float(iq.cqmi(sp, la, lb))
    if optimizer == "grid" or (optimizer == "auto" and da == 2):
        mi, effects = _grid_discord_qubit(sp)
    else:
        mi, effects = _ascent_discord(sp, rng)
    return max(i_ab - mi, 0.0), Povm(effects)


def discord_as_cqmi(rho_AB: MultipartiteState, a: str, povm: Povm) -> float:
    """I(E;B|X) of the measurement isometry output, in bits.

    The isometry sends A to the outcome register X and an internal
    environment E; for every measurement this equals I(A;B) - I(X;B).
    """
    sp, la, lb = _split_bipartite(rho_AB, a)
    iso = chn.measurement_isometry(povm).as_channel()
    x_lab, e_lab = "X", "Ei"
    while x_lab in sp.labels:
        x_lab += "'"
    while e_lab in sp.labels or e_lab == x_lab:
        e_lab += "'"
    sig = chn.apply(iso, sp, la, out_labels=[x_lab, e_lab])
    return float(iq.cqmi(sig, e_lab, lb, x_lab))


def approx_fixed_point_witness(
    rho_AB: MultipartiteState, a: str, eps_budget: float
) -> tuple[QuantumChannel, float]:
    """certificate channel and how far the state is from being its fixed point.

    Runs the see-saw backend, checks its certified upper bound on D_F
    against the budget, and returns the measure-and-prepare channel with
    the trace norm of rho - E_A(rho).  The fidelity bound guarantees
    trace norm <= 2 sqrt(D_F in natural-log units), which is verified
    before returning.
    """
    res = dfm(rho_AB, a, backend="seesaw")
    if res.d_value > eps_budget:
        raise ValueError(
            f"certified bound {res.d_value:.6f} bits exceeds the budget {eps_budget:.6f}"
        )
    sp, la, lb = _split_bipartite(rho_AB, a)
    out = chn.apply(res.channel_certificate, sp, la)
    tdist = float(iq.trace_distance(sp.matrix, out.matrix))
    ceiling = 2.0 * math.sqrt(res.d_value * math.log(2.0)) + 1e-5
    if tdist > ceiling:
        raise RuntimeError(
            f"trace distance {tdist:.6e} exceeds the fidelity-implied ceiling {ceiling:.6e}"
        )
    return res.channel_certificate, tdist


def discord_upper_from_fixed_point(rho_AB: MultipartiteState, eb: QuantumChannel) -> float:
    """discord bound 4 h2(eps) + 8 eps log2|A| from an approximate fixed point.

    eps is the trace norm of rho - E_A(rho) for the given
    entanglement-breaking channel, applied to the first subsystem whose
    dimension matches; eps beyond 1 is clamped with a warning.
    """
    target = next((l for l, d in zip(rho_AB.labels, rho_AB.dims) if d == eb.d_in), None)
    if target is None:
        raise ValueError(f"no subsystem matches the channel input dimension {eb.d_in}")
    out = chn.apply(eb, rho_AB, target)
    eps = float(iq.trace_distance(rho_AB.matrix, out.matrix))
    if eps > 1.0:
        warnings.warn(f"trace distance {eps:.3f} exceeds 1; clamped for the entropy bound")
        eps = 1.0
    return 4.0 * float(iq.binary_entropy(eps)) + 8.0 * eps * math.log2(eb.d_in)
