"""CPTP maps in Choi and Kraus form plus the named channel constructions:
Petz recovery, isometry-inverting maps, measurement channels and their
isometric extensions, entanglement-breaking channels, dephasing, and
private states.

Choi convention: J = sum_{ij} |i><j|_in (x) N(|i><j|), unnormalized, with
the input block most significant.  Trace preservation then reads
Tr_out J = I_in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from recoverlib.qcore import (
    MultipartiteState,
    max_entangled,
    permute_systems,
    tensor,
)

CHOI_PSD_TOL = 1e-8
CHOI_TP_TOL = 1e-8
ISOMETRY_TOL = 1e-9
POVM_PSD_TOL = 1e-9
POVM_SUM_TOL = 1e-8


def _as_dims(dims) -> tuple[int, ...]:
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),)
    out = tuple(int(d) for d in dims)
    if any(d <= 0 for d in out):
        raise ValueError(f"dimensions must be positive, got {out}")
    return out


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, MultipartiteState):
        return x.matrix
    return np.asarray(x, dtype=complex)


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map stored as an unnormalized Choi matrix on input (x) output."""

    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    choi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "in_dims", _as_dims(self.in_dims))
        object.__setattr__(self, "out_dims", _as_dims(self.out_dims))
        j = np.asarray(self.choi, dtype=complex)
        n = self.d_in * self.d_out
        if j.shape != (n, n):
            raise ValueError(f"choi shape {j.shape} does not match dims {self.in_dims}->{self.out_dims}")
        herm = float(np.max(np.abs(j - j.conj().T)))
        if herm > CHOI_PSD_TOL:
            raise ValueError(f"choi not Hermitian: max deviation {herm:.3e}")
        j = (j + j.conj().T) / 2
        lo = float(np.linalg.eigvalsh(j)[0])
        if lo < -CHOI_PSD_TOL:
            raise ValueError(f"channel not completely positive: min Choi eigenvalue {lo:.3e}")
        red = np.einsum("ioko->ik", j.reshape(self.d_in, self.d_out, self.d_in, self.d_out))
        tp = float(np.max(np.abs(red - np.eye(self.d_in))))
        if tp > CHOI_TP_TOL:
            raise ValueError(f"channel not trace preserving: max deviation {tp:.3e}")
        j.setflags(write=False)
        object.__setattr__(self, "choi", j)

    @property
    def d_in(self) -> int:
        return math.prod(self.in_dims)

    @property
    def d_out(self) -> int:
        return math.prod(self.out_dims)


@dataclass(frozen=True)
class Povm:
    """measurement given by a tuple of PSD effects summing to the identity."""

    effects: tuple[np.ndarray, ...]

    def __post_init__(self):
        eff = tuple(np.asarray(e, dtype=complex) for e in self.effects)
        if not eff:
            raise ValueError("povm needs at least one effect")
        d = eff[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for k, e in enumerate(eff):
            if e.shape != (d, d):
                raise ValueError(f"effect {k} has shape {e.shape}, expected {(d, d)}")
            if float(np.max(np.abs(e - e.conj().T))) > POVM_PSD_TOL:
                raise ValueError(f"effect {k} not Hermitian")
            if float(np.linalg.eigvalsh((e + e.conj().T) / 2)[0]) < -POVM_PSD_TOL:
                raise ValueError(f"effect {k} not positive semidefinite")
            total += e
        if float(np.max(np.abs(total - np.eye(d)))) > POVM_SUM_TOL:
            raise ValueError("effects do not sum to the identity")
        for e in eff:
            e.setflags(write=False)
        object.__setattr__(self, "effects", eff)

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    @property
    def outcomes(self) -> int:
        return len(self.effects)


@dataclass(frozen=True)
class Isometry:
    """matrix with orthonormal columns mapping the input into the output space."""

    matrix: np.ndarray
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "in_dims", _as_dims(self.in_dims))
        object.__setattr__(self, "out_dims", _as_dims(self.out_dims))
        v = np.asarray(self.matrix, dtype=complex)
        d_in = math.prod(self.in_dims)
        d_out = math.prod(self.out_dims)
        if v.shape != (d_out, d_in):
            raise ValueError(f"isometry shape {v.shape} does not match dims {self.in_dims}->{self.out_dims}")
        if d_out < d_in:
            raise ValueError("isometry output space smaller than input space")
        err = float(np.max(np.abs(v.conj().T @ v - np.eye(d_in))))
        if err > ISOMETRY_TOL:
            raise ValueError(f"columns not orthonormal: max deviation {err:.3e}")
        v.setflags(write=False)
        object.__setattr__(self, "matrix", v)

    def as_channel(self) -> QuantumChannel:
        return kraus_to_choi([self.matrix], in_dims=self.in_dims, out_dims=self.out_dims)


def kraus_to_choi(kraus: Sequence[np.ndarray], in_dims=None, out_dims=None) -> QuantumChannel:
    """build the channel sum_k K rho K^dag from a trace-preserving Kraus set."""
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    if not ks:
        raise ValueError("need at least one Kraus operator")
    d_out, d_in = ks[0].shape
    comp = sum(k.conj().T @ k for k in ks)
    if float(np.max(np.abs(comp - np.eye(d_in)))) > CHOI_TP_TOL:
        raise ValueError("Kraus operators do not satisfy the completeness relation")
    j = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in ks:
        v = k.T.flatten()
        j += np.outer(v, v.conj())
    in_dims = (d_in,) if in_dims is None else in_dims
    out_dims = (d_out,) if out_dims is None else out_dims
    return QuantumChannel(in_dims, out_dims, j)


def choi_to_kraus(ch: QuantumChannel, cutoff: float = 1e-12) -> list[np.ndarray]:
    """eigendecompose the Choi matrix into a minimal Kraus set."""
    lam, vecs = np.linalg.eigh(ch.choi)
    top = float(lam[-1]) if len(lam) else 0.0
    out = []
    for i in range(len(lam) - 1, -1, -1):
        if lam[i] <= cutoff * max(top, 1.0):
            break
        v = vecs[:, i] * math.sqrt(lam[i])
        out.append(v.reshape(ch.d_in, ch.d_out).T)
    return out


def apply(ch: QuantumChannel, s: MultipartiteState, target, out_labels=None) -> MultipartiteState:
    """act with the channel on the target labels, carrying the rest through.

    The output subsystems take the target labels when the counts match;
    otherwise out_labels must name them.  The output block sits where the
    first target label was.
    """
    target = [target] if isinstance(target, str) else list(target)
    if not target:
        raise ValueError("target must name at least one subsystem")
    for l in target:
        if l not in s.labels:
            raise ValueError(f"unknown label {l!r}; have {s.labels}")
    t_dims = tuple(s.dims[s.axis_of(l)] for l in target)
    if t_dims != ch.in_dims:
        raise ValueError(f"target dims {t_dims} do not match channel input {ch.in_dims}")
    if out_labels is None:
        if len(ch.out_dims) != len(target):
            raise ValueError("channel changes the subsystem count; pass out_labels")
        out_labels = list(target)
    else:
        out_labels = [out_labels] if isinstance(out_labels, str) else list(out_labels)
        if len(out_labels) != len(ch.out_dims):
            raise ValueError("out_labels length does not match channel output")
    rest = [l for l in s.labels if l not in target]
    for l in out_labels:
        if l in rest:
            raise ValueError(f"output label {l!r} collides with a carried subsystem")
    sp = permute_systems(s, rest + target) if rest else permute_systems(s, target)
    d_rest = math.prod(sp.dims[: len(rest)]) if rest else 1
    rho4 = sp.matrix.reshape(d_rest, ch.d_in, d_rest, ch.d_in)
    j4 = ch.choi.reshape(ch.d_in, ch.d_out, ch.d_in, ch.d_out)
    out4 = np.einsum("rksi,koip->rosp", rho4, j4)
    d_out = ch.d_out
    mat = out4.reshape(d_rest * d_out, d_rest * d_out)
    new_dims = tuple(sp.dims[: len(rest)]) + tuple(ch.out_dims)
    new_labels = tuple(rest) + tuple(out_labels)
    res = MultipartiteState(new_dims, new_labels, mat)
    if not rest:
        return res
    insert_at = min(s.axis_of(l) for l in target)
    final = [l for l in s.labels if l in rest and s.axis_of(l) < insert_at]
    final += list(out_labels)
    final += [l for l in rest if l not in final]
    return permute_systems(res, final)


def petz_recovery(rho_ac: MultipartiteState, recover, conditioning) -> QuantumChannel:
    """Petz recovery channel C -> A(x)C built from a state on those systems.

    Implements s |-> r^(1/2) (I (x) r_C^(-1/2) s r_C^(-1/2)) r^(1/2) with
    pseudo-inverse square roots (cutoff 1e-10 of the top eigenvalue); the
    action from the kernel of r_C is completed trace-preservingly by
    preparing the state itself.
    """
    ga = [recover] if isinstance(recover, str) else list(recover)
    gc = [conditioning] if isinstance(conditioning, str) else list(conditioning)
    if set(ga + gc) != set(rho_ac.labels) or len(ga + gc) != len(rho_ac.labels):
        raise ValueError("recover and conditioning groups must partition the state labels")
    s = permute_systems(rho_ac, ga + gc)
    a_dims = s.dims[: len(ga)]
    c_dims = s.dims[len(ga) :]
    da = math.prod(a_dims)
    dc = math.prod(c_dims)
    rho_c = np.trace(s.matrix.reshape(da, dc, da, dc), axis1=0, axis2=2)

    lam, vecs = np.linalg.eigh((rho_c + rho_c.conj().T) / 2)
    lam = np.clip(lam, 0.0, None)
    top = float(lam[-1]) if len(lam) else 0.0
    keep = lam > 1e-10 * max(top, 1e-300)
    inv_sqrt_c = (vecs[:, keep] * lam[keep] ** -0.5) @ vecs[:, keep].conj().T
    proj_c = vecs[:, keep] @ vecs[:, keep].conj().T

    lam2, vecs2 = np.linalg.eigh(s.matrix)
    lam2 = np.clip(lam2, 0.0, None)
    sqrt_ac = (vecs2 * np.sqrt(lam2)) @ vecs2.conj().T

    j = np.zeros((dc * da * dc, dc * da * dc), dtype=complex)
    eye_a = np.eye(da)
    for i in range(dc):
        for k in range(dc):
            unit = np.zeros((dc, dc), dtype=complex)
            unit[i, k] = 1.0
            mid = inv_sqrt_c @ unit @ inv_sqrt_c
            block = sqrt_ac @ np.kron(eye_a, mid) @ sqrt_ac
            j[i * da * dc : (i + 1) * da * dc, k * da * dc : (k + 1) * da * dc] = block
    j += np.kron((np.eye(dc) - proj_c).conj(), s.matrix)
    return QuantumChannel(c_dims, tuple(a_dims) + tuple(c_dims), j)


def isometry_inverse_channel(v: Isometry, tau) -> QuantumChannel:
    """channel undoing an isometry: w |-> V^dag w V + Tr{(I - V V^dag) w} tau."""
    tm = _as_matrix(tau)
    d_in = v.matrix.shape[1]
    d_big = v.matrix.shape[0]
    if tm.shape != (d_in, d_in):
        raise ValueError(f"tau shape {tm.shape} does not match isometry input dim {d_in}")
    proj = v.matrix @ v.matrix.conj().T
    j = np.zeros((d_big * d_in, d_big * d_in), dtype=complex)
    for i in range(d_big):
        for k in range(d_big):
            unit = np.zeros((d_big, d_big), dtype=complex)
            unit[i, k] = 1.0
            block = v.matrix.conj().T @ unit @ v.matrix
            block = block + np.trace((np.eye(d_big) - proj) @ unit) * tm
            j[i * d_in : (i + 1) * d_in, k * d_in : (k + 1) * d_in] = block
    return QuantumChannel(v.out_dims, v.in_dims, j)


def measurement_channel(p: Povm) -> QuantumChannel:
    """map a state to the diagonal of outcome probabilities."""
    n = p.outcomes
    j = np.zeros((p.dim * n, p.dim * n), dtype=complex)
    for x, e in enumerate(p.effects):
        unit = np.zeros((n, n), dtype=complex)
        unit[x, x] = 1.0
        j += np.kron(e.T, unit)
    return QuantumChannel((p.dim,), (n,), j)


def _rank_one_refinement(p: Povm, cutoff: float = 1e-12) -> list[list[np.ndarray]]:
    """split each effect into rank-one pieces with deterministic phases."""
    out = []
    for e in p.effects:
        lam, vecs = np.linalg.eigh((e + e.conj().T) / 2)
        pieces = []
        for i in range(len(lam) - 1, -1, -1):
            if lam[i] <= cutoff:
                break
            v = vecs[:, i].copy()
            piv = int(np.argmax(np.abs(v)))
            ph = v[piv] / abs(v[piv])
            v = v * ph.conjugate()
            pieces.append(v * math.sqrt(lam[i]))
        out.append(pieces)
    return out


def measurement_isometry(p: Povm) -> Isometry:
    """isometric extension A -> X (x) E of the measurement channel.

    E carries one basis state per rank-one refinement vector; tracing out E
    from the induced channel reproduces measurement_channel(p).
    """
    refinement = _rank_one_refinement(p)
    n_x = p.outcomes
    n_e = sum(len(r) for r in refinement)
    if n_e == 0:
        raise ValueError("povm has no nonzero effect")
    v = np.zeros((n_x * n_e, p.dim), dtype=complex)
    e_index = 0
    for x, pieces in enumerate(refinement):
        for phi in pieces:
            row = x * n_e + e_index
            v[row, :] = phi.conj()
            e_index += 1
    return Isometry(v, (p.dim,), (n_x, n_e))


def eb_channel(p: Povm, preparations: Sequence) -> QuantumChannel:
    """measure-and-prepare channel with Choi sum_x (effect_x)^T (x) sigma_x."""
    if len(preparations) != p.outcomes:
        raise ValueError(f"{p.outcomes} effects but {len(preparations)} preparations")
    preps = [_as_matrix(q) for q in preparations]
    d_out = preps[0].shape[0]
    for k, q in enumerate(preps):
        if q.shape != (d_out, d_out):
            raise ValueError(f"preparation {k} has shape {q.shape}, expected {(d_out, d_out)}")
    j = np.zeros((p.dim * d_out, p.dim * d_out), dtype=complex)
    for e, q in zip(p.effects, preps):
        j += np.kron(e.T, q)
    out_dims = preparations[0].dims if isinstance(preparations[0], MultipartiteState) else (d_out,)
    return QuantumChannel((p.dim,), out_dims, j)


def dephasing_channel(dim: int, basis: np.ndarray | None = None) -> QuantumChannel:
    """pinching onto an orthonormal basis (columns of basis; default computational)."""
    if basis is None:
        basis = np.eye(dim, dtype=complex)
    b = np.asarray(basis, dtype=complex)
    if b.shape != (dim, dim):
        raise ValueError(f"basis shape {b.shape} does not match dim {dim}")
    if float(np.max(np.abs(b.conj().T @ b - np.eye(dim)))) > ISOMETRY_TOL:
        raise ValueError("basis columns not orthonormal")
    kraus = [np.outer(b[:, i], b[:, i].conj()) for i in range(dim)]
    return kraus_to_choi(kraus)


def private_state(
    d: int,
    shield_dims: Sequence[int],
    twisting: Sequence[np.ndarray],
    sigma_shield: MultipartiteState,
    labels: Sequence[str] = ("A", "B", "Ap", "Bp"),
) -> MultipartiteState:
    """twisted maximally entangled state gamma on key systems A, B and shields.

    gamma = U (Phi_AB (x) sigma) U^dag with the controlled twist
    U = sum_i |i><i|_A (x) I_B (x) V_i acting on the shield pair.
    """
    shield_dims = _as_dims(shield_dims)
    if len(shield_dims) != 2:
        raise ValueError("expected two shield dimensions")
    if len(twisting) != d:
        raise ValueError(f"need {d} twisting unitaries, got {len(twisting)}")
    ds = math.prod(shield_dims)
    if sigma_shield.dims != shield_dims:
        raise ValueError(f"shield state dims {sigma_shield.dims} do not match {shield_dims}")
    la, lb, lap, lbp = labels
    for v in twisting:
        v = np.asarray(v)
        if v.shape != (ds, ds) or float(np.max(np.abs(v.conj().T @ v - np.eye(ds)))) > ISOMETRY_TOL:
            raise ValueError("each twisting operator must be unitary on the shield space")
    phi = max_entangled(d, labels=(la, lb)).to_density()
    sig = MultipartiteState(shield_dims, (lap, lbp), sigma_shield.matrix)
    full = tensor(phi, sig)
    u = np.zeros((d * d * ds, d * d * ds), dtype=complex)
    for i in range(d):
        ket = np.zeros((d, d), dtype=complex)
        ket[i, i] = 1.0
        u += np.kron(np.kron(ket, np.eye(d)), np.asarray(twisting[i], dtype=complex))
    mat = u @ full.matrix @ u.conj().T
    return MultipartiteState((d, d) + shield_dims, (la, lb, lap, lbp), mat)


def stinespring(ch: QuantumChannel) -> Isometry:
    """isometric extension in -> out (x) E with E sized by the Choi rank."""
    kraus = choi_to_kraus(ch)
    r = len(kraus)
    v = np.zeros((ch.d_out * r, ch.d_in), dtype=complex)
    for k, kmat in enumerate(kraus):
        for o in range(ch.d_out):
            v[o * r + k, :] = kmat[o, :]
    return Isometry(v, ch.in_dims, tuple(ch.out_dims) + (r,))
