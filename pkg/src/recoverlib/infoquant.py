"""Scalar information quantities: fidelities, distances, entropies, and the
Renyi divergences and conditional mutual informations built from them.

All entropic values are base-2 (bits).  Infinite divergences are carried as
an explicit flag on the returned Quantity, never as a bare float sentinel.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from recoverlib.qcore import (
    EIG_CUTOFF,
    MultipartiteState,
    digest_of,
    partial_trace,
    permutation_matrix,
    permute_systems,
)

PSD_INPUT_TOL = 1e-9


class Quantity(float):
    """float tagged with its quantity kind and a digest of its operands.

    The `infinite` flag marks support-violation divergences; such values
    compare as math.inf but downstream code should branch on the flag.
    """

    def __new__(cls, value: float, kind: str, digest: str = "", infinite: bool = False, note: str | None = None):
        obj = super().__new__(cls, math.inf if infinite else float(value))
        obj.kind = kind
        obj.digest = digest
        obj.infinite = infinite
        obj.note = note
        return obj


def _mat(x) -> np.ndarray:
    if isinstance(x, MultipartiteState):
        return x.matrix
    if isinstance(x, np.ndarray):
        return np.asarray(x, dtype=complex)
    raise TypeError(f"expected a state or matrix, got {type(x).__name__}")


def _check_psd(m: np.ndarray, name: str) -> np.ndarray:
    m = (m + m.conj().T) / 2
    lo = float(np.linalg.eigvalsh(m)[0])
    if lo < -PSD_INPUT_TOL:
        raise ValueError(f"{name} not positive semidefinite: min eigenvalue {lo:.3e}")
    return m

def _eig_psd(m: np.ndarray):
    lam, v = np.linalg.eigh(m)
    return np.clip(lam, 0.0, None), v


def _mpow(m: np.ndarray, p: float, cutoff: float = EIG_CUTOFF):
    """pseudo-power of a PSD matrix: eigenvalues at or below cutoff map to 0.

    Returns (matrix, trimmed) where trimmed reports whether the cutoff
    removed any direction (relevant for negative powers on rank-deficient
    inputs).
    """
    lam, v = _eig_psd(m)
    keep = lam > cutoff
    trimmed = bool(np.any(~keep))
    out = np.zeros_like(m)
    if np.any(keep):
        out = (v[:, keep] * lam[keep] ** p) @ v[:, keep].conj().T
    return out, trimmed


def _support_projector(m: np.ndarray, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    lam, v = _eig_psd(m)
    keep = lam > cutoff
    return v[:, keep] @ v[:, keep].conj().T


def _schatten_quasi(x: np.ndarray, alpha: float) -> float:
    """(sum of singular values**alpha)**(1/alpha), valid for any alpha > 0."""
    sv = np.linalg.svd(x, compute_uv=False)
    return float(np.sum(sv**alpha) ** (1.0 / alpha))


def root_fidelity(p, q) -> Quantity:
    """trace norm of sqrt(P) sqrt(Q), the root fidelity."""
    pm = _check_psd(_mat(p), "first argument")
    qm = _check_psd(_mat(q), "second argument")
    sp, _ = _mpow(pm, 0.5, cutoff=0.0)
    sq, _ = _mpow(qm, 0.5, cutoff=0.0)
    sv = np.linalg.svd(sp @ sq, compute_uv=False)
    val = float(np.sum(sv))
    if abs(np.trace(pm).real - 1) < 1e-6 and abs(np.trace(qm).real - 1) < 1e-6:
        val = min(max(val, 0.0), 1.0)
    return Quantity(val, "root-fidelity", digest_of(pm, qm))


def fidelity(p, q) -> Quantity:
    """squared trace norm of sqrt(P) sqrt(Q); in [0, 1] for states."""
    rf = root_fidelity(p, q)
    return Quantity(rf * rf, "fidelity", rf.digest)


def trace_distance(rho, sigma) -> Quantity:
    """trace norm of the difference; in [0, 2] for states."""
    d = _mat(rho) - _mat(sigma)
    sv = np.linalg.svd((d + d.conj().T) / 2, compute_uv=False)
    return Quantity(float(np.sum(sv)), "trace-distance", digest_of(d))


def purified_distance(rho, sigma) -> Quantity:
    """sqrt(1 - F), the metric induced by fidelity."""
    f = fidelity(rho, sigma)
    return Quantity(math.sqrt(max(0.0, 1.0 - f)), "purified-distance", f.digest)


def von_neumann_entropy(rho) -> Quantity:
    """entropy in bits of a density matrix."""
    m = _check_psd(_mat(rho), "state")
    lam, _ = _eig_psd(m)
    lam = lam[lam > 0]
    return Quantity(float(-np.sum(lam * np.log2(lam))), "entropy", digest_of(m))


def binary_entropy(eps: float) -> Quantity:
    """h2(eps) in bits, 0 at both endpoints."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"binary entropy argument {eps} outside [0, 1]")
    val = 0.0
    for t in (eps, 1.0 - eps):
        if t > 0.0:
            val -= t * math.log2(t)
    return Quantity(val, "binary-entropy", digest_of(eps))


def _groups(s: MultipartiteState, *groups) -> list[list[str]]:
    out = []
    seen: set[str] = set()
    for g in groups:
        g = [g] if isinstance(g, str) else list(g)
        for l in g:
            if l not in s.labels:
                raise ValueError(f"unknown label {l!r}; have {s.labels}")
            if l in seen:
                raise ValueError(f"label {l!r} appears in more than one group")
            seen.add(l)
        out.append(g)
    return out


def _entropy_of(s: MultipartiteState, labels: Sequence[str]) -> float:
    if not labels:
        return 0.0
    return float(von_neumann_entropy(partial_trace(s, labels)))


def cqmi(s: MultipartiteState, a, b, c=()) -> Quantity:
    """conditional mutual information I(A;B|C) = H(AC)+H(BC)-H(C)-H(ABC) in bits.

    The conditioning group may be empty, giving the mutual information.
    Subsystems outside the three groups are traced out first.
    """
    ga, gb, gc = _groups(s, a, b, c)
    if not ga or not gb:
        raise ValueError("A and B groups must be nonempty")
    used = ga + gb + gc
    if set(used) != set(s.labels):
        s = partial_trace(s, used)
    val = (
        _entropy_of(s, ga + gc)
        + _entropy_of(s, gb + gc)
        - _entropy_of(s, gc)
        - _entropy_of(s, used)
    )
    return Quantity(val, "cqmi", digest_of(s.matrix, tuple(ga), tuple(gb), tuple(gc)))


def _check_alpha(alpha: float, allow_zero: bool) -> float:
    alpha = float(alpha)
    lo_ok = alpha >= 0.0 if allow_zero else alpha > 0.0
    if not lo_ok or alpha == 1.0:
        rng = "[0,1) or (1,inf)" if allow_zero else "(0,1) or (1,inf)"
        raise ValueError(f"alpha must lie in {rng}, got {alpha}")
    return alpha


def _support_violated(rho_m: np.ndarray, sigma_m: np.ndarray) -> bool:
    proj = _support_projector(sigma_m)
    leak = np.trace((np.eye(len(proj)) - proj) @ rho_m).real
    return leak > 1e-10


def renyi_relative_entropy(rho, sigma, alpha: float) -> Quantity:
    """Renyi relative entropy log2 Tr[rho^a sigma^(1-a)] / (a-1) in bits.

    sigma may be any PSD operator.  For alpha > 1 a support violation gives
    a flagged infinite value.
    """
    alpha = _check_alpha(alpha, allow_zero=True)
    rm = _check_psd(_mat(rho), "rho")
    sm = _check_psd(_mat(sigma), "sigma")
    dg = digest_of(rm, sm, alpha)
    if alpha > 1.0 and _support_violated(rm, sm):
        return Quantity(0.0, "renyi-relative-entropy", dg, infinite=True)
    ra, _ = _mpow(rm, alpha)
    sa, _ = _mpow(sm, 1.0 - alpha)
    t = float(np.trace(ra @ sa).real)
    if t <= 1e-300:
        return Quantity(0.0, "renyi-relative-entropy", dg, infinite=True)
    return Quantity(math.log2(t) / (alpha - 1.0), "renyi-relative-entropy", dg)


def sandwiched_renyi(rho, sigma, alpha: float) -> Quantity:
    """sandwiched Renyi relative entropy via the 2-alpha norm formula, in bits."""
    alpha = _check_alpha(alpha, allow_zero=True)
    rm = _check_psd(_mat(rho), "rho")
    sm = _check_psd(_mat(sigma), "sigma")
    dg = digest_of(rm, sm, alpha)
    if alpha > 1.0 and _support_violated(rm, sm):
        return Quantity(0.0, "sandwiched-renyi", dg, infinite=True)
    sp, _ = _mpow(sm, (1.0 - alpha) / (2.0 * alpha))
    rp, _ = _mpow(rm, 0.5, cutoff=0.0)
    sv = np.linalg.svd(sp @ rp, compute_uv=False)
    t = float(np.sum(sv ** (2.0 * alpha)))
    if t <= 1e-300:
        return Quantity(0.0, "sandwiched-renyi", dg, infinite=True)
    val = (2.0 * alpha / (alpha - 1.0)) * (math.log2(t) / (2.0 * alpha))
    return Quantity(val, "sandwiched-renyi", dg)


def relative_entropy(rho, sigma) -> Quantity:
    """quantum relative entropy Tr rho (log2 rho - log2 sigma) in bits."""
    rm = _check_psd(_mat(rho), "rho")
    sm = _check_psd(_mat(sigma), "sigma")
    dg = digest_of(rm, sm)
    if _support_violated(rm, sm):
        return Quantity(0.0, "relative-entropy", dg, infinite=True)
    lam_r, v_r = _eig_psd(rm)
    lam_s, v_s = _eig_psd(sm)
    term1 = float(np.sum(lam_r[lam_r > 0] * np.log2(lam_r[lam_r > 0])))
    keep = lam_s > EIG_CUTOFF
    logs = (v_s[:, keep] * np.log2(lam_s[keep])) @ v_s[:, keep].conj().T
    term2 = float(np.trace(rm @ logs).real)
    return Quantity(term1 - term2, "relative-entropy", dg)


def conditional_renyi_entropy(rho_ab: MultipartiteState, a, b, alpha: float) -> Quantity:
    """H_alpha(A|B) = -D_alpha(rho_AB || I_A (x) rho_B) in bits."""
    ga, gb = _groups(rho_ab, a, b)
    if set(ga + gb) != set(rho_ab.labels):
        rho_ab = partial_trace(rho_ab, ga + gb)
    s = permute_systems(rho_ab, ga + gb)
    da = math.prod(s.dims[: len(ga)])
    sigma_b = partial_trace(s, gb).matrix
    sigma = np.kron(np.eye(da), sigma_b)
    d = renyi_relative_entropy(s.matrix, sigma, alpha)
    if d.infinite:
        raise ValueError("state support escapes I (x) rho_B; conditional entropy undefined")
    return Quantity(-float(d), "conditional-renyi-entropy", d.digest)


def _embed(op: np.ndarray, own_pos: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """place an operator acting on the axes own_pos into the full space."""
    rest = [i for i in range(len(dims)) if i not in own_pos]
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    big = np.kron(op, np.eye(d_rest))
    order = list(own_pos) + rest
    inv = np.argsort(order)
    p = permutation_matrix([dims[i] for i in order], inv)
    return p @ big @ p.T


def renyi_cqmi(s: MultipartiteState, a, b, c, alpha: float) -> Quantity:
    """Renyi conditional mutual information via the 2-alpha norm formula, bits.

    Rank-deficient marginals are handled by pseudo-inverse powers with the
    package eigenvalue cutoff; when that happens the returned Quantity
    carries a diagnostic note.
    """
    alpha = _check_alpha(alpha, allow_zero=False)
    ga, gb, gc = _groups(s, a, b, c)
    if not ga or not gb:
        raise ValueError("A and B groups must be nonempty")
    used = ga + gb + gc
    if set(used) != set(s.labels):
        s = partial_trace(s, used)
    s = permute_systems(s, ga + gb + gc)
    dims = s.dims
    na, nb = len(ga), len(gb)
    pos_a = list(range(na))
    pos_b = list(range(na, na + nb))
    pos_c = list(range(na + nb, len(dims)))
    rho = s.matrix
    rho_ac = partial_trace(s, ga + gc).matrix
    rho_bc = partial_trace(s, gb + gc).matrix
    rho_c = partial_trace(s, gc).matrix if gc else np.eye(1)

    e_ac = (1.0 - alpha) / (2.0 * alpha)
    e_c = (alpha - 1.0) / (2.0 * alpha)
    p_ac, t1 = _mpow(rho_ac, e_ac)
    p_c, t2 = _mpow(rho_c, e_c)
    p_bc, t3 = _mpow(rho_bc, e_ac)
    sq, _ = _mpow(rho, 0.5, cutoff=0.0)
    m = (
        sq
        @ _embed(p_ac, pos_a + pos_c, dims)
        @ _embed(p_c, pos_c, dims)
        @ _embed(p_bc, pos_b + pos_c, dims)
    )
    sv = np.linalg.svd(m, compute_uv=False)
    t = float(np.sum(sv ** (2.0 * alpha)))
    note = "pseudo-inverse applied to rank-deficient marginal" if (t1 or t2 or t3) else None
    dg = digest_of(s.matrix, tuple(ga), tuple(gb), tuple(gc), alpha)
    if t <= 1e-300:
        return Quantity(0.0, "renyi-cqmi", dg, infinite=True, note=note)
    return Quantity(math.log2(t) / (alpha - 1.0), "renyi-cqmi", dg, note=note)
