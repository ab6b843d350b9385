"""Solvers for recoverability optimizations: fidelity of recovery and its
surprisal, the product-conditioning fidelity, and the multipartite variant.

The convex backend maximizes root fidelity through the block program

    sqrt F(P, Q) = max { Re Tr[X V] : [[P_r, X], [X*, Q]] >= 0 }

where P = V P_r V* keeps only the positive spectrum of the target (facial
reduction) and Q is an affine image of the decision variables (recovery
Choi matrices, states, or measurement effects).  Every solve is certified
from scratch: the primal is projected to exact feasibility and re-evaluated
spectrally, and the dual multipliers are repaired into a strictly feasible
dual point, giving a true two-sided bracket independent of solver claims.

See-saw backends run Frank-Wolfe ascent on the same objective: the
supergradient of sigma -> sqrt F(rho, sigma) is linearized and the vertex
subproblem (a linear program over the feasible set) is solved in closed
form for state variables and by a small cached semidefinite program for
channel variables.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import cvxpy as cp
import numpy as np
from scipy import sparse
from scipy.optimize import minimize_scalar

from recoverlib import channels as chn
from recoverlib.qcore import (
    MultipartiteState,
    Rng,
    partial_trace,
    permutation_matrix,
    permute_systems,
    random_unitary,
)

DEFAULT_GAP_TOL = 1e-6
SEESAW_TOL = 1e-7
SEESAW_CAP = 500
SOLVER_CAP = 200
_CLARABEL_OPTS = dict(tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-10, max_iter=SOLVER_CAP)
_OK_STATUS = ("optimal", "optimal_inaccurate")


class SolverConvergenceError(RuntimeError):
    """raised when a solve cannot be certified; carries the residuals."""

    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


@dataclass(frozen=True)
class OptResult:
    """outcome of a recoverability optimization."""

    value: float
    kind: str
    bound: str
    certificate: object | None
    iterations: int
    residuals: dict
    backend: str

    def __post_init__(self):
        if self.kind not in ("fidelity", "surprisal"):
            raise ValueError(f"unknown result kind {self.kind!r}")
        if self.bound not in ("exact-within-tol", "lower-bound", "upper-bound"):
            raise ValueError(f"unknown bound tag {self.bound!r}")
        if self.kind == "fidelity":
            if not -1e-12 <= self.value <= 1 + 1e-7:
                raise ValueError(f"fidelity value {self.value} outside [0, 1+1e-7]")
            object.__setattr__(self, "value", float(max(self.value, 0.0)))


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def _psd_part(m: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh(_hermitize(m))
    lam = np.clip(lam, 0.0, None)
    return (v * lam) @ v.conj().T


def _pinv_sqrt(m: np.ndarray, rel_cutoff: float = 1e-12) -> np.ndarray:
    lam, v = np.linalg.eigh(_hermitize(m))
    lam = np.clip(lam, 0.0, None)
    top = float(lam[-1]) if len(lam) else 0.0
    keep = lam > rel_cutoff * max(top, 1e-300)
    if not np.any(keep):
        return np.zeros_like(m)
    return (v[:, keep] * lam[keep] ** -0.5) @ v[:, keep].conj().T


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh(_hermitize(m))
    lam = np.clip(lam, 0.0, None)
    return (v * np.sqrt(lam)) @ v.conj().T


@dataclass
class LinMap:
    """linear map between operator spaces stored as a dense or sparse matrix
    acting on C-order vectorizations."""

    matrix: object
    side_out: int
    side_in: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(x, dtype=complex).reshape(-1)).reshape(self.side_out, self.side_out)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return (self.matrix.conj().T @ np.asarray(y, dtype=complex).reshape(-1)).reshape(self.side_in, self.side_in)

    def cvx(self, var):
        flat = cp.reshape(var, (self.side_in * self.side_in,), order="C")
        return cp.reshape(self.matrix @ flat, (self.side_out, self.side_out), order="C")


# dense probe matrices above this entry count are stored sparse; the big
# recovery maps touch only a vanishing fraction of entries and their dense
# form exhausts memory inside the solver's canonicalization
_PROBE_DENSE_CAP = 1 << 22


def probe_map(fn: Callable[[np.ndarray], np.ndarray], side_in: int, side_out: int) -> LinMap:
    """materialize a linear map by evaluating it on all matrix units."""
    n_in, n_out = side_in * side_in, side_out * side_out
    unit = np.zeros((side_in, side_in), dtype=complex)
    if n_out * n_in > _PROBE_DENSE_CAP:
        rows, cols, vals = [], [], []
        for k in range(n_in):
            i, j = divmod(k, side_in)
            unit[i, j] = 1.0
            col = fn(unit).reshape(-1)
            unit[i, j] = 0.0
            nz = np.nonzero(col)[0]
            rows.append(nz)
            cols.append(np.full(len(nz), k, dtype=np.int64))
            vals.append(col[nz])
        m = sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_out, n_in),
            dtype=complex,
        )
        return LinMap(m, side_out, side_in)
    m = np.zeros((n_out, n_in), dtype=complex)
    for i in range(side_in):
        for j in range(side_in):
            unit[i, j] = 1.0
            m[:, i * side_in + j] = fn(unit).reshape(-1)
            unit[i, j] = 0.0
    return LinMap(m, side_out, side_in)


@dataclass
class VarSpec:
    """one decision variable of a fidelity program.

    hook is the trace-like equality that makes dual repair possible:
      ("tp", d_in, d_out)      partial trace over the output block = I
      ("trace",)               unit trace
      ("group", key, dim)      the variables sharing key sum to I
    ppt optionally adds a positive-partial-transpose constraint given as
    (d1, d2); ppt_safe provides a strictly feasible point used to restore
    the constraint after projection.
    """

    name: str
    side: int
    lmap: LinMap | None
    hook: tuple
    ppt: tuple | None = None
    ppt_safe: tuple | None = None


def _ptrace_out(m: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    return np.einsum("ioko->ik", m.reshape(d_in, d_out, d_in, d_out))


def _partial_transpose(m: np.ndarray, d1: int, d2: int) -> np.ndarray:
    return m.reshape(d1, d2, d1, d2).transpose(0, 3, 2, 1).reshape(d1 * d2, d1 * d2)


def _repair_ppt_dual(base: np.ndarray, d1: int, d2: int) -> np.ndarray | None:
    """re-optimize the semidefinite-cone multiplier against fixed equality duals."""
    n = d1 * d2
    yv = cp.Variable((n, n), hermitian=True)
    c = cp.Variable(nonneg=True)
    cons = [yv >> 0, base - cp.partial_transpose(yv, (d1, d2), 1) + c * np.eye(n) >> 0]
    try:
        _solve_cvx(cp.Problem(cp.Minimize(c), cons))
    except SolverConvergenceError:
        return None
    if yv.value is None:
        return None
    return _psd_part(np.asarray(yv.value, dtype=complex))


def _project_feasible(value: np.ndarray, spec: VarSpec) -> np.ndarray:
    """map a near-feasible solver point to an exactly feasible one."""
    v = _psd_part(value)
    if spec.hook[0] == "tp":
        _, d_in, d_out = spec.hook
        t = _hermitize(_ptrace_out(v, d_in, d_out))
        lam, w = np.linalg.eigh(t)
        lam = np.clip(lam, 1e-14, None)
        fix = (w * lam**-0.5) @ w.conj().T
        big = np.kron(fix, np.eye(d_out))
        v = big @ v @ big.conj().T
        v = _hermitize(v)
    elif spec.hook[0] == "trace":
        tr = float(np.trace(v).real)
        v = v / tr if tr > 1e-14 else np.eye(spec.side) / spec.side
    if spec.ppt is not None:
        d1, d2 = spec.ppt
        viol = -float(np.linalg.eigvalsh(_hermitize(_partial_transpose(v, d1, d2)))[0])
        if viol > 0 and spec.ppt_safe is not None:
            safe, margin = spec.ppt_safe
            t = min(1.0, viol / (viol + margin) + 1e-12)
            v = (1 - t) * v + t * safe
    return v


def project_to_channel(j: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """nearest-in-spirit exactly trace-preserving PSD Choi matrix."""
    return _project_feasible(np.asarray(j, dtype=complex), VarSpec("J", d_in * d_out, None, ("tp", d_in, d_out)))


def _project_group(values: dict[str, np.ndarray], specs: list[VarSpec]) -> None:
    """jointly renormalize variables whose effects must sum to the identity."""
    groups: dict = {}
    for sp in specs:
        if sp.hook[0] == "group":
            groups.setdefault(sp.hook[1], []).append(sp)
    for key, members in groups.items():
        total = sum(values[sp.name] for sp in members)
        lam, w = np.linalg.eigh(_hermitize(total))
        lam = np.clip(lam, 1e-14, None)
        fix = (w * lam**-0.5) @ w.conj().T
        for sp in members:
            values[sp.name] = _hermitize(fix @ values[sp.name] @ fix.conj().T)


_tls = threading.local()


def _solve_cvx(problem: cp.Problem) -> str:
    with warnings.catch_warnings():
        # accuracy is certified from scratch after every solve, so the
        # solver's own inaccuracy warning carries no information here
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        problem.solve(solver=cp.CLARABEL, **_CLARABEL_OPTS)
    if problem.status not in _OK_STATUS:
        raise SolverConvergenceError(
            f"interior-point solve failed with status {problem.status}",
            {"solver_status": problem.status},
        )
    return problem.status


def _vertex_channel(grad: np.ndarray, d_in: int, d_out: int, ppt: bool) -> np.ndarray:
    """maximize <grad, J> over Choi matrices of channels (optionally PPT)."""
    cache = getattr(_tls, "vertex_cache", None)
    if cache is None:
        cache = {}
        _tls.vertex_cache = cache
    key = (d_in, d_out, ppt)
    if key not in cache:
        n = d_in * d_out
        par = cp.Parameter((n, n), hermitian=True)
        j = cp.Variable((n, n), hermitian=True)
        cons = [j >> 0, cp.partial_trace(j, (d_in, d_out), 1) == np.eye(d_in)]
        if ppt:
            cons.append(cp.partial_transpose(j, (d_in, d_out), 1) >> 0)
        prob = cp.Problem(cp.Maximize(cp.real(cp.trace(par @ j))), cons)
        cache[key] = (prob, par, j)
    prob, par, j = cache[key]
    par.value = _hermitize(grad)
    _solve_cvx(prob)
    return np.asarray(j.value)


def _vertex_for(grad: np.ndarray, spec: VarSpec) -> np.ndarray:
    if spec.hook[0] == "tp":
        _, d_in, d_out = spec.hook
        raw = _vertex_channel(grad, d_in, d_out, spec.ppt is not None)
        return _project_feasible(raw, spec)
    if spec.hook[0] == "trace":
        lam, w = np.linalg.eigh(_hermitize(grad))
        v = w[:, -1]
        return np.outer(v, v.conj())
    raise SolverConvergenceError(f"no vertex oracle for hook {spec.hook[0]!r}")


def _grad_root_fidelity(rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """supergradient of sigma -> sqrt F(rho, sigma) on sigma's support."""
    sh = _sqrt_psd(sigma)
    mid = _sqrt_psd(sh @ rho @ sh)
    pis = _pinv_sqrt(sigma)
    return _hermitize(0.5 * pis @ mid @ pis)


def _fidelity_value(rho: np.ndarray, sigma: np.ndarray) -> float:
    sh = _sqrt_psd(rho)
    sv = np.linalg.svd(sh @ _sqrt_psd(sigma), compute_uv=False)
    val = float(np.sum(sv)) ** 2
    return min(val, 1.0) if abs(np.trace(sigma).real - 1) < 1e-6 else val


def fw_ascend(
    rho: np.ndarray,
    q0: np.ndarray | None,
    specs: list[VarSpec],
    start: dict[str, np.ndarray],
    tol: float,
    max_iter: int,
    error_at_cap: bool,
) -> tuple[dict[str, np.ndarray], float, int]:
    """Frank-Wolfe ascent of F(rho, Q(vars)) over the product feasible set.

    Monotone by exact line search; stops when the relative improvement of
    one full step falls below tol.
    """
    values = {k: np.array(v, dtype=complex) for k, v in start.items()}
    base = q0 if q0 is not None else 0.0

    def q_of(vals):
        out = np.zeros((rho.shape[0], rho.shape[0]), dtype=complex) + base
        for sp in specs:
            out += sp.lmap.apply(vals[sp.name])
        return _hermitize(out)

    sigma = q_of(values)
    f_cur = _fidelity_value(rho, sigma)
    it = 0
    for it in range(1, max_iter + 1):
        grad_sigma = _grad_root_fidelity(rho, sigma)
        vertex = {}
        for sp in specs:
            gv = _hermitize(sp.lmap.adjoint(grad_sigma))
            vertex[sp.name] = _vertex_for(gv, sp)
        sigma_vtx = q_of(vertex)
        delta = sigma_vtx - sigma

        def neg(t):
            return -_fidelity_value(rho, _psd_part(sigma + t * delta))

        res = minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12, "maxiter": 80})
        t_star = float(res.x)
        f_new = -float(res.fun)
        if f_new <= f_cur + tol * max(f_cur, 1e-12):
            if f_new > f_cur:
                for sp in specs:
                    values[sp.name] = (1 - t_star) * values[sp.name] + t_star * vertex[sp.name]
                f_cur = f_new
            return values, f_cur, it
        for sp in specs:
            values[sp.name] = (1 - t_star) * values[sp.name] + t_star * vertex[sp.name]
        sigma = q_of(values)
        f_cur = f_new
    if error_at_cap:
        raise SolverConvergenceError(
            f"see-saw failed to converge within {max_iter} iterations",
            {"last_value": f_cur, "iterations": max_iter},
        )
    return values, f_cur, it


class FidelityProgram:
    """the certified block program max F(rho, q0 + sum_v L_v(v))."""

    def __init__(self, rho: np.ndarray, specs: list[VarSpec], q0: np.ndarray | None = None):
        self.rho = _hermitize(np.asarray(rho, dtype=complex))
        self.specs = list(specs)
        self.q0 = None if q0 is None else np.asarray(q0, dtype=complex)
        d = self.rho.shape[0]
        lam, vecs = np.linalg.eigh(self.rho)
        keep = lam > 1e-12
        if not np.any(keep):
            raise ValueError("target state has no positive spectrum")
        self.trim = float(np.sum(np.clip(lam[~keep], 0.0, None)))
        self.p_r = np.diag(lam[keep]).astype(complex)
        self.v = vecs[:, keep]
        self.r = int(np.sum(keep))
        self.d = d

    def _build(self):
        r, d = self.r, self.d
        cvars = {sp.name: cp.Variable((sp.side, sp.side), hermitian=True) for sp in self.specs}
        b = cp.Variable((r + d, r + d), hermitian=True)
        q_expr = sum(sp.lmap.cvx(cvars[sp.name]) for sp in self.specs)
        if self.q0 is not None:
            q_expr = q_expr + cp.Constant(self.q0)
        con_p = b[:r, :r] == self.p_r
        con_q = b[r:, r:] == q_expr
        cons = [b >> 0, con_p, con_q]
        hook_cons: dict = {}
        group_cons: dict = {}
        ppt_cons: dict = {}
        for sp in self.specs:
            v = cvars[sp.name]
            cons.append(v >> 0)
            if sp.hook[0] == "tp":
                _, d_in, d_out = sp.hook
                c = cp.partial_trace(v, (d_in, d_out), 1) == np.eye(d_in)
                hook_cons[sp.name] = c
                cons.append(c)
            elif sp.hook[0] == "trace":
                c = cp.trace(v) == 1
                hook_cons[sp.name] = c
                cons.append(c)
            elif sp.hook[0] == "group":
                key = sp.hook[1]
                group_cons.setdefault(key, []).append(sp.name)
            else:
                raise ValueError(f"unknown hook {sp.hook[0]!r}")
            if sp.ppt is not None:
                d1, d2 = sp.ppt
                c = cp.partial_transpose(v, (d1, d2), 1) >> 0
                ppt_cons[sp.name] = c
                cons.append(c)
        group_eqs: dict = {}
        for key, names in group_cons.items():
            dim = next(sp.side for sp in self.specs if sp.name == names[0])
            c = sum(cvars[n] for n in names) == np.eye(dim)
            group_eqs[key] = c
            cons.append(c)
        obj = cp.Maximize(cp.real(cp.trace(b[:r, r:] @ self.v)))
        prob = cp.Problem(obj, cons)
        return prob, cvars, con_p, con_q, hook_cons, group_eqs, ppt_cons

    def _dual_bound(self, con_p, con_q, hook_cons, group_eqs, ppt_cons) -> float:
        """repair the solver's multipliers into a feasible dual point."""
        om1 = _hermitize(np.atleast_2d(np.asarray(con_p.dual_value, dtype=complex)))
        om2 = _hermitize(np.atleast_2d(np.asarray(con_q.dual_value, dtype=complex)))
        hook_duals: dict = {}
        for sp in self.specs:
            if sp.hook[0] in ("tp", "trace"):
                hook_duals[sp.name] = np.asarray(hook_cons[sp.name].dual_value, dtype=complex)
        group_duals = {k: _hermitize(np.asarray(c.dual_value, dtype=complex)) for k, c in group_eqs.items()}
        ppt_ys: dict = {}
        for name, c in ppt_cons.items():
            # the solver reports the semidefinite-cone dual at half the
            # Lagrangian scale for these Hermitian programs
            ppt_ys[name] = _psd_part(2.0 * np.asarray(c.dual_value, dtype=complex))
        return self._certified_dual(om1, om2, hook_duals, group_duals, ppt_ys)

    def _certified_dual(self, om1, om2, hook_duals, group_duals, ppt_ys) -> float:
        """shift candidate multipliers into exact dual feasibility and evaluate."""
        s = np.block([[om1, -self.v.conj().T / 2], [-self.v / 2, om2]])
        lam_min = float(np.linalg.eigvalsh(_hermitize(s))[0])
        c1 = max(0.0, -lam_min) + 1e-12
        om1 = om1 + c1 * np.eye(self.r)
        om2 = om2 + c1 * np.eye(self.d)

        shifts_single: dict = {}
        shifts_group: dict = {}
        for sp in self.specs:
            w = -_hermitize(sp.lmap.adjoint(om2))
            if sp.hook[0] == "tp":
                _, d_in, d_out = sp.hook
                lam_d = _hermitize(np.atleast_2d(hook_duals[sp.name]))
                w = w + np.kron(lam_d, np.eye(d_out))
            elif sp.hook[0] == "trace":
                lam_d = complex(np.asarray(hook_duals[sp.name]).reshape(-1)[0])
                w = w + lam_d.real * np.eye(sp.side)
            else:
                w = w + group_duals[sp.hook[1]]
            if sp.ppt is not None:
                d1, d2 = sp.ppt
                y = ppt_ys[sp.name]
                base = _hermitize(w)
                w = base - _partial_transpose(y, d1, d2)
                if float(np.linalg.eigvalsh(_hermitize(w))[0]) < -1e-9:
                    y2 = _repair_ppt_dual(base, d1, d2)
                    if y2 is not None:
                        w2 = base - _partial_transpose(y2, d1, d2)
                        if np.linalg.eigvalsh(_hermitize(w2))[0] > np.linalg.eigvalsh(_hermitize(w))[0]:
                            w = w2
            need = max(0.0, -float(np.linalg.eigvalsh(_hermitize(w))[0])) + 1e-12
            if sp.hook[0] == "group":
                key = sp.hook[1]
                shifts_group[key] = max(shifts_group.get(key, 0.0), need)
            else:
                shifts_single[sp.name] = need

        g = float(np.trace(om1 @ self.p_r).real)
        if self.q0 is not None:
            g += float(np.trace(om2 @ self.q0).real)
        for sp in self.specs:
            if sp.hook[0] == "tp":
                _, d_in, _ = sp.hook
                lam_d = _hermitize(np.atleast_2d(hook_duals[sp.name]))
                g += float(np.trace(lam_d).real) + shifts_single[sp.name] * d_in
            elif sp.hook[0] == "trace":
                lam_d = complex(np.asarray(hook_duals[sp.name]).reshape(-1)[0])
                g += lam_d.real + shifts_single[sp.name]
        for key, c in shifts_group.items():
            dim = next(sp.side for sp in self.specs if sp.hook[0] == "group" and sp.hook[1] == key)
            g += float(np.trace(group_duals[key]).real) + c * dim
        return g

    def _dual_resolve(self) -> float | None:
        """solve the explicit dual program and certify its multipliers.

        The multipliers extracted from the primal solve can be several digits
        looser than the primal when the interior-point run stops early; a
        direct solve of the dual recovers those digits.  Returns None when the
        dual solve itself fails.
        """
        r, d = self.r, self.d
        om1 = cp.Variable((r, r), hermitian=True)
        om2 = cp.Variable((d, d), hermitian=True)
        cons = [cp.bmat([[om1, -self.v.conj().T / 2], [-self.v / 2, om2]]) >> 0]
        obj = cp.real(cp.trace(om1 @ self.p_r))
        if self.q0 is not None:
            obj = obj + cp.real(cp.trace(om2 @ self.q0))
        hook_vars: dict = {}
        group_vars: dict = {}
        ppt_vars: dict = {}
        flat = cp.reshape(om2, (d * d,), order="C")
        for sp in self.specs:
            adj = cp.reshape(sp.lmap.matrix.conj().T @ flat, (sp.side, sp.side), order="C")
            w = -(adj + adj.H) / 2
            if sp.hook[0] == "tp":
                _, d_in, d_out = sp.hook
                lam = cp.Variable((d_in, d_in), hermitian=True)
                hook_vars[sp.name] = lam
                w = w + cp.kron(lam, np.eye(d_out))
                obj = obj + cp.real(cp.trace(lam))
            elif sp.hook[0] == "trace":
                lam = cp.Variable()
                hook_vars[sp.name] = lam
                w = w + lam * np.eye(sp.side)
                obj = obj + lam
            else:
                key = sp.hook[1]
                if key not in group_vars:
                    group_vars[key] = cp.Variable((sp.side, sp.side), hermitian=True)
                    obj = obj + cp.real(cp.trace(group_vars[key]))
                w = w + group_vars[key]
            if sp.ppt is not None:
                d1, d2 = sp.ppt
                y = cp.Variable((sp.side, sp.side), hermitian=True)
                ppt_vars[sp.name] = y
                cons.append(y >> 0)
                w = w - cp.partial_transpose(y, (d1, d2), 1)
            cons.append(w >> 0)
        try:
            _solve_cvx(cp.Problem(cp.Minimize(obj), cons))
        except SolverConvergenceError:
            return None
        if om1.value is None or om2.value is None:
            return None
        hook_duals: dict = {}
        for sp in self.specs:
            if sp.hook[0] in ("tp", "trace"):
                hook_duals[sp.name] = np.asarray(hook_vars[sp.name].value, dtype=complex)
        group_duals = {k: _hermitize(np.asarray(v.value, dtype=complex)) for k, v in group_vars.items()}
        ppt_ys = {name: _psd_part(np.asarray(v.value, dtype=complex)) for name, v in ppt_vars.items()}
        return self._certified_dual(
            _hermitize(np.asarray(om1.value, dtype=complex)),
            _hermitize(np.asarray(om2.value, dtype=complex)),
            hook_duals,
            group_duals,
            ppt_ys,
        )

    def solve(self, gap_tol: float = DEFAULT_GAP_TOL, polish_iters: int = 25) -> dict:
        prob, cvars, con_p, con_q, hook_cons, group_eqs, ppt_cons = self._build()
        status = _solve_cvx(prob)
        raw = {sp.name: np.asarray(cvars[sp.name].value, dtype=complex) for sp in self.specs}
        values = {sp.name: _project_feasible(raw[sp.name], sp) for sp in self.specs}
        _project_group(values, self.specs)

        sigma = (self.q0 if self.q0 is not None else 0.0) + sum(
            sp.lmap.apply(values[sp.name]) for sp in self.specs
        )
        f_lo = _fidelity_value(self.rho, _hermitize(sigma))
        g = self._dual_bound(con_p, con_q, hook_cons, group_eqs, ppt_cons)
        f_hi = (max(g, 0.0) + math.sqrt(max(self.trim, 0.0))) ** 2
        gap = f_hi - f_lo

        # when the repaired multipliers are the loose side, re-solve the dual
        if gap > gap_tol:
            g2 = self._dual_resolve()
            if g2 is not None:
                f_hi = min(f_hi, (max(g2, 0.0) + math.sqrt(max(self.trim, 0.0))) ** 2)
                gap = f_hi - f_lo
        # ascend from the projected point only when the bound still fails
        if gap > gap_tol and polish_iters > 0 and all(sp.hook[0] in ("tp", "trace") for sp in self.specs):
            values, f_lo, _ = fw_ascend(
                self.rho, self.q0, self.specs, values, tol=1e-10, max_iter=polish_iters, error_at_cap=False
            )
            gap = f_hi - f_lo
        iters = getattr(prob.solver_stats, "num_iters", None) or 0
        residuals = {
            "duality_gap": gap,
            "dual_bound": f_hi,
            "primal_value": f_lo,
            "solver_status": status,
        }
        if gap > gap_tol or gap < -1e-9:
            raise SolverConvergenceError(
                f"could not certify optimality: duality gap {gap:.3e} exceeds {gap_tol:.1e}",
                residuals,
            )
        return {"f_lo": f_lo, "f_hi": f_hi, "values": values, "iterations": int(iters), "residuals": residuals}


def _uhlmann_seesaw_channel(
    rho: np.ndarray,
    dims: tuple[int, int, int],
    j_start: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int]:
    """alternating ascent of F(rho, R(rho_BC)) over recovery isometries.

    Works on purifications: the overlap of a purification of the target
    with a purification of the candidate is bilinear in the environment
    unitary and the Stinespring isometry of the recovery, so each half-step
    is an exact polar/SVD maximization and the fidelity never decreases.
    """
    da, db, dc = dims
    d = da * db * dc
    lam, vecs = np.linalg.eigh(_hermitize(rho))
    keep = lam > 1e-14
    psi0 = vecs[:, keep] * np.sqrt(lam[keep])
    r_rho = psi0.shape[1]

    rho_bc = np.einsum("aiaj->ij", rho.reshape(da, db * dc, da, db * dc))
    lam_b, vecs_b = np.linalg.eigh(_hermitize(rho_bc))
    keep_b = lam_b > 1e-14
    psi_bc = vecs_b[:, keep_b] * np.sqrt(lam_b[keep_b])
    r_bc = psi_bc.shape[1]
    psi_bc3 = psi_bc.reshape(db, dc, r_bc)

    d_ac = da * dc
    d_e = dc * d_ac
    n_env = r_bc * d_e
    psi_pad = np.zeros((d, n_env), dtype=complex)
    psi_pad[:, :r_rho] = psi0
    psi_pad3 = psi_pad.conj().reshape(da, db, dc, n_env)

    lam_j, vecs_j = np.linalg.eigh(_hermitize(j_start))
    v3 = np.zeros((d_ac, d_e, dc), dtype=complex)
    slot = 0
    for i in range(len(lam_j) - 1, -1, -1):
        if lam_j[i] <= 1e-14:
            break
        v3[:, slot, :] = (vecs_j[:, i] * math.sqrt(lam_j[i])).reshape(dc, d_ac).T
        slot += 1

    def overlap_matrix(v3_cur: np.ndarray) -> np.ndarray:
        v4 = v3_cur.reshape(da, dc, d_e, dc)
        phi = np.einsum("acep,bpr->abcre", v4, psi_bc3).reshape(d, n_env)
        return phi.T @ psi_pad.conj()

    m = overlap_matrix(v3)
    sv = np.linalg.svd(m, compute_uv=False)
    f_cur = float(np.sum(sv)) ** 2
    v3_best, f_best = v3, f_cur
    it = 0
    for it in range(1, max_iter + 1):
        p, _, qh = np.linalg.svd(m)
        u = qh.conj().T @ p.conj().T
        u2 = u.reshape(n_env, r_bc, d_e)
        t = np.einsum("abcg,gre,bpr->acep", psi_pad3, u2, psi_bc3).reshape(d_ac * d_e, dc)
        k = t.conj()
        pk, _, qkh = np.linalg.svd(k, full_matrices=False)
        v_new = pk @ qkh
        v3 = v_new.reshape(d_ac, d_e, dc)
        m = overlap_matrix(v3)
        sv = np.linalg.svd(m, compute_uv=False)
        f_new = float(np.sum(sv)) ** 2
        if f_new > f_best:
            v3_best, f_best = v3, f_new
        if f_new - f_cur <= tol * max(f_cur, 1e-12):
            break
        f_cur = f_new
    else:
        raise SolverConvergenceError(
            f"see-saw failed to converge within {max_iter} iterations",
            {"last_value": f_best, "iterations": max_iter},
        )
    j = np.zeros((dc * d_ac, dc * d_ac), dtype=complex)
    for e in range(d_e):
        kr = v3_best[:, e, :]
        w = kr.T.flatten()
        j += np.outer(w, w.conj())
    return j, it


def _uhlmann_seesaw_state(
    rho: np.ndarray, da: int, db: int, sigma_b: np.ndarray, tau0: np.ndarray, tol: float, max_iter: int
) -> tuple[np.ndarray, int]:
    """alternating ascent of F(rho_AB, tau (x) sigma_B) over states tau."""
    d = da * db
    lam, vecs = np.linalg.eigh(_hermitize(rho))
    keep = lam > 1e-14
    psi0 = vecs[:, keep] * np.sqrt(lam[keep])
    r_rho = psi0.shape[1]

    lam_b, vecs_b = np.linalg.eigh(_hermitize(sigma_b))
    keep_b = lam_b > 1e-14
    phi_b = vecs_b[:, keep_b] * np.sqrt(lam_b[keep_b])
    r_b = phi_b.shape[1]

    n_env = da * r_b
    psi_pad = np.zeros((d, n_env), dtype=complex)
    psi_pad[:, :r_rho] = psi0
    psi_pad3 = psi_pad.conj().reshape(da, db, n_env)

    t_vec = _sqrt_psd(tau0).reshape(da * da)

    def overlap_matrix(t_cur: np.ndarray) -> np.ndarray:
        t2 = t_cur.reshape(da, da)
        phi = np.einsum("ar,bs->abrs", t2, phi_b).reshape(d, n_env)
        return phi.T @ psi_pad.conj()

    m = overlap_matrix(t_vec)
    f_cur = float(np.sum(np.linalg.svd(m, compute_uv=False))) ** 2
    it = 0
    for it in range(1, max_iter + 1):
        p, _, qh = np.linalg.svd(m)
        u = qh.conj().T @ p.conj().T
        u2 = u.reshape(n_env, da, r_b)
        t = np.einsum("abg,grs,bs->ar", psi_pad3, u2, phi_b).reshape(da * da)
        nrm = float(np.linalg.norm(t))
        if nrm < 1e-300:
            break
        t_vec = t.conj() / nrm
        m = overlap_matrix(t_vec)
        f_new = float(np.sum(np.linalg.svd(m, compute_uv=False))) ** 2
        if f_new - f_cur <= tol * max(f_cur, 1e-12):
            f_cur = max(f_cur, f_new)
            break
        f_cur = f_new
    else:
        raise SolverConvergenceError(
            f"see-saw failed to converge within {max_iter} iterations",
            {"last_value": f_cur, "iterations": max_iter},
        )
    t2 = t_vec.reshape(da, da)
    tau = _hermitize(t2 @ t2.conj().T)
    tau = tau / float(np.trace(tau).real)
    return tau, it


def _normalize_groups(s: MultipartiteState, *groups):
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
    if seen != set(s.labels):
        missing = set(s.labels) - seen
        raise ValueError(f"groups must partition the subsystems; missing {sorted(missing)}")
    return out


def _recovery_lmap(s_perm: MultipartiteState, na: int, nb: int) -> tuple[LinMap, np.ndarray]:
    """map from a Choi on C -> A(x)C to the candidate state on A(x)B(x)C."""
    dims = s_perm.dims
    da = math.prod(dims[:na]) if na else 1
    db = math.prod(dims[na : na + nb]) if nb else 1
    dc = math.prod(dims[na + nb :])
    labels = s_perm.labels
    bc = partial_trace(s_perm, list(labels[na : na + nb]) + list(labels[na + nb :])) if na else s_perm
    rho_bc = bc.matrix.reshape(db, dc, db, dc)
    side_j = dc * da * dc
    perm = permutation_matrix((db, da, dc), (1, 0, 2))

    def act(j: np.ndarray) -> np.ndarray:
        j4 = j.reshape(dc, da * dc, dc, da * dc)
        out = np.einsum("rksi,koip->rosp", rho_bc, j4)
        mat = out.reshape(db * da * dc, db * da * dc)
        return perm @ mat @ perm.T

    lmap = probe_map(act, side_j, da * db * dc)
    return lmap, bc.matrix


def _petz_choi(s_perm: MultipartiteState, na: int, nb: int) -> np.ndarray:
    labels = s_perm.labels
    ga = list(labels[:na])
    gc = list(labels[na + nb :])
    rho_ac = partial_trace(s_perm, ga + gc)
    return chn.petz_recovery(rho_ac, ga, gc).choi


def _choi_channel(j: np.ndarray, in_dims, out_dims) -> chn.QuantumChannel:
    return chn.QuantumChannel(tuple(in_dims), tuple(out_dims), j)


def fidelity_of_recovery(
    s: MultipartiteState, a, b, c, backend: str = "convex", tol: float | None = None
) -> OptResult:
    """F(A;B|C): the best fidelity between the state and a recovery from C.

    backend petz evaluates the Petz recovery map (lower bound), seesaw runs
    Frank-Wolfe ascent from the Petz start (lower bound), convex solves the
    certified semidefinite program (exact within the duality-gap tolerance).
    """
    ga, gb, gc = _normalize_groups(s, a, b, c)
    if not ga:
        raise ValueError("the recovered group A must be nonempty")
    if not gc:
        raise ValueError("the conditioning group C must be nonempty")
    sp = permute_systems(s, ga + gb + gc)
    na, nb = len(ga), len(gb)
    dims = sp.dims
    a_dims = dims[:na]
    c_dims = dims[na + nb :]
    dc = math.prod(c_dims)
    dac = math.prod(a_dims) * dc
    lmap, _ = _recovery_lmap(sp, na, nb)
    j_petz = _petz_choi(sp, na, nb)
    spec = VarSpec("J", dc * dac, lmap, ("tp", dc, dac))

    if backend == "petz":
        f = _fidelity_value(sp.matrix, lmap.apply(j_petz))
        cert = _choi_channel(j_petz, c_dims, tuple(a_dims) + tuple(c_dims))
        return OptResult(f, "fidelity", "lower-bound", cert, 0, {}, "petz")
    if backend == "seesaw":
        stop = SEESAW_TOL if tol is None else tol
        da = math.prod(a_dims)
        db = math.prod(dims[na : na + nb]) if nb else 1
        j_best, iters = _uhlmann_seesaw_channel(sp.matrix, (da, db, dc), j_petz, stop, SEESAW_CAP)
        f = _fidelity_value(sp.matrix, lmap.apply(j_best))
        cert = _choi_channel(j_best, c_dims, tuple(a_dims) + tuple(c_dims))
        return OptResult(f, "fidelity", "lower-bound", cert, iters, {"stop_tol": stop}, "seesaw")
    if backend == "convex":
        gap = DEFAULT_GAP_TOL if tol is None else tol
        # coordinates of C whose rows vanish identically (zero-padded
        # purifications) cannot influence the objective, so the channel
        # variable shrinks to the remaining block without loss
        dab = sp.dim // dc
        m4 = sp.matrix.reshape(dab, dc, dab, dc)
        keep = [i for i in range(dc) if float(np.max(np.abs(m4[:, i]))) > 0.0]
        if len(keep) < dc:
            sel = np.eye(dc, dtype=complex)[:, keep]
            w = np.kron(sel, np.eye(dac, dtype=complex))
            if sparse.issparse(lmap.matrix):
                ws = sparse.csc_matrix(w)
                red = (lmap.matrix @ sparse.kron(ws, ws.conj(), format="csc")).tocsc()
            else:
                red = lmap.matrix @ np.kron(w, w.conj())
            lmap_r = LinMap(red, lmap.side_out, len(keep) * dac)
            spec = VarSpec("J", len(keep) * dac, lmap_r, ("tp", len(keep), dac))
        prog = FidelityProgram(sp.matrix, [spec])
        out = prog.solve(gap_tol=gap)
        j_opt = out["values"]["J"]
        if len(keep) < dc:
            na_nb = na + nb
            rho_ac = partial_trace(sp, list(sp.labels[:na]) + list(sp.labels[na_nb:])).matrix
            j_opt = w @ j_opt @ w.conj().T + np.kron(np.eye(dc) - sel @ sel.conj().T, rho_ac)
        cert = _choi_channel(j_opt, c_dims, tuple(a_dims) + tuple(c_dims))
        return OptResult(
            out["f_lo"], "fidelity", "exact-within-tol", cert, out["iterations"], out["residuals"], "convex"
        )
    raise ValueError(f"unknown backend {backend!r}")


def surprisal_of_recovery(
    s: MultipartiteState, a, b, c, backend: str = "convex", tol: float | None = None
) -> OptResult:
    """-log2 F(A;B|C); lower bounds on F become upper bounds here."""
    r = fidelity_of_recovery(s, a, b, c, backend=backend, tol=tol)
    f = min(max(r.value, 1e-300), 1.0)
    flip = {"lower-bound": "upper-bound", "upper-bound": "lower-bound"}
    bound = flip.get(r.bound, r.bound)
    return OptResult(-math.log2(f), "surprisal", bound, r.certificate, r.iterations, r.residuals, r.backend)


def fidelity_AB(sigma_ab: MultipartiteState, a, b, backend: str = "convex", tol: float | None = None) -> OptResult:
    """sup over states tau of F(sigma_AB, tau_A (x) sigma_B)."""
    ga, gb = _normalize_groups(sigma_ab, a, b)
    if not ga or not gb:
        raise ValueError("both groups must be nonempty")
    sp = permute_systems(sigma_ab, ga + gb)
    na = len(ga)
    da = math.prod(sp.dims[:na])
    sigma_b = partial_trace(sp, list(sp.labels[na:])).matrix
    lmap = probe_map(lambda t: np.kron(t, sigma_b), da, sp.dim)
    spec = VarSpec("tau", da, lmap, ("trace",))
    tau0 = partial_trace(sp, list(sp.labels[:na])).matrix

    if backend == "petz":
        f = _fidelity_value(sp.matrix, lmap.apply(tau0))
        return OptResult(f, "fidelity", "lower-bound", tau0, 0, {}, "petz")
    if backend == "seesaw":
        stop = SEESAW_TOL if tol is None else tol
        db = sp.dim // da
        tau, iters = _uhlmann_seesaw_state(sp.matrix, da, db, sigma_b, tau0, stop, SEESAW_CAP)
        f = _fidelity_value(sp.matrix, lmap.apply(tau))
        return OptResult(f, "fidelity", "lower-bound", tau, iters, {"stop_tol": stop}, "seesaw")
    if backend == "convex":
        gap = DEFAULT_GAP_TOL if tol is None else tol
        prog = FidelityProgram(sp.matrix, [spec])
        out = prog.solve(gap_tol=gap)
        return OptResult(
            out["f_lo"], "fidelity", "exact-within-tol", out["values"]["tau"], out["iterations"], out["residuals"], "convex"
        )
    raise ValueError(f"unknown backend {backend!r}")


def _chain_sigma(rho_tail: np.ndarray, maps: list[np.ndarray], part_dims: list[int], dc: int) -> np.ndarray:
    """apply recovery maps in sequence; maps[i] recovers part i of the
    chain and maps later in the list act earlier, with the conditioning
    system kept last throughout."""
    cur = rho_tail
    d_rest = cur.shape[0] // dc
    for j, da_i in zip(reversed(maps), reversed(part_dims)):
        j4 = j.reshape(dc, da_i * dc, dc, da_i * dc)
        cur4 = cur.reshape(d_rest, dc, d_rest, dc)
        out = np.einsum("rksi,koip->rosp", cur4, j4)
        d_rest = d_rest * da_i
        cur = out.reshape(d_rest * dc, d_rest * dc)
    return cur


def multipartite_for(
    s: MultipartiteState,
    parts: Sequence,
    c,
    tol: float | None = None,
    sweeps: int = 20,
    restarts: int = 5,
    seed: int = 0,
) -> OptResult:
    """multipartite fidelity of recovery by cyclic see-saw over the maps.

    Each map recovers one part from the conditioning system; maps later in
    the list act earlier on the kept marginal.  Each cycle step is a
    certified convex solve in the free map, so the value never decreases
    across sweeps.  The joint problem is multilinear, hence lower-bound.
    """
    groups = _normalize_groups(s, *parts, c)
    part_groups, gc = groups[:-1], groups[-1]
    ell = len(part_groups)
    if ell < 2:
        raise ValueError("need at least two parts")
    if not gc:
        raise ValueError("the conditioning group must be nonempty")
    flat = [l for g in part_groups for l in g] + gc
    sp = permute_systems(s, flat)
    dims = sp.dims
    sizes = []
    pos = 0
    for g in part_groups:
        sizes.append(math.prod(dims[pos : pos + len(g)]))
        pos += len(g)
    dc = math.prod(dims[pos:])
    rho = sp.matrix
    tail = partial_trace(sp, part_groups[-1] + gc).matrix

    # the candidate state emerges ordered (A_l, A_{l-1}, .., A_1, C)
    blocks = [sizes[-1]] + sizes[:-1][::-1] + [dc]
    order = list(range(ell - 1, 0, -1)) + [0, ell]
    inv = [order.index(i) for i in range(ell + 1)]
    perm = permutation_matrix(tuple(blocks), tuple(inv))

    n_maps = ell - 1
    gap = DEFAULT_GAP_TOL if tol is None else tol

    def sigma_of(maps: list[np.ndarray]) -> np.ndarray:
        raw = _chain_sigma(tail, maps, sizes[:-1], dc)
        return perm @ raw @ perm.T

    def solve_slot(maps: list[np.ndarray], slot: int) -> tuple[np.ndarray, float]:
        def act(unit):
            trial = list(maps)
            trial[slot] = unit
            return sigma_of(trial)

        side = dc * sizes[slot] * dc
        lmap = probe_map(act, side, sp.dim)
        spec = VarSpec("J", side, lmap, ("tp", dc, sizes[slot] * dc))
        out = FidelityProgram(rho, [spec]).solve(gap_tol=gap)
        return out["values"]["J"], out["f_lo"]

    def petz_start() -> list[np.ndarray]:
        maps = []
        for g in part_groups[:-1]:
            rho_ic = partial_trace(sp, g + gc)
            maps.append(chn.petz_recovery(rho_ic, g, gc).choi)
        return maps

    def random_start(rng: Rng) -> list[np.ndarray]:
        maps = []
        for i in range(n_maps):
            da = sizes[i]
            u = random_unitary(da * dc, rng)
            iso = u[:, :dc]
            maps.append(chn.kraus_to_choi([iso], in_dims=(dc,), out_dims=(da * dc,)).choi)
        return maps

    best_maps: list[np.ndarray] | None = None
    best_f = -1.0
    total_steps = 0
    starts = [petz_start()]
    if ell > 2:
        rng = Rng(seed)
        starts += [random_start(rng.spawn(k + 1)) for k in range(restarts)]
    last_improvement = 0.0
    for maps in starts:
        maps = [np.array(m, dtype=complex) for m in maps]
        f_prev = _fidelity_value(rho, sigma_of(maps))
        f_run = f_prev
        for sweep in range(sweeps):
            for slot in range(n_maps):
                new_j, f_val = solve_slot(maps, slot)
                total_steps += 1
                if f_val >= f_run:
                    maps[slot] = new_j
                    f_run = f_val
            last_improvement = f_run - f_prev
            if last_improvement < gap:
                break
            f_prev = f_run
        if f_run > best_f:
            best_f = f_run
            best_maps = maps
    c_dims = tuple(dims[pos:])
    certs = [_choi_channel(j, c_dims, (sizes[i],) + c_dims) for i, j in enumerate(best_maps)]
    residuals = {"last_sweep_improvement": last_improvement, "starts": len(starts)}
    return OptResult(best_f, "fidelity", "lower-bound", certs, total_steps, residuals, "seesaw-multi")
