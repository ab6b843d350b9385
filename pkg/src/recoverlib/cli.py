"""Command-line front end: state files, quantity computation, inequality sweeps.

State files are JSON text with explicit real and imaginary nested arrays and
17-significant-digit decimals, so fixtures are diffable and round-trip
losslessly.  Sweep reports are JSON lines, one record per sample plus a
trailing aggregate; per-sample records depend only on (tag, seed, index), so
reports are reproducible across thread counts.  Exit codes: 0 success,
1 input error, 2 solver non-convergence, 3 sweep inequality violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import channels as chn
from . import infoquant as iq
from . import measrec, qcore, recopt, squash
from .qcore import MultipartiteState, Rng
from .recopt import SolverConvergenceError

RENORM_LIMIT = 1e-3
SWEEP_TAGS = (
    "fr-inequality",
    "duality",
    "weak-chain",
    "renyi-mono",
    "ssa",
    "petz-dominance",
    "classical-cond",
    "halpha-cq",
    "dfm-bracket",
    "approx-faithful",
)
COMPUTE_COMMANDS = (
    "for",
    "ifr",
    "cqmi",
    "renyi-cqmi",
    "gse",
    "gse-pure",
    "dfm",
    "dfm-pure",
    "discord",
    "mfor",
)


def _default_labels(n: int) -> tuple[str, ...]:
    letters = ("A", "B", "C", "D", "E", "F")
    if n <= len(letters):
        return letters[:n]
    return tuple(f"Q{i}" for i in range(n))


def _format_matrix(m: np.ndarray) -> str:
    rows = []
    for row in m:
        rows.append("[" + ", ".join(f"{float(v):.17g}" for v in row) + "]")
    return "[\n    " + ",\n    ".join(rows) + "\n  ]"


def save_state(state: MultipartiteState, path) -> None:
    """write a state file with lossless 17-significant-digit decimals."""
    dims = ", ".join(str(int(d)) for d in state.dims)
    labels = ", ".join(json.dumps(l) for l in state.labels)
    text = (
        "{\n"
        f'  "dims": [{dims}],\n'
        f'  "labels": [{labels}],\n'
        f'  "re": {_format_matrix(state.matrix.real)},\n'
        f'  "im": {_format_matrix(state.matrix.imag)}\n'
        "}\n"
    )
    Path(path).write_text(text, encoding="utf-8")


def load_state(path) -> MultipartiteState:
    """read a state file, renormalizing a slightly off trace with a warning."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"could not parse {path}: {e}") from e
    for key in ("dims", "labels", "re", "im"):
        if key not in doc:
            raise ValueError(f"state file {path} is missing the field {key!r}")
    dims = tuple(int(d) for d in doc["dims"])
    labels = tuple(str(l) for l in doc["labels"])
    m = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
    side = math.prod(dims)
    if m.shape != (side, side):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
    dev = np.abs(m - m.conj().T)
    worst = float(dev.max()) if dev.size else 0.0
    if worst > qcore.HERMITICITY_TOL:
        i, j = divmod(int(np.argmax(dev)), side)
        raise ValueError(
            f"matrix not Hermitian within {qcore.HERMITICITY_TOL}: "
            f"entry ({i}, {j}) deviates by {worst:.3e}"
        )
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > qcore.TRACE_TOL:
        if abs(tr - 1.0) > RENORM_LIMIT:
            raise ValueError(f"trace {tr!r} further than {RENORM_LIMIT} from 1")
        warnings.warn(f"trace {tr!r} off by {tr - 1.0:.3e}; renormalized")
        m = m / tr
    return MultipartiteState(dims, labels, m)


def _max_entangled(d: int) -> MultipartiteState:
    v = np.zeros(d * d, dtype=complex)
    for i in range(d):
        v[i * d + i] = 1.0 / math.sqrt(d)
    return MultipartiteState((d, d), ("A", "B"), np.outer(v, v.conj()))


def make_state(kind: str, params: dict, rng: Rng) -> MultipartiteState:
    """named state construction used by fixtures and sweeps."""
    dims = tuple(params.get("dims") or ())
    if kind == "bell":
        return _max_entangled(2)
    if kind == "max-entangled":
        return _max_entangled(dims[0] if dims else 2)
    if kind == "classical-copy":
        d = dims[0] if dims else 2
        m = np.zeros((d * d, d * d), dtype=complex)
        for x in range(d):
            m[x * d + x, x * d + x] = 1.0 / d
        return MultipartiteState((d, d), ("X", "B"), m)
    if kind == "ghz":
        v = np.zeros(8, dtype=complex)
        v[0] = v[7] = 1.0 / math.sqrt(2)
        return MultipartiteState((2, 2, 2), ("A", "B", "C"), np.outer(v, v.conj()))
    if kind == "werner":
        p = float(params.get("p", 0.5))
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"werner weight {p} outside [0, 1]")
        m = p * _max_entangled(2).matrix + (1.0 - p) * np.eye(4) / 4.0
        return MultipartiteState((2, 2), ("A", "B"), m)
    if kind == "private":
        d = dims[0] if dims else 2
        mode = params.get("twisting", "random")
        if mode == "random":
            tw = [qcore.random_unitary(d * d, rng) for _ in range(d)]
        elif mode == "none":
            tw = [np.eye(d * d, dtype=complex) for _ in range(d)]
        else:
            raise ValueError(f"unknown twisting mode {mode!r}")
        shield = qcore.random_density((d, d), d * d, rng, labels=("Ap", "Bp"))
        return chn.private_state(d, (d, d), tw, shield)
    if kind == "random":
        if not dims:
            raise ValueError("random states need --dims")
        rank = int(params.get("rank") or math.prod(dims))
        return qcore.random_density(dims, rank, rng, labels=_default_labels(len(dims)))
    if kind == "cq":
        dx, db = dims if dims else (2, 2)
        probs = rng.gen.dirichlet(np.ones(dx))
        m = np.zeros((dx * db, dx * db), dtype=complex)
        for x in range(dx):
            tau = qcore.random_density((db,), db, rng).matrix
            flag = np.zeros((dx, dx))
            flag[x, x] = 1.0
            m += probs[x] * np.kron(flag, tau)
        return MultipartiteState((dx, db), ("X", "B"), m)
    if kind == "markov-chain":
        da, db, nx = dims if dims else (2, 2, 2)
        probs = rng.gen.dirichlet(np.ones(nx))
        m = np.zeros((da * db * nx, da * db * nx), dtype=complex)
        for x in range(nx):
            rho_a = qcore.random_density((da,), da, rng).matrix
            rho_b = qcore.random_density((db,), db, rng).matrix
            flag = np.zeros((nx, nx))
            flag[x, x] = 1.0
            m += probs[x] * np.kron(np.kron(rho_a, rho_b), flag)
        return MultipartiteState((da, db, nx), ("A", "B", "C"), m)
    raise ValueError(f"unknown state kind {kind!r}")


def _jsonable(x):
    if isinstance(x, (bool, int, str)) or x is None:
        return x
    if isinstance(x, float):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return str(x)


def _group(arg: str | None) -> list[str]:
    if not arg:
        return []
    return [p for p in arg.split(",") if p]


def compute(command: str, state: MultipartiteState, labels: dict, flags: dict) -> dict:
    """evaluate one quantity and return a flat record of the outcome."""
    t0 = time.perf_counter()
    backend = flags.get("backend")
    tol = flags.get("tol")
    rng = Rng(int(flags.get("seed") or 0))
    ga, gb, gc = _group(labels.get("a")), _group(labels.get("b")), _group(labels.get("c"))
    rec: dict = {"command": command}

    if command in ("for", "ifr"):
        fn = recopt.fidelity_of_recovery if command == "for" else recopt.surprisal_of_recovery
        r = fn(state, ga, gb, gc, backend=backend or "convex", tol=tol)
        rec.update(value=r.value, bound=r.bound, backend=r.backend, residuals=r.residuals)
    elif command == "cqmi":
        v = iq.cqmi(state, ga, gb, gc)
        rec.update(value=float(v), bound="exact-within-tol", backend="spectral", residuals={})
    elif command == "renyi-cqmi":
        alpha = float(flags.get("alpha") or 0.5)
        v = iq.renyi_cqmi(state, ga, gb, gc, alpha)
        rec.update(
            value=float(v), bound="exact-within-tol", backend="spectral",
            residuals={"note": v.note} if v.note else {}, alpha=alpha,
        )
    elif command == "gse":
        r = squash.gse_heuristic(
            state,
            env_dim=flags.get("env_dim"),
            restarts=int(flags.get("restarts") or squash.DEFAULT_RESTARTS),
            rng=rng,
            tol=tol if tol is not None else squash.DEFAULT_TOL,
            a=ga or None,
            b=gb or None,
        )
        rec.update(
            value=r.e_value, bound=r.bound, backend="alternating",
            residuals={"f_sq_value": r.f_sq_value, "env_dim": r.env_dim, "restarts": r.restarts},
        )
    elif command == "gse-pure":
        r = squash.gse_pure(state)
        rec.update(
            value=r.e_value, bound=r.bound, backend="spectral",
            residuals={"f_sq_value": r.f_sq_value},
        )
    elif command == "dfm":
        if not ga:
            raise ValueError("dfm needs --a naming the measured subsystem")
        r = measrec.dfm(state, ga[0], backend=backend or "seesaw", tol=tol, rng=rng)
        rec.update(value=r.d_value, bound=r.bound, backend=backend or "seesaw",
                   residuals=r.diagnostics, f_value=r.f_value)
    elif command == "dfm-pure":
        r = measrec.dfm_pure(state)
        rec.update(value=r.d_value, bound=r.bound, backend="spectral",
                   residuals=r.diagnostics, f_value=r.f_value)
    elif command == "discord":
        if not ga:
            raise ValueError("discord needs --a naming the measured subsystem")
        value, _ = measrec.discord(state, ga[0], optimizer=backend or "auto", rng=rng)
        rec.update(value=value, bound="upper-bound-on-D", backend=backend or "auto", residuals={})
    elif command == "mfor":
        parts_arg = labels.get("parts") or ""
        parts = [[l for l in part.split("+") if l] for part in parts_arg.split(":") if part]
        if len(parts) < 2:
            raise ValueError("mfor needs --parts with at least two colon-separated groups")
        r = recopt.multipartite_for(
            state, parts, gc, tol=tol,
            restarts=int(flags.get("restarts") or 5), seed=int(flags.get("seed") or 0),
        )
        rec.update(value=r.value, bound=r.bound, backend=r.backend, residuals=r.residuals)
    else:
        raise ValueError(f"unknown compute command {command!r}")

    rec["runtime_s"] = time.perf_counter() - t0
    return _jsonable(rec)


def _random_full(dims, rng) -> MultipartiteState:
    return qcore.random_density(tuple(dims), math.prod(dims), rng, labels=_default_labels(len(dims)))


def _sample_fr(dims, rng) -> dict:
    s = _random_full(dims or (2, 2, 2), rng)
    i_val = float(iq.cqmi(s, "A", "B", "C"))
    r = recopt.fidelity_of_recovery(s, "A", "B", "C")
    i_f = -math.log2(max(r.value, 1e-300))
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"cqmi": i_val, "i_f": i_f, "f": r.value},
        "margin": i_val - i_f,
    }


def _sample_duality(dims, rng) -> dict:
    psi = qcore.random_pure(tuple(dims or (2, 2, 2, 2)), rng, labels=("A", "B", "C", "D"))
    s = psi.to_density()
    f_c = recopt.fidelity_of_recovery(qcore.partial_trace(s, ["A", "B", "C"]), "A", "B", "C").value
    f_d = recopt.fidelity_of_recovery(qcore.partial_trace(s, ["A", "B", "D"]), "A", "B", "D").value
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"f_given_c": f_c, "f_given_d": f_d},
        "margin": -abs(f_c - f_d),
    }


def _sample_weak_chain(dims, rng) -> dict:
    s = _random_full(dims or (2, 2, 2), rng)
    f_joint = recopt.fidelity_AB(s, "A", ["B", "C"]).value
    f_cond = recopt.fidelity_of_recovery(s, "A", "B", "C").value
    lhs = -math.log2(max(f_joint, 1e-300))
    rhs = -math.log2(max(f_cond, 1e-300))
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"i_f_joint": lhs, "i_f_conditional": rhs},
        "margin": lhs - rhs,
    }


def _sample_renyi_mono(dims, rng) -> dict:
    s = _random_full(dims or (2, 2, 2), rng)
    i_val = float(iq.cqmi(s, "A", "B", "C"))
    i_half = float(iq.renyi_cqmi(s, "A", "B", "C", 0.5))
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"cqmi": i_val, "renyi_half": i_half},
        "margin": i_val - i_half,
    }


def _sample_ssa(dims, rng) -> dict:
    s = _random_full(dims or (2, 2, 2), rng)
    i_val = float(iq.cqmi(s, "A", "B", "C"))
    return {"digest": qcore.digest_of(s.matrix), "values": {"cqmi": i_val}, "margin": i_val}


def _sample_petz(dims, rng) -> dict:
    s = _random_full(dims or (2, 2, 2), rng)
    f_petz = recopt.fidelity_of_recovery(s, "A", "B", "C", backend="petz").value
    r = recopt.fidelity_of_recovery(s, "A", "B", "C")
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"f_petz": f_petz, "f_convex": r.value,
                   "duality_gap": r.residuals.get("duality_gap")},
        "margin": r.value - f_petz,
    }


def _sample_classical_cond(dims, rng) -> dict:
    base = tuple(dims or (2, 2, 2))
    probs = rng.gen.dirichlet(np.ones(2))
    comps = [_random_full(base, rng) for _ in range(2)]
    d = math.prod(base)
    m = np.zeros((2 * d, 2 * d), dtype=complex)
    for x, comp in enumerate(comps):
        flag = np.zeros((2, 2))
        flag[x, x] = 1.0
        m += probs[x] * np.kron(comp.matrix, flag)
    flagged = MultipartiteState(base + (2,), ("A", "B", "C", "X"), m)
    lhs = math.sqrt(max(recopt.fidelity_of_recovery(flagged, "A", "B", ["C", "X"]).value, 0.0))
    rhs = sum(
        probs[x] * math.sqrt(max(recopt.fidelity_of_recovery(comps[x], "A", "B", "C").value, 0.0))
        for x in range(2)
    )
    return {
        "digest": qcore.digest_of(m),
        "values": {"root_f_flagged": lhs, "avg_root_f": float(rhs)},
        "margin": lhs - float(rhs),
    }


def _sample_halpha(dims, rng) -> dict:
    dx, db = tuple(dims or (2, 2))
    s = make_state("cq", {"dims": (dx, db)}, rng)
    values = {}
    margin = math.inf
    for alpha in (0.5, 0.75, 2.0):
        h = float(iq.conditional_renyi_entropy(s, "X", "B", alpha))
        values[f"h_{alpha}"] = h
        margin = min(margin, h)
    return {"digest": qcore.digest_of(s.matrix), "values": values, "margin": margin}


def _sample_dfm_bracket(dims, rng) -> dict:
    s = _random_full(dims or (2, 2), rng)
    la = s.labels[0]
    r_lo = measrec.dfm(s, la, backend="seesaw")
    r_hi = measrec.dfm(s, la, backend="ppt-relax")
    deph = chn.apply(chn.dephasing_channel(s.dims[0]), s, la)
    f_deph = float(iq.fidelity(s.matrix, deph.matrix))
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"f_seesaw": r_lo.f_value, "f_ppt": r_hi.f_value, "f_dephasing": f_deph},
        "margin": r_hi.f_value - r_lo.f_value,
    }


def _sample_approx_faithful(dims, rng) -> dict:
    dx, db = tuple(dims or (2, 2))
    base = make_state("cq", {"dims": (dx, db)}, rng)
    t = 0.002 * float(rng.gen.uniform())
    d = dx * db
    m = (1.0 - t) * base.matrix + t * np.eye(d) / d
    s = MultipartiteState((dx, db), ("X", "B"), m)
    res = measrec.dfm(s, "X", backend="seesaw")
    out = chn.apply(res.channel_certificate, s, "X")
    tdist = float(iq.trace_distance(s.matrix, out.matrix))
    ceiling = 2.0 * math.sqrt(res.d_value * math.log(2.0))
    bound = measrec.discord_upper_from_fixed_point(s, res.channel_certificate)
    disc, _ = measrec.discord(s, "X", rng=rng)
    return {
        "digest": qcore.digest_of(s.matrix),
        "values": {"d_f": res.d_value, "trace_dist": tdist, "fg_ceiling": ceiling,
                   "discord": disc, "fixed_point_bound": bound},
        "margin": min(ceiling - tdist, bound - disc),
    }


_SAMPLERS = {
    "fr-inequality": _sample_fr,
    "duality": _sample_duality,
    "weak-chain": _sample_weak_chain,
    "renyi-mono": _sample_renyi_mono,
    "ssa": _sample_ssa,
    "petz-dominance": _sample_petz,
    "classical-cond": _sample_classical_cond,
    "halpha-cq": _sample_halpha,
    "dfm-bracket": _sample_dfm_bracket,
    "approx-faithful": _sample_approx_faithful,
}


def _thread_count() -> int:
    raw = os.environ.get("RECOVERLIB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(
    tag: str,
    dims,
    samples: int,
    seed: int,
    tol: float,
    out_path=None,
    threads: int | None = None,
) -> dict:
    """run one inequality on random instances and write a JSON-lines report.

    Each sample draws from the stream (seed, index), so records are
    independent of execution order and thread count.  Solver failures are
    recorded per sample and do not stop the sweep.
    """
    if tag not in _SAMPLERS:
        raise ValueError(f"unknown sweep tag {tag!r}; have {', '.join(SWEEP_TAGS)}")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    sampler = _SAMPLERS[tag]
    t0 = time.perf_counter()

    def one(i: int) -> dict:
        try:
            rec = sampler(dims, Rng(seed, i))
        except (SolverConvergenceError, ValueError) as e:
            return {"sample": i, "error": str(e)}
        return {"sample": i, **rec}

    workers = threads if threads is not None else _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(samples)))
    else:
        records = [one(i) for i in range(samples)]
    records.sort(key=lambda r: r["sample"])

    margins = [r["margin"] for r in records if "margin" in r]
    errors = sum(1 for r in records if "error" in r)
    violations = sum(1 for m in margins if m < -tol)
    aggregate = {
        "tag": tag,
        "seed": seed,
        "samples": samples,
        "tol": tol,
        "min_margin": min(margins) if margins else None,
        "violations": violations,
        "errors": errors,
        "runtime_s": time.perf_counter() - t0,
    }
    lines = [json.dumps(_jsonable(r), sort_keys=True) for r in records]
    lines.append(json.dumps(_jsonable(aggregate), sort_keys=True))
    text = "\n".join(lines) + "\n"
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return aggregate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="recoverlib", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)

    mk = sub.add_parser("make-state", help="write a named state construction")
    mk.add_argument("kind")
    mk.add_argument("--dims", default=None)
    mk.add_argument("--rank", type=int, default=None)
    mk.add_argument("--p", type=float, default=None)
    mk.add_argument("--twisting", default=None)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", default=None)

    cp = sub.add_parser("compute", help="evaluate one quantity on a state file")
    cp.add_argument("command", choices=COMPUTE_COMMANDS)
    cp.add_argument("--state", required=True)
    cp.add_argument("--a", default=None)
    cp.add_argument("--b", default=None)
    cp.add_argument("--c", default=None)
    cp.add_argument("--parts", default=None)
    cp.add_argument("--alpha", type=float, default=None)
    cp.add_argument("--backend", default=None)
    cp.add_argument("--tol", type=float, default=None)
    cp.add_argument("--env-dim", type=int, default=None)
    cp.add_argument("--restarts", type=int, default=None)
    cp.add_argument("--seed", type=int, default=0)

    sw = sub.add_parser("sweep", help="run a randomized inequality sweep")
    sw.add_argument("tag", choices=SWEEP_TAGS)
    sw.add_argument("--dims", default=None)
    sw.add_argument("--samples", type=int, default=50)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--tol", type=float, default=1e-5)
    sw.add_argument("--out", default=None)
    return parser


def _parse_dims(arg: str | None) -> tuple[int, ...] | None:
    if arg is None:
        return None
    try:
        dims = tuple(int(p) for p in arg.split(",") if p)
    except ValueError as e:
        raise ValueError(f"bad --dims {arg!r}: {e}") from e
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"bad --dims {arg!r}")
    return dims


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.mode == "make-state":
            params = {"dims": _parse_dims(args.dims)}
            if args.rank is not None:
                params["rank"] = args.rank
            if args.p is not None:
                params["p"] = args.p
            if args.twisting is not None:
                params["twisting"] = args.twisting
            state = make_state(args.kind, params, Rng(args.seed))
            if args.out is None:
                save_state(state, "/dev/stdout")
            else:
                save_state(state, args.out)
            return 0
        if args.mode == "compute":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                state = load_state(args.state)
            for w in caught:
                sys.stderr.write(json.dumps({"warning": str(w.message)}) + "\n")
            labels = {"a": args.a, "b": args.b, "c": args.c, "parts": args.parts}
            flags = {
                "backend": args.backend, "tol": args.tol, "alpha": args.alpha,
                "env_dim": args.env_dim, "restarts": args.restarts, "seed": args.seed,
            }
            rec = compute(args.command, state, labels, flags)
            sys.stdout.write(json.dumps(rec, sort_keys=True) + "\n")
            return 0
        aggregate = run_sweep(
            args.tag, _parse_dims(args.dims), args.samples, args.seed, args.tol, args.out
        )
        if args.out is not None:
            sys.stdout.write(json.dumps(_jsonable(aggregate), sort_keys=True) + "\n")
        return 3 if aggregate["violations"] else 0
    except SolverConvergenceError as e:
        sys.stdout.write(json.dumps({"error": str(e), "residuals": _jsonable(e.residuals)}) + "\n")
        return 2
    except (ValueError, TypeError, OSError) as e:
        sys.stderr.write(json.dumps({"error": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
