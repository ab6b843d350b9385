"""Dense multipartite state representation, tensor algebra, sampling, and norms.

Conventions used across the package:
  * subsystem ordering is row-major with the first label most significant;
  * all logarithms downstream are base 2, so entropic values read in bits;
  * matrices are dense complex numpy arrays, immutable after construction.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITICITY_TOL = 1e-9
PSD_TOL = 1e-9
TRACE_TOL = 1e-6
EIG_CUTOFF = 1e-12

_AUTO_LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _as_tuple(x: Iterable) -> tuple:
    return tuple(x)


def digest_of(*parts) -> str:
    """short deterministic hash of operands, used to tag derived quantities."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            a = np.ascontiguousarray(p)
            h.update(repr(a.shape).encode())
            h.update(a.tobytes())
        else:
            h.update(repr(p).encode())
    return h.hexdigest()[:16]


def default_labels(n: int) -> tuple[str, ...]:
    """first n uppercase letters, the package-wide default subsystem names."""
    if n > len(_AUTO_LABELS):
        raise ValueError(f"cannot auto-name {n} subsystems")
    return tuple(_AUTO_LABELS[:n])


class Rng:
    """counter-based random source keyed by (seed, stream).

    Identical (seed, stream) pairs reproduce identical draws across runs and
    thread counts; independent streams never overlap.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.gen = np.random.Generator(
            np.random.Philox(key=[self.seed % 2**64, self.stream % 2**64])
        )

    def spawn(self, stream: int) -> "Rng":
        """fresh generator on a sibling stream of the same master seed."""
        return Rng(self.seed, stream)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True)
class MultipartiteState:
    """density matrix on an ordered collection of labeled subsystems."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = _as_tuple(int(d) for d in self.dims)
        labels = _as_tuple(str(l) for l in self.labels)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        if any(d < 1 for d in dims):
            raise ValueError("subsystem dimensions must be positive")
        if len(labels) != len(dims):
            raise ValueError("labels and dims must have equal length")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels: {labels}")
        n = math.prod(dims)
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
        asym = np.max(np.abs(m - m.conj().T)) if n else 0.0
        if asym > HERMITICITY_TOL:
            i, j = np.unravel_index(np.argmax(np.abs(m - m.conj().T)), m.shape)
            raise ValueError(
                f"matrix not Hermitian: asymmetry {asym:.3e} at entry ({i}, {j})"
            )
        m = (m + m.conj().T) / 2
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -PSD_TOL:
            raise ValueError(f"matrix not positive semidefinite: min eigenvalue {lo:.3e}")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr!r} further than {TRACE_TOL} from 1")
        # skipping the division at machine precision keeps construction
        # idempotent, so saved states reload to bit-identical matrices
        if abs(tr - 1.0) > 1e-12:
            m = m / tr
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def axis_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown label {label!r}; have {self.labels}") from None

    def dims_of(self, labels: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.dims[self.axis_of(l)] for l in labels)


@dataclass(frozen=True)
class PureStateVector:
    """unit vector on an ordered collection of labeled subsystems."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = _as_tuple(int(d) for d in self.dims)
        labels = _as_tuple(str(l) for l in self.labels)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels: {labels}")
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (math.prod(dims),):
            raise ValueError("amplitude length does not match dims")
        nrm = float(np.linalg.norm(v))
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"vector norm {nrm!r} further than 1e-10 from 1")
        v = v / nrm
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def to_density(self) -> MultipartiteState:
        """rank-one density matrix |v><v| on the same subsystems."""
        return MultipartiteState(self.dims, self.labels, np.outer(self.amplitudes, self.amplitudes.conj()))


def tensor(a: MultipartiteState, b: MultipartiteState) -> MultipartiteState:
    """Kronecker product of two states on disjoint label sets."""
    overlap = set(a.labels) & set(b.labels)
    if overlap:
        raise ValueError(f"label collision: {sorted(overlap)}")
    return MultipartiteState(a.dims + b.dims, a.labels + b.labels, np.kron(a.matrix, b.matrix))


def partial_trace(s: MultipartiteState, keep: Iterable[str]) -> MultipartiteState:
    """reduced state on `keep`, preserving the relative label order."""
    keep = set(keep)
    unknown = keep - set(s.labels)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}; have {s.labels}")
    if not keep:
        raise ValueError("keep set must be nonempty")
    k = len(s.dims)
    keep_idx = [i for i, l in enumerate(s.labels) if l in keep]
    drop_idx = [i for i, l in enumerate(s.labels) if l not in keep]
    if not drop_idx:
        return s
    perm = keep_idx + drop_idx
    t = s.matrix.reshape(s.dims + s.dims).transpose(perm + [p + k for p in perm])
    kd = math.prod(s.dims[i] for i in keep_idx)
    dd = math.prod(s.dims[i] for i in drop_idx)
    t = t.reshape(kd, dd, kd, dd)
    out = np.einsum("adbd->ab", t)
    return MultipartiteState(
        tuple(s.dims[i] for i in keep_idx), tuple(s.labels[i] for i in keep_idx), out
    )


def permutation_matrix(dims: Sequence[int], new_axes: Sequence[int]) -> np.ndarray:
    """unitary P with (P x)[new index] = x[old index] for the axis reordering.

    `new_axes[j]` is the old axis placed at position j, the numpy.transpose
    convention.  Conjugating a matrix by P reorders its tensor factors.
    """
    n = math.prod(dims)
    idx = np.arange(n).reshape(tuple(dims)).transpose(tuple(new_axes)).reshape(-1)
    p = np.zeros((n, n))
    p[np.arange(n), idx] = 1.0
    return p


def permute_systems(s: MultipartiteState, new_order: Sequence[str]) -> MultipartiteState:
    """state with subsystems reordered to `new_order`; spectrum unchanged."""
    new_order = list(new_order)
    if sorted(new_order) != sorted(s.labels) or len(new_order) != len(s.labels):
        raise ValueError(f"{new_order} is not a permutation of {s.labels}")
    axes = [s.axis_of(l) for l in new_order]
    p = permutation_matrix(s.dims, axes)
    return MultipartiteState(
        tuple(s.dims[a] for a in axes), tuple(new_order), p @ s.matrix @ p.T
    )


def permute_vector(v: PureStateVector, new_order: Sequence[str]) -> PureStateVector:
    """pure-state analogue of permute_systems."""
    new_order = list(new_order)
    if sorted(new_order) != sorted(v.labels):
        raise ValueError(f"{new_order} is not a permutation of {v.labels}")
    axes = [v.labels.index(l) for l in new_order]
    amp = v.amplitudes.reshape(v.dims).transpose(axes).reshape(-1)
    return PureStateVector(tuple(v.dims[a] for a in axes), tuple(new_order), amp)


def _phase_fix(vec: np.ndarray) -> np.ndarray:
    """rotate a vector's global phase so its largest component is real positive."""
    i = int(np.argmax(np.abs(vec)))
    z = vec[i]
    if abs(z) < 1e-300:
        return vec
    return vec * (abs(z) / z)


def purify(s: MultipartiteState, ref_label: str, ref_dim: int | None = None) -> PureStateVector:
    """purification of s with the reference system appended last.

    The reference dimension defaults to rank(s) under an eigenvalue cutoff of
    1e-12; a larger ref_dim zero-pads the Schmidt spectrum.
    """
    if ref_label in s.labels:
        raise ValueError(f"reference label {ref_label!r} already in use")
    lam, vecs = np.linalg.eigh(s.matrix)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    keep = lam > EIG_CUTOFF
    lam, vecs = lam[keep], vecs[:, keep]
    r = len(lam)
    d_ref = r if ref_dim is None else int(ref_dim)
    if d_ref < r:
        raise ValueError(f"ref_dim {d_ref} below state rank {r}")
    vecs = np.column_stack([_phase_fix(vecs[:, i]) for i in range(r)])
    amp = np.zeros((s.dim, d_ref), dtype=complex)
    amp[:, :r] = vecs * np.sqrt(lam)
    return PureStateVector(s.dims + (d_ref,), s.labels + (ref_label,), amp.reshape(-1))


def schmidt(v: PureStateVector, cut: Iterable[str]):
    """Schmidt data of v across the bipartition (cut | rest).

    Returns (weights, left_vectors, right_vectors): weights are the squared
    Schmidt coefficients in descending order (they sum to 1); the vector
    lists reconstruct the state on the permuted ordering that puts the cut
    labels first, via sum_i sqrt(w_i) left_i (x) right_i.
    """
    cut = [l for l in v.labels if l in set(cut)]
    rest = [l for l in v.labels if l not in set(cut)]
    if not cut or not rest:
        raise ValueError("cut must be a nontrivial bipartition")
    w = permute_vector(v, cut + rest)
    ld = math.prod(w.dims[: len(cut)])
    rd = math.prod(w.dims[len(cut):])
    x = w.amplitudes.reshape(ld, rd)
    u, sv, vh = np.linalg.svd(x, full_matrices=False)
    keep = sv > 1e-12
    u, sv, vh = u[:, keep], sv[keep], vh[keep, :]
    left, right = [], []
    for i in range(len(sv)):
        col = u[:, i]
        j = int(np.argmax(np.abs(col)))
        z = col[j] / abs(col[j])
        left.append(col / z)
        right.append(vh[i, :] * z)
    return sv**2, left, right


def schatten_norm(x: np.ndarray, alpha: float) -> float:
    """alpha-norm (sum of singular values to the alpha, to the 1/alpha)."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    sv = np.linalg.svd(np.asarray(x, dtype=complex), compute_uv=False)
    return float(np.sum(sv**alpha) ** (1.0 / alpha))


def random_pure(dims: Sequence[int], rng: Rng, labels: Sequence[str] | None = None) -> PureStateVector:
    """Haar-random pure state (normalized complex Gaussian vector)."""
    dims = _as_tuple(int(d) for d in dims)
    labels = default_labels(len(dims)) if labels is None else _as_tuple(labels)
    n = math.prod(dims)
    v = rng.gen.standard_normal(n) + 1j * rng.gen.standard_normal(n)
    return PureStateVector(dims, labels, v / np.linalg.norm(v))


def random_density(
    dims: Sequence[int], rank: int, rng: Rng, labels: Sequence[str] | None = None
) -> MultipartiteState:
    """Hilbert-Schmidt-induced random state of the given rank.

    Built as the partial trace of a Haar pure state over a rank-dimensional
    ancilla.
    """
    dims = _as_tuple(int(d) for d in dims)
    labels = default_labels(len(dims)) if labels is None else _as_tuple(labels)
    n = math.prod(dims)
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} out of range [1, {n}]")
    g = rng.gen.standard_normal((n, rank)) + 1j * rng.gen.standard_normal((n, rank))
    m = g @ g.conj().T
    return MultipartiteState(dims, labels, m / np.trace(m).real)


def random_unitary(dim: int, rng: Rng) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    g = rng.gen.standard_normal((dim, dim)) + 1j * rng.gen.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def maximally_mixed(dims: Sequence[int], labels: Sequence[str] | None = None) -> MultipartiteState:
    """the state I/d on the given subsystems."""
    dims = _as_tuple(int(d) for d in dims)
    labels = default_labels(len(dims)) if labels is None else _as_tuple(labels)
    n = math.prod(dims)
    return MultipartiteState(dims, labels, np.eye(n) / n)


def basis_vector(dims: Sequence[int], index: Sequence[int], labels: Sequence[str] | None = None) -> PureStateVector:
    """computational basis vector |i1 i2 ...> on the given subsystems."""
    dims = _as_tuple(int(d) for d in dims)
    labels = default_labels(len(dims)) if labels is None else _as_tuple(labels)
    flat = 0
    for d, i in zip(dims, index):
        if not 0 <= i < d:
            raise ValueError(f"basis index {index} out of range for dims {dims}")
        flat = flat * d + i
    v = np.zeros(math.prod(dims), dtype=complex)
    v[flat] = 1.0
    return PureStateVector(dims, labels, v)


def max_entangled(d: int, labels: Sequence[str] = ("A", "B")) -> PureStateVector:
    """the vector sum_i |ii> / sqrt(d) on two d-dimensional subsystems."""
    v = np.zeros(d * d, dtype=complex)
    for i in range(d):
        v[i * d + i] = 1.0
    return PureStateVector((d, d), tuple(labels), v / math.sqrt(d))
