"""Complex linear algebra on kets and density matrices.

Kets are stored in polar form (moduli + arguments); density matrices are dense
complex arrays that carry the dimensions of their subsystems so partial traces
can address them. Values are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantError

__all__ = [
    "Tolerances",
    "TOL",
    "Ket",
    "DensityMatrix",
    "SubsystemCut",
    "ket_from_polar",
    "pure_density",
    "tensor_ket",
    "mix",
    "born_probability",
    "measure_all",
    "post_measurement_ensemble",
    "partial_trace",
    "purity",
    "is_separable_pure",
    "tensor_kets",
    "ket_to_json",
    "ket_from_json",
    "density_to_json",
    "density_from_json",
]


@dataclass(frozen=True)
class Tolerances:
    norm: float = 1e-9
    hermitian: float = 1e-9
    trace: float = 1e-9
    psd: float = 1e-8
    weights: float = 1e-9


TOL = Tolerances()


@dataclass(frozen=True, eq=False)
class Ket:
    """Unit complex vector ``moduli * exp(i * arguments)``.

    ``subsystem_dims`` records the tensor factors the ket lives on; its
    product must equal ``dim``. Arguments are free reals and are not wrapped.
    """

    moduli: np.ndarray
    arguments: np.ndarray
    subsystem_dims: tuple = None
    tol: Tolerances = field(default=TOL, repr=False)

    def __post_init__(self):
        m = np.array(self.moduli, dtype=np.float64).ravel()
        a = np.array(self.arguments, dtype=np.float64).ravel()
        if m.shape != a.shape or m.size == 0:
            raise InvariantError(f"moduli/arguments length mismatch: {m.size} vs {a.size}")
        if np.any(m < 0):
            raise InvariantError("moduli must be non-negative")
        if not np.all(np.isfinite(a)):
            raise InvariantError("arguments must be finite")
        if abs(np.linalg.norm(m) - 1.0) > self.tol.norm:
            raise InvariantError(f"moduli norm {np.linalg.norm(m)!r} is not 1")
        dims = (m.size,) if self.subsystem_dims is None else tuple(int(d) for d in self.subsystem_dims)
        if int(np.prod(dims)) != m.size:
            raise InvariantError(f"subsystem dims {dims} do not multiply to {m.size}")
        m.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "moduli", m)
        object.__setattr__(self, "arguments", a)
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def dim(self) -> int:
        return self.moduli.size

    @property
    def vector(self) -> np.ndarray:
        return self.moduli * np.exp(1j * self.arguments)

    @classmethod
    def from_vector(cls, vec, subsystem_dims=None, normalize=False) -> "Ket":
        """Polar form of a complex vector; zero entries get argument 0."""
        vec = np.asarray(vec, dtype=np.complex128).ravel()
        if normalize:
            n = np.linalg.norm(vec)
            if n == 0:
                raise InvariantError("cannot normalise the zero vector")
            vec = vec / n
        return cls(np.abs(vec), np.angle(vec), subsystem_dims)

    def __eq__(self, other):
        return isinstance(other, Ket) and np.array_equal(self.vector, other.vector)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    subsystem_dims: tuple = None
    check: bool = field(default=True, repr=False)
    tol: Tolerances = field(default=TOL, repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvariantError(f"density matrix must be square, got {rho.shape}")
        dims = (rho.shape[0],) if self.subsystem_dims is None else tuple(int(d) for d in self.subsystem_dims)
        if int(np.prod(dims)) != rho.shape[0]:
            raise InvariantError(f"subsystem dims {dims} do not multiply to {rho.shape[0]}")
        rho.flags.writeable = False
        object.__setattr__(self, "entries", rho)
        object.__setattr__(self, "subsystem_dims", dims)
        if self.check:
            self.validate()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def validate(self) -> None:
        rho, tol = self.entries, self.tol
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > tol.hermitian:
            raise InvariantError(f"not Hermitian (max deviation {herm:.3g})")
        tr = np.trace(rho)
        if abs(tr - 1.0) > tol.trace:
            raise InvariantError(f"trace is {tr}, not 1")
        diag = np.real(np.diag(rho))
        if np.any(diag < -tol.psd):
            raise InvariantError("negative diagonal entry")
        lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lo < -tol.psd:
            raise InvariantError(f"not positive semi-definite (min eigenvalue {lo:.3g})")

    def __eq__(self, other):
        return (
            isinstance(other, DensityMatrix)
            and self.subsystem_dims == other.subsystem_dims
            and np.array_equal(self.entries, other.entries)
        )

    __hash__ = None


@dataclass(frozen=True)
class SubsystemCut:
    keep: frozenset
    trace_out: frozenset

    def __post_init__(self):
        object.__setattr__(self, "keep", frozenset(int(i) for i in self.keep))
        object.__setattr__(self, "trace_out", frozenset(int(i) for i in self.trace_out))
        if not self.keep:
            raise InvariantError("cut must keep at least one subsystem")
        if self.keep & self.trace_out:
            raise InvariantError("keep and trace_out overlap")

    @classmethod
    def keeping(cls, keep: Iterable[int], n: int) -> "SubsystemCut":
        keep = frozenset(keep)
        return cls(keep, frozenset(range(n)) - keep)

    def validate_for(self, n: int) -> None:
        if (self.keep | self.trace_out) != frozenset(range(n)):
            raise InvariantError(f"cut {sorted(self.keep)}|{sorted(self.trace_out)} does not partition {n} subsystems")


# -- operations -----------------------------------------------------------------


def ket_from_polar(moduli, arguments, subsystem_dims=None) -> Ket:
    m = np.asarray(moduli, dtype=np.float64).ravel()
    a = np.asarray(arguments, dtype=np.float64).ravel()
    if m.size != a.size or m.size == 0:
        raise InvariantError(f"moduli/arguments length mismatch: {m.size} vs {a.size}")
    if np.any(m < 0):
        raise InvariantError("moduli must be non-negative")
    n = np.linalg.norm(m)
    if n == 0:
        raise InvariantError("all-zero moduli")
    return Ket(m / n, a.copy(), subsystem_dims)


def pure_density(k: Ket) -> DensityMatrix:
    v = k.vector
    return DensityMatrix(np.outer(v, v.conj()), k.subsystem_dims)


def tensor_ket(a: Ket, b: Ket) -> Ket:
    # polar form: moduli multiply, arguments add
    m = np.multiply.outer(a.moduli, b.moduli).ravel()
    t = np.add.outer(a.arguments, b.arguments).ravel()
    return Ket(m, t, a.subsystem_dims + b.subsystem_dims)


def mix(states: Sequence, weights, tol: Tolerances = TOL) -> DensityMatrix:
    """Convex mixture ``sum_i w_i |phi_i><phi_i|`` of kets and/or density matrices."""
    states = list(states)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if not states or len(states) != w.size:
        raise InvariantError(f"{len(states)} states but {w.size} weights")
    if np.any(w < -tol.weights) or abs(w.sum() - 1.0) > tol.weights:
        raise InvariantError(f"weights must be a probability vector (sum={w.sum()!r})")
    dims = states[0].subsystem_dims
    d = int(np.prod(dims))
    rho = np.zeros((d, d), dtype=np.complex128)
    for wi, s in zip(w, states):
        if s.dim != d:
            raise InvariantError(f"dimension mismatch: {s.dim} vs {d}")
        if isinstance(s, Ket):
            v = s.vector
            rho += wi * np.outer(v, v.conj())
        else:
            rho += wi * s.entries
    return DensityMatrix(rho, dims, tol=tol)


def born_probability(rho: DensityMatrix, eigenstate: Ket) -> float:
    if rho.dim != eigenstate.dim:
        raise InvariantError(f"dimension mismatch: {rho.dim} vs {eigenstate.dim}")
    v = eigenstate.vector
    p = np.real(np.vdot(v, rho.entries @ v))
    return float(min(max(p, 0.0), 1.0))


def _kets(obs) -> list:
    if hasattr(obs, "kets"):
        return list(obs.kets())
    return list(obs)


def measure_all(rho: DensityMatrix, obs) -> np.ndarray:
    """Born probabilities for every eigenstate of ``obs``, unnormalised across k."""
    return np.array([born_probability(rho, k) for k in _kets(obs)])


def post_measurement_ensemble(probs, eigenstates: Sequence[Ket]) -> DensityMatrix:
    """Mixture of collapsed states.

    Probabilities are renormalised to sum to one, which matters only when the
    eigenstates are not a complete orthonormal set.
    """
    p = np.asarray(probs, dtype=np.float64).ravel()
    eigenstates = list(eigenstates)
    if p.size == 0 or not eigenstates:
        raise InvariantError("empty ensemble")
    if p.size != len(eigenstates):
        raise InvariantError(f"{p.size} probabilities but {len(eigenstates)} states")
    if np.any(p < 0) or p.sum() <= 0:
        raise InvariantError("probabilities must be non-negative with positive sum")
    return mix(eigenstates, p / p.sum())


def _partial_trace_array(rho: np.ndarray, dims: tuple, keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    keep = sorted(keep)
    t = rho.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out)
    d = int(np.prod([dims[i] for i in keep]))
    return reduced.reshape(d, d)


def partial_trace(rho: DensityMatrix, cut: SubsystemCut) -> DensityMatrix:
    dims = rho.subsystem_dims
    if len(dims) < 2:
        raise InvariantError("partial trace needs at least two subsystems")
    cut.validate_for(len(dims))
    keep = sorted(cut.keep)
    reduced = _partial_trace_array(rho.entries, dims, keep)
    return DensityMatrix(reduced, tuple(dims[i] for i in keep), check=rho.check, tol=rho.tol)


def purity(rho: DensityMatrix) -> float:
    r = rho.entries
    # tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.real(np.vdot(r, r)))


def is_separable_pure(k: Ket, cut: SubsystemCut, tol: float = 1e-8) -> bool:
    if len(k.subsystem_dims) < 2:
        raise InvariantError("ket has a single subsystem")
    cut.validate_for(len(k.subsystem_dims))
    if not cut.trace_out:
        raise InvariantError("cut must trace out at least one subsystem")
    return purity(partial_trace(pure_density(k), cut)) >= 1.0 - tol


def tensor_kets(kets: Iterable[Ket]) -> Ket:
    return reduce(tensor_ket, kets)


# -- serialisation --------------------------------------------------------------


def ket_to_json(k: Ket) -> dict:
    return {"moduli": k.moduli.tolist(), "args": k.arguments.tolist(), "dims": list(k.subsystem_dims)}


def ket_from_json(obj: dict) -> Ket:
    return Ket(obj["moduli"], obj["args"], obj.get("dims"))


def density_to_json(rho: DensityMatrix) -> dict:
    return {
        "dims": list(rho.subsystem_dims),
        "re": np.real(rho.entries).tolist(),
        "im": np.imag(rho.entries).tolist(),
    }


def density_from_json(obj: dict) -> DensityMatrix:
    return DensityMatrix(np.asarray(obj["re"]) + 1j * np.asarray(obj["im"]), obj["dims"])
