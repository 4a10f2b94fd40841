"""Dense operator toolkit: states, tensor structure and matrix functions.

Operators are plain complex ``numpy`` arrays.  Validation helpers enforce the
Hermiticity / positivity / normalisation invariants at the boundaries where
matrices enter the library; the functions themselves are pure.

Units: hbar = 1, energies and inverse times share a unit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

HERMITIAN_RTOL = 1e-12
EIG_FLOOR = 1e-14
POSITIVITY_TOL = 1e-10
TRACE_TOL = 1e-10
KMS_EXPONENT_LIMIT = 700.0


class NumericalFault(RuntimeError):
    """A dense linear-algebra routine failed or produced an unphysical result."""


class OverflowGuard(ValueError):
    """Input would overflow double-precision exponentials; rescale the problem."""


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermiticity_error(a: np.ndarray) -> float:
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)) / scale)


def is_hermitian(a, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermiticity_error(as_operator(a)) <= rtol


def check_hermitian(a, name: str = "operator", rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Return ``a`` as a complex array, rejecting non-Hermitian input.

    Input is never symmetrised: an asymmetric Hamiltonian is a model bug.
    """
    a = as_operator(a)
    err = hermiticity_error(a)
    if err > rtol:
        raise ValueError(f"{name} is not Hermitian (relative asymmetry {err:.3e})")
    return a


def check_density(rho, name: str = "state", tol: float = POSITIVITY_TOL) -> np.ndarray:
    rho = check_hermitian(rho, name)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"{name} has trace {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -tol:
        raise ValueError(f"{name} has negative eigenvalue {lo:.3e}")
    return rho


def is_density(rho, tol: float = POSITIVITY_TOL) -> bool:
    try:
        check_density(rho, tol=tol)
    except ValueError:
        return False
    return True


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def expectation(rho: np.ndarray, a: np.ndarray) -> float:
    """Tr(rho a) for Hermitian ``a`` (real part; the imaginary part is rounding)."""
    return float(np.einsum("ij,ji->", rho, a).real)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(rho - sigma)).sum())


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered tensor factors: system first, then reservoirs."""

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"factor dimensions must be positive, got {self.factor_dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    def __len__(self) -> int:
        return len(self.factor_dims)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex)


def tensor(*ops) -> np.ndarray:
    """Kronecker product, left factor most significant."""
    if not ops:
        raise ValueError("tensor() needs at least one operand")
    return reduce(np.kron, (as_operator(o) for o in ops))


def embed(op, slot: int, layout: SubsystemLayout) -> np.ndarray:
    """Place ``op`` on factor ``slot`` with identities elsewhere."""
    op = as_operator(op)
    n = len(layout)
    if not 0 <= slot < n:
        raise IndexError(f"slot {slot} out of range for {n} factors")
    if op.shape[0] != layout.factor_dims[slot]:
        raise ValueError(
            f"operator dim {op.shape[0]} does not match factor {slot} dim {layout.factor_dims[slot]}"
        )
    left = int(np.prod(layout.factor_dims[:slot]))
    right = int(np.prod(layout.factor_dims[slot + 1:]))
    out = op
    if left > 1:
        out = np.kron(identity(left), out)
    if right > 1:
        out = np.kron(out, identity(right))
    return out


def partial_trace(rho, keep: Iterable[int], layout: SubsystemLayout) -> np.ndarray:
    """Reduced density matrix on the factors in ``keep`` (in layout order)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one factor")
    n = len(layout)
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"keep {keep} out of range for {n} factors")
    rho = as_operator(rho)
    dims = layout.factor_dims
    t = rho.reshape(dims + dims)
    # trace out from the highest index down so axis numbering stays valid
    cur = n
    for ax in reversed(range(n)):
        if ax in keep:
            continue
        t = np.trace(t, axis1=ax, axis2=ax + cur)
        cur -= 1
    kd = int(np.prod([dims[k] for k in keep]))
    return t.reshape(kd, kd)


def eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFault(f"Hermitian eigendecomposition failed: {exc}") from exc


def hermitian_function(h: np.ndarray, f) -> np.ndarray:
    """f(h) through the spectral decomposition of Hermitian ``h``."""
    w, v = eigh(h)
    return (v * f(w)) @ v.conj().T


def expm_unitary(h, dt: float) -> np.ndarray:
    """exp(-i h dt) from the eigendecomposition of ``h``."""
    h = as_operator(h)
    if dt == 0:
        return identity(h.shape[0])
    w, v = eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def log_partition(h, beta: float) -> float:
    """log Tr exp(-beta h), shifted by the ground energy for overflow safety."""
    w = np.linalg.eigvalsh(as_operator(h))
    e0 = w.min()
    return float(-beta * e0 + np.log(np.exp(-beta * (w - e0)).sum()))


def gibbs_state(h, beta: float) -> np.ndarray:
    """exp(-beta h) / Tr exp(-beta h)."""
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta}")
    h = check_hermitian(h, "Hamiltonian")
    w, v = eigh(h)
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    rho = (v * p) @ v.conj().T
    return 0.5 * (rho + rho.conj().T)


def matrix_log_regularized(rho, floor: float = EIG_FLOOR) -> np.ndarray:
    """log(rho) with eigenvalues clamped to ``floor`` before the logarithm."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    return hermitian_function(as_operator(rho), lambda w: np.log(np.maximum(w, floor)))


def von_neumann_entropy(rho, floor: float = EIG_FLOOR) -> float:
    w = np.linalg.eigvalsh(as_operator(rho))
    w = w[w > floor]
    return float(-(w * np.log(w)).sum())


def klein_gap(a, b, floor: float = EIG_FLOOR) -> float:
    """Tr[a (log a - log b) - (a - b)] for positive a, b; nonnegative by Klein's inequality."""
    a = check_hermitian(a, "first operand")
    b = check_hermitian(b, "second operand")
    wa, va = eigh(a)
    wb, vb = eigh(b)
    if wa.min() < -POSITIVITY_TOL or wb.min() < -POSITIVITY_TOL:
        raise ValueError("Klein gap needs positive semidefinite operands")
    wa = np.maximum(wa, 0.0)
    pos = wa > floor
    s_a = float(np.sum(wa[pos] * np.log(wa[pos])))
    # Tr(a log b) = sum_jk |<a_j|b_k>|^2 a_j log b_k
    overlap = np.abs(va.conj().T @ vb) ** 2
    cross = float(wa @ overlap @ np.log(np.maximum(wb, floor)))
    return s_a - cross - float(wa.sum() - wb.sum())


def kms_check(h, beta: float, a, b, t: float) -> float:
    """|w(a alpha^t(b)) - w(alpha^{t - i beta}(b) a)| for the Gibbs state w of h.

    Both sides are evaluated in the eigenbasis of ``h``; the imaginary time
    shift makes matrix elements grow like exp(beta * (E_m - E_n)), so the
    spectral spread is guarded against overflow.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    h = check_hermitian(h, "Hamiltonian")
    a = as_operator(a)
    b = as_operator(b)
    w, v = eigh(h)
    spread = beta * (w.max() - w.min())
    if beta * np.max(np.abs(w)) > KMS_EXPONENT_LIMIT or spread > KMS_EXPONENT_LIMIT:
        raise OverflowGuard(
            f"beta * spectral radius = {beta * np.max(np.abs(w)):.1f} exceeds {KMS_EXPONENT_LIMIT}; "
            "rescale the Hamiltonian or the temperature"
        )
    aa = v.conj().T @ a @ v
    bb = v.conj().T @ b @ v
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    diff = w[:, None] - w[None, :]
    b_t = bb * np.exp(1j * t * diff)
    b_shift = bb * np.exp(1j * (t - 1j * beta) * diff)
    lhs = np.sum(p * np.diag(aa @ b_t))
    rhs = np.sum(p * np.diag(b_shift @ aa))
    return float(abs(lhs - rhs))


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (x + x.conj().T)


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Normalised Gram matrix G G^dag / Tr(G G^dag)."""
    k = n if rank is None else rank
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return 0.5 * (rho + rho.conj().T)


def pure_state(vec: Sequence[complex]) -> np.ndarray:
    psi = np.asarray(vec, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def expm(a: np.ndarray) -> np.ndarray:
    """General (non-Hermitian) matrix exponential, used for superoperators."""
    return linalg.expm(a)
