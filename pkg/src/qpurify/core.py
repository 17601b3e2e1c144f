"""Fixed-size linear algebra for one and two qubits.

Single-qubit objects are 2x2 complex arrays in the basis (|up>, |down>).
Two-qubit objects are 4x4 complex arrays in the basis

    |up,up>, |up,down>, |down,up>, |down,down>

with qubit X (the measured one) as the first tensor factor and qubit S
(the one being purified) as the second, i.e. ``np.kron(x_op, s_op)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UP = np.array([1.0, 0.0], dtype=complex)
DOWN = np.array([0.0, 1.0], dtype=complex)
RHO_UP = np.outer(UP, UP.conj())
RHO_DOWN = np.outer(DOWN, DOWN.conj())
ID2 = np.eye(2, dtype=complex)
ID4 = np.eye(4, dtype=complex)

DEGENERACY_TOL = 1e-8


class EmptyStateError(ValueError):
    """Raised when a diagnostic is requested for a zero-trace state."""


class NearDegenerate(ArithmeticError):
    """Eigenvalues too close for a stable biorthogonal expansion."""


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def ket(*amps) -> np.ndarray:
    return np.asarray(amps, dtype=complex)


def is_density(rho: np.ndarray, tol: float = 1e-10) -> bool:
    """Whether ``rho`` is an (optionally subnormalized) qubit density matrix."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2) or not np.all(np.isfinite(rho)):
        return False
    if np.max(np.abs(rho - dagger(rho))) > tol:
        return False
    evals = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    if evals.min() < -tol:
        return False
    tr = np.trace(rho).real
    return bool(0.0 < tr <= 1.0 + tol)


def _trace(rho: np.ndarray) -> float:
    tr = np.trace(rho).real
    if not tr > 0.0:
        raise EmptyStateError("empty state")
    return tr


def purity(rho: np.ndarray) -> float:
    """tr(rho^2) / tr(rho)^2, so unnormalized states are accepted."""
    tr = _trace(rho)
    return float(np.real(np.trace(rho @ rho)) / tr**2)


def fidelity_pure(rho: np.ndarray, psi: np.ndarray) -> float:
    """Overlap <psi|rho|psi> of the normalized state with the normalized ``psi``."""
    tr = _trace(rho)
    nrm = np.vdot(psi, psi).real
    if not nrm > 0.0:
        raise ValueError("zero vector")
    return float(np.real(np.vdot(psi, rho @ psi)) / (tr * nrm))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + dagger(d)))).sum())


def normalized(rho: np.ndarray) -> np.ndarray:
    return rho / _trace(rho)


def partial_trace_X(rho_xs: np.ndarray) -> np.ndarray:
    """Reduced state of S, tracing out the first (X) factor."""
    return np.einsum("ijik->jk", np.asarray(rho_xs).reshape(2, 2, 2, 2))


def measurement_vector(alpha: complex) -> np.ndarray:
    """Normalized ``(alpha|up> + |down>)`` on X; infinite alpha means ``|up>``."""
    if np.isinf(alpha):
        return UP.copy()
    alpha = complex(alpha)
    return np.array([alpha, 1.0], dtype=complex) / math.sqrt(1.0 + abs(alpha) ** 2)


def project_X(rho_xs: np.ndarray, alpha: complex) -> np.ndarray:
    """<a|rho_XS|a>_X for the normalized measurement vector ``a``.

    The result is the unnormalized state of S conditioned on finding X in
    ``a``; its trace is the success probability of that outcome.
    """
    a = measurement_vector(alpha)
    return project_X_vec(rho_xs, a)


def project_X_vec(rho_xs: np.ndarray, a: np.ndarray) -> np.ndarray:
    r = np.asarray(rho_xs).reshape(2, 2, 2, 2)
    return np.einsum("i,isjt,j->st", a.conj(), r, a)


def tensor_X(x_vec: np.ndarray, rho_s: np.ndarray) -> np.ndarray:
    """|x><x| (X) rho_S as a 4x4 matrix."""
    return np.kron(np.outer(x_vec, x_vec.conj()), rho_s)


def project_op_X(op4: np.ndarray, a: np.ndarray) -> np.ndarray:
    """<a|op|a>_X: a 2x2 operator on S from a 4x4 operator."""
    return project_X_vec(op4, a)


@dataclass(frozen=True)
class EigensystemV:
    """Eigenvalues and biorthonormal eigenvectors of a 2x2 matrix.

    ``u1``/``u2`` are unit right eigenvectors (kets). ``v1``/``v2`` hold the
    components of the left eigenvectors as bras, so ``v_i @ m == lam_i * v_i``
    and ``v_i @ u_j == delta_ij`` with no conjugation involved.
    """

    lambda1: complex
    lambda2: complex
    u1: np.ndarray
    u2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    @property
    def gap(self) -> float:
        return abs(self.lambda1) - abs(self.lambda2)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2])

    @property
    def U(self) -> np.ndarray:
        """Right eigenvectors as columns."""
        return np.column_stack([self.u1, self.u2])

    @property
    def Vl(self) -> np.ndarray:
        """Left eigenvectors (bras) as rows."""
        return np.vstack([self.v1, self.v2])

    def Lambda(self) -> np.ndarray:
        """Matrix of products lam_a * conj(lam_b)."""
        lam = self.lambdas
        out = np.outer(lam, lam.conj())
        # the diagonal is |lam_a|^2, exactly real
        np.fill_diagonal(out, np.abs(lam) ** 2)
        return out

    def power(self, k: int) -> np.ndarray:
        return (self.U * self.lambdas**k) @ self.Vl


def _fix_phase(u: np.ndarray) -> np.ndarray:
    u = u / np.linalg.norm(u)
    i = int(np.argmax(np.abs(u)))
    return u * (abs(u[i]) / u[i])


def eig2(m: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL) -> EigensystemV:
    """Eigendecomposition of a (generally non-normal) 2x2 matrix.

    Eigenvalues come from the characteristic quadratic and are ordered by
    decreasing modulus; exact modulus ties are broken by real part, then
    imaginary part, so the ordering is deterministic.

    Raises:
        NearDegenerate: if ``|lam1 - lam2| < degeneracy_tol * max(|lam1|, 1)``.
    """
    m = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    (a, b), (c, d) = m
    tr = a + d
    disc = np.sqrt((a - d) ** 2 + 4 * b * c + 0j)
    # avoid cancellation in the smaller root
    q = 0.5 * (tr + disc) if abs(tr + disc) >= abs(tr - disc) else 0.5 * (tr - disc)
    det = a * d - b * c
    r1 = q
    r2 = det / q if q != 0 else 0.5 * (tr - disc)
    roots = sorted([r1, r2], key=lambda z: (-round(abs(z), 13), -z.real, -z.imag))
    lam1, lam2 = complex(roots[0]), complex(roots[1])
    if abs(lam1 - lam2) < degeneracy_tol * max(abs(lam1), 1.0):
        raise NearDegenerate(f"eigenvalues {lam1} and {lam2} nearly coincide")

    us = []
    for lam in (lam1, lam2):
        # null vector of (m - lam): use the better-conditioned row
        r0 = np.array([a - lam, b])
        r1_ = np.array([c, d - lam])
        row = r0 if np.linalg.norm(r0) >= np.linalg.norm(r1_) else r1_
        u = np.array([-row[1], row[0]], dtype=complex)
        us.append(_fix_phase(u))
    U = np.column_stack(us)
    Vl = np.linalg.inv(U)
    return EigensystemV(lam1, lam2, us[0], us[1], Vl[0].copy(), Vl[1].copy())


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics after ``n`` successful measurements.

    ``rho`` is the normalized state; ``trace`` (the cumulative success
    probability) is carried separately, together with its logarithm, which
    stays finite when the probability itself underflows.
    """

    n: int
    rho: np.ndarray
    trace: float
    log_trace: float
    purity: float
    fid_u1: float
    fid_down: float
    F: float = math.nan
    G: float = math.nan

    @property
    def rho_unnormalized(self) -> np.ndarray:
        return self.trace * self.rho


@dataclass
class Trajectory:
    steps: list

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i) -> StepRecord:
        return self.steps[i]

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])


def run_trajectory(rho0, n, step, target=None, fg=None) -> Trajectory:
    """Iterate a linear, trace-nonincreasing ``step`` map ``n`` times.

    The state is renormalized after every step and the accumulated
    log-trace carried alongside, so long runs do not underflow; the
    unnormalized state is ``exp(log_trace) * rho``. ``fg`` optionally maps
    a normalized state to its (F, G) feeding weights, which are rescaled by
    the trace before being recorded.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rho = np.asarray(rho0, dtype=complex).copy()
    log_tr = math.log(_trace(rho))
    rho = rho / _trace(rho)
    steps = []
    for k in range(n + 1):
        scale = math.exp(log_tr)
        F = G = math.nan
        if fg is not None:
            F, G = fg(rho)
            F, G = F * scale, G * scale
        rec = StepRecord(
            n=k,
            rho=rho,
            trace=scale,
            log_trace=log_tr,
            purity=float(np.real(np.trace(rho @ rho))),
            fid_u1=fidelity_pure(rho, target) if target is not None else math.nan,
            fid_down=float(rho[1, 1].real),
            F=F,
            G=G,
        )
        steps.append(rec)
        if k == n:
            break
        nxt = step(rho)
        tr = np.trace(nxt).real
        if not tr > 0.0:
            raise EmptyStateError(f"success probability vanished at step {k + 1}")
        log_tr += math.log(tr)
        rho = nxt / tr
    return Trajectory(steps)
