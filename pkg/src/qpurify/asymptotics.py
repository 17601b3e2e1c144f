"""Large-N behaviour of the dissipative scheme.

The second term of the exact rho_N is dominated by index sets that repeat a
single pair (ij). Collecting those gives the column vectors M_11, M_22,
M_12, from which three regimes follow:

* weak dissipation, N gamma tau << 1: the normalized state is close to
  |u1><u1| with corrections O(gamma tau, |lam2/lam1|^N);
* intermediate N, 1/(gamma tau) < N < 1/(gamma tau)^2: the off-dominant
  coefficients stop shrinking and the state stays mixed;
* strong dissipation, gamma tau >> 1: G vanishes and only the upper
  components of the C, d tensors survive.

Direct iteration is always the reference; nothing here is used to validate
the iteration itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .closedform import CoefficientTensors, _sandwich, series_Ak_bk, tensors
from .core import RHO_DOWN, EigensystemV, NearDegenerate, dagger, eig2, fidelity_pure
from .dissipative import DissipativeParams, build_projected_map, iterate

WEAK_MAX_GAMMA_TAU = 0.1
# n * gamma tau allowed in the weak regime ("N gamma tau << 1" taken loosely)
WEAK_MAX_N_GAMMA_TAU = 1.0
STRONG_MIN_GAMMA_TAU = 5.0
YIELD_FACTOR_TOL = 3.0
SINGULAR_COND = 1e12

__all__ = [
    "SingularResummation",
    "RegimeReport",
    "M_resummed",
    "M_direct",
    "predict_weak",
    "predict_intermediate",
    "strong_limit_state",
    "fidelity_curve",
    "peak_fidelity",
    "offdiagonal_limit_matrix",
    "yield_estimate",
    "dominant_fraction",
    "RegimeError",
]


class SingularResummation(ArithmeticError):
    """A matrix inverted by the resummed formulas is (numerically) singular."""


class RegimeError(ValueError):
    """Parameters lie outside the regime an approximation is meant for."""


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    M11: np.ndarray
    M22: np.ndarray
    M12: np.ndarray
    rho_pred: np.ndarray
    fid_u1_pred: float
    yield_pred: float
    mixed_floor: bool = False
    offdominant_ratio: float = math.nan


def _inv(m: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(m)) or np.linalg.cond(m) > SINGULAR_COND:
        raise SingularResummation(f"{what} is singular")
    return np.linalg.inv(m)


def _geometric_b0(lam: complex, A0: np.ndarray, b0: np.ndarray, n: int) -> np.ndarray:
    """(lam - A0)^-1 (lam^N - A0^N) b0."""
    I = np.eye(2)
    inv = _inv(lam * I - A0, "Lambda - A_0")
    return inv @ (lam**n * I - np.linalg.matrix_power(A0, n)) @ b0


def _binomial_poly(C: np.ndarray, lam: complex, n: int) -> np.ndarray:
    """-C^-1 (1 + C/lam) [1 - (1 + C/lam)^(N-1)] as a polynomial in C.

    C is rank one, so C^-1 is never applied literally: the bracket carries a
    factor of C that cancels it exactly.
    """
    I = np.eye(2, dtype=complex)
    # C^-1 [(1 + C/lam)^(N-1) - 1] = sum_{j>=1} binom(N-1, j) C^(j-1) / lam^j
    acc = np.zeros((2, 2), dtype=complex)
    cp = I.copy()
    for j in range(1, n):
        acc = acc + math.comb(n - 1, j) * cp / lam**j
        cp = cp @ C
    return (I + C / lam) @ acc


def _tail_term(C: np.ndarray, lam_a: complex, lam_b: complex, n: int) -> np.ndarray:
    """C (1 - C/lam_a)^-1 [1 - (C/lam_b)^(N-1)]."""
    I = np.eye(2, dtype=complex)
    inv = _inv(I - C / lam_a, "1 - C/Lambda")
    return C @ inv @ (I - np.linalg.matrix_power(C / lam_b, n - 1))


def M_resummed(t: CoefficientTensors, eig: EigensystemV, n: int):
    """Dominant-index vectors M_11, M_22, M_12 in resummed form.

    Raises:
        SingularResummation: if Lambda - A_0 or 1 - C/Lambda cannot be inverted.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    A0, b0 = series_Ak_bk(t, 0)
    L = t.Lambda
    I = np.eye(2, dtype=complex)
    out = []
    for i, j in ((0, 0), (0, 1)):
        lam, C, d = L[i, j], t.C[i, j], t.d[i, j]
        if lam == 0:
            raise SingularResummation("Lambda vanishes")
        m = _geometric_b0(lam, A0, b0, n)
        m = m + lam**n * _binomial_poly(C, lam, n) @ d
        m = m - lam ** (n - 2) * _tail_term(C, lam, lam, n) @ d
        out.append(m)
    M11, M12 = out

    l11, l22 = L[0, 0], L[1, 1]
    C, d = t.C[0, 0], t.d[0, 0]
    if l22 == 0 or l11 == 0:
        raise SingularResummation("Lambda vanishes")
    x = I + C / l11
    frac = x @ _inv(x - (l22 / l11) * I, "1 + C/L11 - L22/L11")
    first = frac @ ((l11 / l22) ** (n - 1) * np.linalg.matrix_power(x, n - 1) - I)
    y = C / l22
    second = y @ _inv(I - y, "1 - C/L22") @ (I - np.linalg.matrix_power(y, n - 1))
    M22 = _geometric_b0(l22, A0, b0, n) + l22 ** (n - 1) * (first - second) @ d
    return M11, M22, M12


def M_direct(t: CoefficientTensors, n: int):
    """The same vectors from their defining finite sums (no inverses)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    A0, b0 = series_Ak_bk(t, 0)
    L = t.Lambda

    def first(lam):
        return sum(
            lam ** (n - 1 - l) * np.linalg.matrix_power(A0, l) @ b0 for l in range(n)
        )

    def second(lam, C, d, ratio=1.0):
        acc = np.zeros(2, dtype=complex)
        for l in range(n):
            cl = np.linalg.matrix_power(C, l) @ d
            for k in range(l + 1, n):
                acc = acc + math.comb(k, l) * lam ** (n - 1 - l) * ratio ** (k - l) * cl
        return acc

    M11 = first(L[0, 0]) + second(L[0, 0], t.C[0, 0], t.d[0, 0])
    M12 = first(L[0, 1]) + second(L[0, 1], t.C[0, 1], t.d[0, 1])
    M22 = first(L[1, 1]) + second(L[1, 1], t.C[0, 0], t.d[0, 0], L[0, 0] / L[1, 1])
    return M11, M22, M12


def _assemble(t: CoefficientTensors, eig: EigensystemV, M11, M22, M12) -> np.ndarray:
    """Second term of rho_N from the M vectors, including the h.c. partner."""
    pm = build_projected_map(t.params)
    md = _sandwich(eig, RHO_DOWN)
    ma = _sandwich(eig, pm.rho_astar)
    u1, u2 = eig.u1, eig.u2

    def w(i, j, m):
        return md[i, j] * m[0] + ma[i, j] * m[1]

    out = np.outer(u1, u1.conj()) * w(0, 0, M11) + np.outer(u2, u2.conj()) * w(1, 1, M22)
    off = np.outer(u1, u2.conj()) * w(0, 1, M12)
    return out + off + dagger(off)


def yield_estimate(eig: EigensystemV, gamma_tau: float, n: int) -> float:
    """(1 + N gamma tau) Lambda_11^N: order of the success probability."""
    return float((1.0 + n * gamma_tau) * abs(eig.lambda1) ** (2 * n))


def _eig_and_tensors(p: DissipativeParams, rho0):
    eig = eig2(build_projected_map(p).v)
    return eig, tensors(eig, p, rho0)


def predict_weak(t: CoefficientTensors, eig: EigensystemV, n: int) -> RegimeReport:
    """Dominant-pure-state prediction for weak dissipation.

    The M vectors use their leading small-gamma-tau forms and the predicted
    state is |u1><u1|; ``fid_u1_pred`` is one minus the size of the
    correction, gamma tau + |lam2/lam1|^(2N). The squared ratio is the weight
    of |u2><u2| relative to |u1><u1| in the coherent part of rho_N.
    """
    gt = t.params.gamma_tau
    if not gt < WEAK_MAX_GAMMA_TAU:
        raise RegimeError(f"gamma tau >= {WEAK_MAX_GAMMA_TAU}: use predict_intermediate or strong")
    if n * gt > WEAK_MAX_N_GAMMA_TAU:
        raise RegimeError("n gamma tau > 1: use predict_intermediate")
    if n < 1:
        raise ValueError("n must be >= 1")
    L = t.Lambda
    M11 = (n - 1) * L[0, 0] ** (n - 1) * t.d[0, 0]
    M22 = L[0, 0] ** (n - 1) * t.d[0, 0]
    M12 = (n - 1) * L[0, 1] ** (n - 1) * t.d[0, 1]
    ratio = abs(eig.lambda2 / eig.lambda1) if eig.lambda1 != 0 else 1.0
    fid = min(1.0, max(0.0, 1.0 - (gt + ratio ** (2 * n))))
    return RegimeReport(
        regime="weak",
        M11=M11,
        M22=M22,
        M12=M12,
        rho_pred=np.outer(eig.u1, eig.u1.conj()),
        fid_u1_pred=fid,
        yield_pred=yield_estimate(eig, gt, n),
    )


def _phi_apply(C: np.ndarray, a: complex, d: np.ndarray) -> np.ndarray:
    """C^-1 (exp(a C) - 1) d without inverting C (block-exponential trick)."""
    blk = np.zeros((3, 3), dtype=complex)
    blk[:2, :2] = a * C
    blk[:2, 2] = d
    return a * expm(blk)[:2, 2]


def predict_intermediate(t: CoefficientTensors, eig: EigensystemV, n: int) -> RegimeReport:
    """Exponentiated M vectors for 1/(gamma tau) < N < 1/(gamma tau)^2.

    The C^-1 exp(...) factors are taken with the constant part removed,
    C^-1 (exp(...) - 1), which is what the resummed forms reduce to and stays
    finite for the rank-one C. The report always sets ``mixed_floor``: the
    off-dominant coefficients do not decay in this regime.
    """
    gt = t.params.gamma_tau
    if gt <= 0:
        raise RegimeError("gamma = 0: the intermediate regime is empty")
    if not (1.0 / gt < n < 1.0 / gt**2):
        raise RegimeError("need 1/(gamma tau) < n < 1/(gamma tau)^2")
    L = t.Lambda
    l11, l12 = L[0, 0], L[0, 1]
    M11 = l11**n * _phi_apply(t.C[0, 0], (n - 1) / l11, t.d[0, 0])
    M22 = l11 ** (n - 1) * expm((n - 1) * t.C[0, 0] / l11) @ t.d[0, 0]
    M12 = l12**n * _phi_apply(t.C[0, 1], (n - 1) / l12, t.d[0, 1])
    first = eig.U @ (_sandwich(eig, t.rho0) * L**n) @ dagger(eig.U)
    rho = first + _assemble(t, eig, M11, M22, M12)
    rho = 0.5 * (rho + dagger(rho))
    tr = np.trace(rho).real
    fid = math.nan
    if tr > 0:
        fid = min(1.0, max(0.0, fidelity_pure(rho, eig.u1)))
    pm = build_projected_map(t.params)
    md, ma = _sandwich(eig, RHO_DOWN), _sandwich(eig, pm.rho_astar)
    w11 = abs(md[0, 0] * M11[0] + ma[0, 0] * M11[1])
    w22 = abs(md[1, 1] * M22[0] + ma[1, 1] * M22[1])
    return RegimeReport(
        regime="intermediate",
        M11=M11,
        M22=M22,
        M12=M12,
        rho_pred=rho / tr if tr > 0 else rho,
        fid_u1_pred=fid,
        yield_pred=yield_estimate(eig, gt, n),
        mixed_floor=True,
        offdominant_ratio=w22 / w11 if w11 > 0 else math.inf,
    )


def strong_limit_state(rho0: np.ndarray, p: DissipativeParams, n: int) -> np.ndarray:
    """Strong-dissipation form of the unnormalized rho_N.

    Keeps the coherent term sum_ij Lam_ij^N |u_i><v_i|rho0|v_j><u_j| and the
    surviving upper components of the C, d products:

        N |lam1|^2 [ |u1><u1| <v1|dd|v1> c11^(N-2) d11
                   + (|u1><u2| <v1|dd|v2> c12^(N-2) d12 + h.c.)
                   + |u2><u2| <v2|dd|v2> c11^(N-2) d11 + dd c11^(N-2) d11 ]

    with dd = |down><down|, c_ab = (C^ab)_11 and d_ab = (d^ab)_1.
    """
    if p.gamma_tau < STRONG_MIN_GAMMA_TAU:
        raise RegimeError(f"gamma tau < {STRONG_MIN_GAMMA_TAU}: not in the strong regime")
    if n < 2:
        raise ValueError("n must be >= 2")
    rho0 = np.asarray(rho0, dtype=complex)
    eig, t = _eig_and_tensors(p, rho0)
    L = t.Lambda
    md = _sandwich(eig, RHO_DOWN)
    u1, u2 = eig.u1, eig.u2
    c11, d11 = t.C[0, 0][0, 0], t.d[0, 0][0]
    c12, d12 = t.C[0, 1][0, 0], t.d[0, 1][0]
    s11 = c11 ** (n - 2) * d11
    s12 = c12 ** (n - 2) * d12
    off = np.outer(u1, u2.conj()) * md[0, 1] * s12
    bracket = (
        np.outer(u1, u1.conj()) * md[0, 0] * s11
        + off
        + dagger(off)
        + np.outer(u2, u2.conj()) * md[1, 1] * s11
        + RHO_DOWN * s11
    )
    first = eig.U @ (_sandwich(eig, rho0) * L**n) @ dagger(eig.U)
    out = first + n * abs(eig.lambda1) ** 2 * bracket
    return 0.5 * (out + dagger(out))


def fidelity_curve(rho0: np.ndarray, p: DissipativeParams, n_max: int, target=None):
    """(n, fid_u1, purity, trace) for n = 0..n_max from direct iteration."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    traj = iterate(rho0, p, n_max, target=target)
    return [(s.n, s.fid_u1, s.purity, s.trace) for s in traj.steps]


def peak_fidelity(curve) -> tuple[int, float]:
    """First n at which fid_u1 is maximal, with that fidelity."""
    best = max(curve, key=lambda row: (row[1], -row[0]))
    return best[0], best[1]


def offdiagonal_limit_matrix(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """(|u1><u2| + |u2><u1|) / (<u2|u1> + <u1|u2>)."""
    num = np.outer(u1, u2.conj()) + np.outer(u2, u1.conj())
    den = np.vdot(u2, u1) + np.vdot(u1, u2)
    if abs(den) < 1e-14:
        raise ZeroDivisionError("u1 and u2 are orthogonal (up to phase)")
    return num / den


def dominant_fraction(rho0: np.ndarray, p: DissipativeParams, n: int) -> float:
    """|S_11 restricted to dominant index sets - S_11| / |S_11| at step n."""
    from .closedform import second_term_sums

    try:
        eig, t = _eig_and_tensors(p, rho0)
    except NearDegenerate:
        return math.nan
    full = second_term_sums(t, n)[0, 0]
    dom = second_term_sums(t, n, dominant_only=True)[0, 0]
    nrm = np.linalg.norm(full)
    return float(np.linalg.norm(dom - full) / nrm) if nrm > 0 else 0.0
