"""Exact N-step state of the dissipative scheme through the eigenvectors of V.

With V = sum_a lam_a |u_a><v_a| the feeding weights F(rho_k), G(rho_k) obey a
linear recursion whose coefficients are built from the tensors C^{ab}, d^{ab}
and the products Lam_ab = lam_a conj(lam_b). Solving the recursion leaves
nested geometric sums

    sum_{k_1..k_l} x_1^{k_1} ... x_l^{k_l} x_{l+1}^{k-l-k_1-...-k_l}
        = sum_m x_m^k / prod_{n != m} (x_m - x_n),

which are evaluated in closed form wherever the points are distinct.

Index conventions: arrays are 0-based, so ``C[a, b]`` is C^{(a+1)(b+1)}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import RHO_DOWN, EigensystemV, NearDegenerate, dagger, eig2
from .dissipative import DissipativeParams, ProjectedMap, build_projected_map, coefficients_FG

NESTED_BRUTE_MAX_L = 6
NESTED_BRUTE_MAX_K = 25
CLOSED_MAX_N = 12
# relative separation below which the engine stops using the pole formula
ENGINE_CONFLUENT_TOL = 1e-3

PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

__all__ = [
    "ConfluentPoints",
    "CoefficientTensors",
    "FGSeries",
    "tensors",
    "series_Ak_bk",
    "direct_Ak_bk",
    "fg_by_recursion",
    "fg_by_direct_recursion",
    "nested_sum_brute",
    "nested_sum_closed",
    "fg_closed",
    "fg_closed_series",
    "rhoN_closed",
    "rhoN_closed_series",
    "rhoN_by_recursion",
    "composition_count",
    "second_term_sums",
]


class ConfluentPoints(ArithmeticError):
    """Two nodes of the divided-difference formula (nearly) coincide."""


@dataclass(frozen=True)
class CoefficientTensors:
    """C^{ab} (2x2), d^{ab} (2-vector) and Lam_ab for one initial state.

    Row 0 of C and entry 0 of d feed F, row 1 and entry 1 feed G; column 0
    of C is the response to |down><down|, column 1 to |alpha*><alpha*|.
    """

    C: np.ndarray  # (2, 2, 2, 2): [a, b, i, j]
    d: np.ndarray  # (2, 2, 2): [a, b, i]
    Lambda: np.ndarray  # (2, 2)
    eig: EigensystemV
    params: DissipativeParams
    rho0: np.ndarray

    def C_ab(self, a: int, b: int) -> np.ndarray:
        """C^{ab} with the 1-based indices used in the formulas."""
        return self.C[a - 1, b - 1]

    def d_ab(self, a: int, b: int) -> np.ndarray:
        return self.d[a - 1, b - 1]


@dataclass(frozen=True)
class FGSeries:
    F: np.ndarray
    G: np.ndarray

    def __len__(self) -> int:
        return len(self.F)

    def pair(self, k: int) -> np.ndarray:
        return np.array([self.F[k], self.G[k]])


def _sandwich(es: EigensystemV, op: np.ndarray) -> np.ndarray:
    """M[a, b] = <v_a| op |v_b> with |v_b> the ket dual to the bra v_b."""
    Vl = es.Vl
    return Vl @ op @ dagger(Vl)


def tensors(eig: EigensystemV, p: DissipativeParams, rho0: np.ndarray) -> CoefficientTensors:
    pm = build_projected_map(p)
    fa, fu = pm.f_coeffs
    gu = pm.g_coeff
    U = eig.U
    astar = pm.astar_vec
    pa = astar.conj() @ U  # <a*|u_a>
    pu = U[0, :]  # <up|u_a>
    wa = np.outer(pa, pa.conj())  # <a*|u_a><u_b|a*>
    wu = np.outer(pu, pu.conj())
    kf = fa * wa + fu * wu
    kg = gu * wu
    rho0 = np.asarray(rho0, dtype=complex)
    m_down = _sandwich(eig, RHO_DOWN)
    m_astar = _sandwich(eig, pm.rho_astar)
    m_rho0 = _sandwich(eig, rho0)
    C = np.empty((2, 2, 2, 2), dtype=complex)
    C[:, :, 0, 0] = kf * m_down
    C[:, :, 0, 1] = kf * m_astar
    C[:, :, 1, 0] = kg * m_down
    C[:, :, 1, 1] = kg * m_astar
    d = np.empty((2, 2, 2), dtype=complex)
    d[:, :, 0] = kf * m_rho0
    d[:, :, 1] = kg * m_rho0
    return CoefficientTensors(C, d, eig.Lambda(), eig, p, rho0)


def series_Ak_bk(t: CoefficientTensors, k: int) -> tuple[np.ndarray, np.ndarray]:
    if k < 0:
        raise ValueError("k must be >= 0")
    w = t.Lambda**k
    return np.einsum("ab,abij->ij", w, t.C), np.einsum("ab,abi->i", w, t.d)


def direct_Ak_bk(p: DissipativeParams, rho0: np.ndarray, k: int):
    """Recursion coefficients assembled from explicit powers of V."""
    pm = build_projected_map(p)
    vk = np.linalg.matrix_power(pm.v, k)

    def fg_of(op):
        return np.array(pm.fg(vk @ op @ dagger(vk)))

    A = np.column_stack([fg_of(RHO_DOWN), fg_of(pm.rho_astar)])
    return A, fg_of(np.asarray(rho0, dtype=complex))


def _solve_recursion(As, bs, n: int) -> np.ndarray:
    """X_N = sum_{k<N} A_{N-1-k} X_k + b_N for N = 0..n."""
    X = np.zeros((n + 1, 2), dtype=complex)
    for N in range(n + 1):
        acc = np.array(bs[N], dtype=complex)
        for k in range(N):
            acc = acc + As[N - 1 - k] @ X[k]
        X[N] = acc
    return X


def _real(z: np.ndarray, what: str, tol: float = 1e-9) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(z)))) if np.size(z) else 1.0
    if np.size(z) and np.max(np.abs(np.imag(z))) > tol * scale:
        raise ArithmeticError(f"{what} has a non-negligible imaginary part")
    return np.real(z)


def fg_by_recursion(t: CoefficientTensors, n: int) -> FGSeries:
    """F(rho_N), G(rho_N) for N = 0..n from the O(n^2) recursion.

    The N = 0 seed is computed directly from rho0 and must agree with b_0.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    seed = np.array(coefficients_FG(t.rho0, t.params))
    As, bs = zip(*(series_Ak_bk(t, k) for k in range(n + 1)))
    if np.max(np.abs(bs[0] - seed)) > 1e-10 * max(1.0, np.max(np.abs(seed))):
        raise ArithmeticError("b_0 disagrees with F(rho0), G(rho0)")
    X = _solve_recursion(As, bs, n)
    X[0] = seed
    X = _real(X, "F/G series")
    return FGSeries(X[:, 0].copy(), X[:, 1].copy())


def fg_by_direct_recursion(p: DissipativeParams, rho0: np.ndarray, n: int) -> FGSeries:
    """Same recursion with coefficients from powers of V (no eigenvectors)."""
    As, bs = zip(*(direct_Ak_bk(p, rho0, k) for k in range(n + 1)))
    X = np.real(_solve_recursion(As, bs, n))
    return FGSeries(X[:, 0].copy(), X[:, 1].copy())


def nested_sum_brute(xs, k: int) -> complex:
    """Literal nested summation of x_1^{k_1} ... x_{l+1}^{k - l - sum k_i}."""
    xs = [complex(x) for x in xs]
    ell = len(xs) - 1
    if ell < 0 or k < ell:
        raise ValueError("need at least one point and k >= l")
    if ell > NESTED_BRUTE_MAX_L or k > NESTED_BRUTE_MAX_K:
        raise ValueError(
            f"brute nested sum limited to l <= {NESTED_BRUTE_MAX_L}, k <= {NESTED_BRUTE_MAX_K}"
        )

    def rec(i: int, remaining: int) -> complex:
        if i == ell:
            return xs[ell] ** remaining
        return sum(xs[i] ** ki * rec(i + 1, remaining - ki) for ki in range(remaining + 1))

    return rec(0, k - ell)


def _check_distinct(xs, tol: float) -> None:
    scale = max((abs(x) for x in xs), default=0.0)
    for x, y in itertools.combinations(xs, 2):
        if abs(x - y) <= tol * scale:
            raise ConfluentPoints(f"points {x} and {y} are confluent")


def nested_sum_closed(xs, k: int, tol: float = 1e-8) -> complex:
    """sum_m x_m^k / prod_{n != m}(x_m - x_n).

    Raises:
        ConfluentPoints: if two points are closer than ``tol * max|x|``.
    """
    xs = [complex(x) for x in xs]
    if not xs or k < len(xs) - 1:
        raise ValueError("need at least one point and k >= l")
    _check_distinct(xs, tol)
    total = 0j
    for m, xm in enumerate(xs):
        den = 1 + 0j
        for n, xn in enumerate(xs):
            if n != m:
                den *= xm - xn
        total += xm**k / den
    return total


def _h_multiset(values, counts, n: int) -> complex:
    """Complete homogeneous sum of degree n over points with multiplicities.

    Equivalent to the nested sum over the expanded point list, evaluated by
    multiplying geometric series rather than through the pole formula.
    """
    if n < 0:
        return 0j
    h = np.zeros(n + 1, dtype=complex)
    h[0] = 1.0
    for x, m in zip(values, counts):
        for _ in range(m):
            for j in range(1, n + 1):
                h[j] += x * h[j - 1]
    return complex(h[n])


def composition_count(n: int, l: int) -> int:
    """Ways to place N-1-l identical balls in l+2 boxes, i.e. binomial(N, l+1)."""
    if not (0 <= l <= n - 1):
        raise ValueError("need 0 <= l <= n-1")
    return math.comb(n, l + 1)


def _ordered_products(t: CoefficientTensors, lmax: int) -> list:
    """Grouped products C^{a_1 b_1} ... C^{a_l b_l} d^{a_{l+1} b_{l+1}}.

    Entry ``l`` maps a count vector (how often each of the four index pairs
    occurs among the l+1 slots) to the sum of the products over all
    orderings with those counts. The nested sums depend on the index pairs
    only through these counts.
    """
    Cs = [t.C[a, b] for a, b in PAIRS]
    level = {}
    for i, (a, b) in enumerate(PAIRS):
        c = [0, 0, 0, 0]
        c[i] = 1
        level[tuple(c)] = t.d[a, b].copy()
    out = [level]
    for _ in range(lmax):
        nxt: dict = {}
        for cnt, vec in level.items():
            for i in range(4):
                c = list(cnt)
                c[i] += 1
                key = tuple(c)
                nxt[key] = nxt.get(key, 0) + Cs[i] @ vec
        out.append(nxt)
        level = nxt
    return out


def _group_points(t: CoefficientTensors, counts):
    lam = [t.Lambda[a, b] for a, b in PAIRS]
    vals = [lam[i] for i in range(4) if counts[i]]
    mult = [counts[i] for i in range(4) if counts[i]]
    return vals, mult


def _nested_group(vals, mult, k: int, ell: int) -> complex:
    if all(m == 1 for m in mult):
        try:
            return nested_sum_closed(vals, k, tol=ENGINE_CONFLUENT_TOL)
        except ConfluentPoints:
            pass
    return _h_multiset(vals, mult, k - ell)


def fg_closed_series(t: CoefficientTensors, kmax: int) -> FGSeries:
    if kmax > CLOSED_MAX_N:
        raise ValueError(f"k > {CLOSED_MAX_N}: use recursion path")
    prods = _ordered_products(t, kmax)
    X = np.zeros((kmax + 1, 2), dtype=complex)
    for k in range(kmax + 1):
        for ell in range(k + 1):
            for counts, vec in prods[ell].items():
                vals, mult = _group_points(t, counts)
                X[k] += _nested_group(vals, mult, k, ell) * vec
    X = _real(X, "closed-form F/G", tol=1e-8)
    return FGSeries(X[:, 0].copy(), X[:, 1].copy())


def fg_closed(t: CoefficientTensors, k: int) -> tuple[float, float]:
    """F(rho_k), G(rho_k) from the explicit multiple-sum formula."""
    if k < 0:
        raise ValueError("k must be >= 0")
    s = fg_closed_series(t, k)
    return float(s.F[k]), float(s.G[k])


def _sum_over_k(y: complex, vals, mult, N: int, ell: int) -> complex:
    """sum_{k=l}^{N-1} y^{N-1-k} h_{k-l}(points).

    Closed form (geometric sum per pole) when all nodes, including ``y``,
    are distinct; otherwise the equivalent complete homogeneous sum with
    ``y`` added as one more node.
    """
    if all(m == 1 for m in mult) and abs(y) > 0:
        try:
            _check_distinct(list(vals) + [y], ENGINE_CONFLUENT_TOL)
        except ConfluentPoints:
            pass
        else:
            total = 0j
            for m, xm in enumerate(vals):
                den = 1 + 0j
                for n, xn in enumerate(vals):
                    if n != m:
                        den *= xm - xn
                total += (y**N * (xm / y) ** ell - xm**N) / ((y - xm) * den)
            return total
    return _h_multiset(list(vals) + [y], list(mult) + [1], N - 1 - ell)


def _first_term(es: EigensystemV, rho0: np.ndarray, N: int) -> np.ndarray:
    m = _sandwich(es, rho0) * es.Lambda() ** N
    return es.U @ m @ dagger(es.U)


def second_term_sums(t: CoefficientTensors, N: int, prods=None, dominant_only=False):
    """S_ij = sum_{k<N} Lam_ij^{N-1-k} [F(rho_k), G(rho_k)] for each (i, j).

    With ``dominant_only`` only index sets with every pair equal to (1,1)
    (for ij = 11, 22) or to ij itself (for 12, 21) are kept.
    """
    if prods is None:
        prods = _ordered_products(t, max(N - 1, 0))
    S = np.zeros((2, 2, 2), dtype=complex)
    for i, j in PAIRS:
        y = t.Lambda[i, j]
        dom = PAIRS.index((0, 0)) if i == j else PAIRS.index((i, j))
        for ell in range(N):
            for counts, vec in prods[ell].items():
                if dominant_only and counts[dom] != ell + 1:
                    continue
                vals, mult = _group_points(t, counts)
                S[i, j] += _sum_over_k(y, vals, mult, N, ell) * vec
    return S


def _assemble_second(t: CoefficientTensors, S: np.ndarray) -> np.ndarray:
    es = t.eig
    pm = build_projected_map(t.params)
    md = _sandwich(es, RHO_DOWN)
    ma = _sandwich(es, pm.rho_astar)
    coef = md * S[:, :, 0] + ma * S[:, :, 1]
    return es.U @ coef @ dagger(es.U)


def rhoN_closed_series(rho0: np.ndarray, p: DissipativeParams, nmax: int) -> list:
    """Exact unnormalized states rho_0 .. rho_nmax from the eigen-expansion."""
    if nmax < 0:
        raise ValueError("n must be >= 0")
    if nmax > CLOSED_MAX_N:
        raise ValueError(f"n > {CLOSED_MAX_N}: use recursion path")
    rho0 = np.asarray(rho0, dtype=complex)
    pm = build_projected_map(p)
    try:
        es = eig2(pm.v)
    except NearDegenerate:
        return [rhoN_by_recursion(rho0, p, n) for n in range(nmax + 1)]
    t = tensors(es, p, rho0)
    prods = _ordered_products(t, max(nmax - 1, 0))
    out = []
    for N in range(nmax + 1):
        if N == 0:
            out.append(rho0.copy())
            continue
        S = second_term_sums(t, N, prods)
        out.append(_first_term(es, rho0, N) + _assemble_second(t, S))
    return out


def rhoN_closed(rho0: np.ndarray, p: DissipativeParams, n: int) -> np.ndarray:
    return rhoN_closed_series(rho0, p, n)[-1]


def rhoN_by_recursion(rho0: np.ndarray, p: DissipativeParams, n: int) -> np.ndarray:
    """rho_N = V^N rho0 V^N^ + sum_k V^{N-1-k}(F_k |down><down| + G_k |a*><a*|)V^..."""
    pm: ProjectedMap = build_projected_map(p)
    fg = fg_by_direct_recursion(p, rho0, max(n - 1, 0))
    vn = np.linalg.matrix_power(pm.v, n)
    out = vn @ np.asarray(rho0, dtype=complex) @ dagger(vn)
    for k in range(n):
        vk = np.linalg.matrix_power(pm.v, n - 1 - k)
        feed = fg.F[k] * RHO_DOWN + fg.G[k] * pm.rho_astar
        out = out + vk @ feed @ dagger(vk)
    return out
