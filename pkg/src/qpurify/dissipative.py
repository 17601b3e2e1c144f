"""Purification of S under a zero-temperature dissipative bath.

With omega = Omega the two-qubit eigenlevels are |2> = |up,up>,
|+-> = (|up,down> +- |down,up>)/sqrt2 and |0> = |down,down>, with energies
Omega, +-g, -Omega. The bath drives the cascade |2> -> |+> -> |0> at a
common rate gamma and leaves |-> untouched. X is confirmed at every
interval tau in the normalized state

    |a> = (alpha |up> + |down>) / sqrt(1 + |alpha|^2),

written below as ``s |up> + c |down>`` with ``c = 1/sqrt(1+|alpha|^2)`` and
``s = alpha c``. The limit ``|alpha| -> inf`` (confirming |up>_X) is
available through ``measure_up=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DOWN,
    RHO_DOWN,
    NearDegenerate,
    Trajectory,
    dagger,
    eig2,
    project_X_vec,
    run_trajectory,
    tensor_X,
)

SQRT2 = math.sqrt(2.0)

__all__ = [
    "DissipativeParams",
    "JointChannel",
    "ProjectedMap",
    "dissipative_kraus_joint",
    "build_projected_map",
    "coefficients_FG",
    "step_dissipative",
    "iterate",
    "joint_oracle_dissipative",
    "decay_weights",
    "eigenstates_diss",
    "dominant_vector",
    "projected_map_from_joint",
    "common_eigenvector_residual",
]


@dataclass(frozen=True)
class DissipativeParams:
    Omega: float
    g: float
    gamma: float
    tau: float
    alpha: complex = 1.0
    deltaE2: float = 0.0
    deltaEplus: float = 0.0
    measure_up: bool = False

    def __post_init__(self):
        if not (self.Omega > self.g > 0):
            raise ValueError("need Omega > g > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not self.measure_up and not np.isfinite(complex(self.alpha)):
            raise ValueError("alpha must be finite; use measure_up=True for |up>_X")

    @classmethod
    def from_gamma_tau(cls, gamma_tau: float, tau: float, **kw) -> "DissipativeParams":
        return cls(gamma=gamma_tau / tau, tau=tau, **kw)

    @property
    def gamma_tau(self) -> float:
        return self.gamma * self.tau

    @property
    def amplitudes(self) -> tuple[complex, float]:
        """(s, c): components of the normalized measurement vector on |up>, |down>."""
        if self.measure_up:
            return 1.0 + 0j, 0.0
        a = complex(self.alpha)
        c = 1.0 / math.sqrt(1.0 + abs(a) ** 2)
        return a * c, c

    @property
    def x_vec(self) -> np.ndarray:
        s, c = self.amplitudes
        return np.array([s, c], dtype=complex)

    @property
    def astar_vec(self) -> np.ndarray:
        """Normalized |alpha*> = (1, alpha*)/sqrt(1+|alpha|^2) on S."""
        s, c = self.amplitudes
        return np.array([c, np.conj(s)], dtype=complex)

    @property
    def energies(self) -> dict:
        """Shifted energies entering the propagator."""
        return {
            "2": self.Omega + self.deltaE2,
            "+": self.g + self.deltaEplus,
            "0": -self.Omega,
            "-": -self.g,
        }


def decay_weights(gamma_t: float) -> tuple[float, float, float]:
    """Weights of the |+>->|0>, |2>->|0> and |2>->|+> jump terms after time t."""
    e = math.exp(-gamma_t)
    w0 = -math.expm1(-gamma_t)
    w2 = gamma_t * e
    # 1 - e - gt e, written to avoid cancellation at small gamma t
    w1 = w0 - w2
    return w0, w1, w2


def eigenstates_diss() -> dict:
    r = 1.0 / SQRT2
    return {
        "2": np.array([1, 0, 0, 0], dtype=complex),
        "+": np.array([0, r, r, 0], dtype=complex),
        "-": np.array([0, r, -r, 0], dtype=complex),
        "0": np.array([0, 0, 0, 1], dtype=complex),
    }


@dataclass(frozen=True)
class JointChannel:
    eAt: np.ndarray
    b0: np.ndarray
    b0b1: np.ndarray
    b1: np.ndarray
    weights: tuple[float, float, float]

    def apply(self, rho_xs: np.ndarray) -> np.ndarray:
        w0, w1, w2 = self.weights
        out = self.eAt @ rho_xs @ dagger(self.eAt)
        out = out + w0 * self.b0 @ rho_xs @ dagger(self.b0)
        out = out + w1 * self.b0b1 @ rho_xs @ dagger(self.b0b1)
        out = out + w2 * self.b1 @ rho_xs @ dagger(self.b1)
        return out


def dissipative_kraus_joint(p: DissipativeParams, t: float) -> JointChannel:
    """Exact solution of the two-qubit master equation over time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    st = eigenstates_diss()
    E = p.energies
    half = math.exp(-0.5 * p.gamma * t)
    phases = {
        "2": np.exp(-1j * E["2"] * t) * half,
        "+": np.exp(-1j * E["+"] * t) * half,
        "0": np.exp(-1j * E["0"] * t),
        "-": np.exp(-1j * E["-"] * t),
    }
    eAt = sum(phases[k] * np.outer(st[k], st[k].conj()) for k in st)
    b0 = np.outer(st["0"], st["+"].conj())
    b1 = np.outer(st["+"], st["2"].conj())
    return JointChannel(eAt, b0, b0 @ b1, b1, decay_weights(p.gamma * t))


@dataclass(frozen=True)
class ProjectedMap:
    """One measurement step on S: rho -> V rho V^ + sum_i w_i C_i rho C_i^."""

    v: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    w0: float
    w1: float
    w2: float
    s: complex
    c: float

    @property
    def astar_vec(self) -> np.ndarray:
        return np.array([self.c, np.conj(self.s)], dtype=complex)

    @property
    def rho_astar(self) -> np.ndarray:
        a = self.astar_vec
        return np.outer(a, a.conj())

    @property
    def f_coeffs(self) -> tuple[float, float]:
        """F(rho) = f_astar <a*|rho|a*> + f_up <up|rho|up>."""
        return 0.5 * self.c**2 * self.w0, abs(self.s) ** 2 * self.c**2 * self.w1

    @property
    def g_coeff(self) -> float:
        """G(rho) = g_up <up|rho|up>."""
        return 0.5 * abs(self.s) ** 2 * self.w2

    def fg(self, rho: np.ndarray) -> tuple[float, float]:
        fa, fu = self.f_coeffs
        a = self.astar_vec
        ra = np.real(np.vdot(a, rho @ a))
        ru = rho[0, 0].real
        return fa * ra + fu * ru, self.g_coeff * ru

    def apply_kraus(self, rho: np.ndarray) -> np.ndarray:
        out = self.v @ rho @ dagger(self.v)
        for w, op in ((self.w0, self.c0), (self.w1, self.c1), (self.w2, self.c2)):
            out = out + w * op @ rho @ dagger(op)
        return out


def build_projected_map(p: DissipativeParams) -> ProjectedMap:
    s, c = p.amplitudes
    E = p.energies
    t = p.tau
    half = math.exp(-0.5 * p.gamma * t)
    e2 = np.exp(-1j * E["2"] * t) * half
    ep = np.exp(-1j * E["+"] * t) * half
    e0 = np.exp(-1j * E["0"] * t)
    em = np.exp(-1j * E["-"] * t)
    s2 = abs(s) ** 2
    v = np.array(
        [
            [s2 * e2 + 0.5 * c**2 * (ep + em), 0.5 * c * s * (ep - em)],
            [0.5 * c * np.conj(s) * (ep - em), 0.5 * s2 * (ep + em) + c**2 * e0],
        ]
    )
    c0 = np.array([[0, 0], [c**2, c * s]], dtype=complex) / SQRT2
    c1 = np.array([[0, 0], [c * s, 0]], dtype=complex)
    c2 = np.array([[c * s, 0], [s2, 0]], dtype=complex) / SQRT2
    w0, w1, w2 = decay_weights(p.gamma_tau)
    return ProjectedMap(v, c0, c1, c2, w0, w1, w2, s, c)


def coefficients_FG(rho: np.ndarray, p: DissipativeParams) -> tuple[float, float]:
    """Weights feeding |down><down| (F) and |alpha*><alpha*| (G) in one step."""
    return build_projected_map(p).fg(np.asarray(rho, dtype=complex))


def step_dissipative(rho: np.ndarray, pm: ProjectedMap) -> np.ndarray:
    """V rho V^ + F(rho) |down><down| + G(rho) |alpha*><alpha*|."""
    F, G = pm.fg(rho)
    return pm.v @ rho @ dagger(pm.v) + F * RHO_DOWN + G * pm.rho_astar


def dominant_vector(p: DissipativeParams):
    """|u1> of V, or None when V is (nearly) degenerate."""
    try:
        return eig2(build_projected_map(p).v).u1
    except NearDegenerate:
        return None


def iterate(rho0: np.ndarray, p: DissipativeParams, n: int, target=None) -> Trajectory:
    """Run ``n`` measurement steps and record diagnostics after each one.

    ``fid_u1`` is measured against ``target`` when given, otherwise against
    the dominant eigenvector of V (NaN when V is degenerate).
    """
    pm = build_projected_map(p)
    if target is None:
        target = dominant_vector(p)
    traj = run_trajectory(
        rho0, n, lambda r: step_dissipative(r, pm), target=target, fg=pm.fg
    )
    return traj


def joint_oracle_dissipative(rho0: np.ndarray, p: DissipativeParams, n: int) -> np.ndarray:
    """Brute 4x4 evolution: prepare |a>_X, evolve tau, project X on |a>, repeat."""
    if n < 0:
        raise ValueError("n must be >= 0")
    ch = dissipative_kraus_joint(p, p.tau)
    a = p.x_vec
    rho = np.asarray(rho0, dtype=complex).copy()
    for _ in range(n):
        rho = project_X_vec(ch.apply(tensor_X(a, rho)), a)
    return rho


def projected_map_from_joint(p: DissipativeParams) -> ProjectedMap:
    """The four S operators obtained by sandwiching the joint operators."""
    ch = dissipative_kraus_joint(p, p.tau)
    a = p.x_vec
    s, c = p.amplitudes
    proj = [project_X_vec(m, a) for m in (ch.eAt, ch.b0, ch.b0b1, ch.b1)]
    return ProjectedMap(*proj, *ch.weights, s, c)


def common_eigenvector_residual(pm: ProjectedMap) -> float:
    """Smallest joint-eigenvector residual over the eigenvectors of V.

    For each eigenvector u of V, measures how far u is from being an
    eigenvector of every C_i (norm of the component of C_i u orthogonal to
    u) and returns the minimum over u. Zero means a common eigenstate.
    """
    try:
        es = eig2(pm.v)
        cands = [es.u1, es.u2]
    except NearDegenerate:
        cands = [np.array([1, 0], complex), DOWN]
    best = math.inf
    for u in cands:
        r = 0.0
        for op in (pm.c0, pm.c1, pm.c2):
            y = op @ u
            r += np.linalg.norm(y - np.vdot(u, y) * u)
        best = min(best, r)
    return best
