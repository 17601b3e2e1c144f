"""Purification of S by repeatedly confirming X in |up> under pure dephasing.

The two-qubit Hamiltonian is

    H_XS = (omega/2) sz_X + (Omega/2) sz_S + g (s+_X s-_S + s-_X s+_S)

and the bath couples through (|2><2| - |0><0|), so the environment only
randomizes phases between the eigenlevels |2> = |up,up>, |0> = |down,down>
and the flip-flop pair |+>, |->.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ID4,
    RHO_UP,
    UP,
    Trajectory,
    dagger,
    project_X,
    project_op_X,
    tensor_X,
    run_trajectory,
)

__all__ = [
    "DephasingParams",
    "DephasingChannel",
    "hamiltonian_xs",
    "dephasing_eigensystem",
    "kraus_dephasing",
    "projected_ops_up",
    "xi",
    "step_dephasing",
    "rhoN_dephasing_closed",
    "optimal_tau",
    "joint_oracle_dephasing",
    "iterate_dephasing",
    "projected_ops_general",
    "kraus_completeness",
]


@dataclass(frozen=True)
class DephasingParams:
    omega: float
    Omega: float
    g: float
    gamma: float
    tau: float
    deltaE: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.g**2 + (self.omega - self.Omega) ** 2 <= 0:
            raise ValueError("E_+ vanishes: need g != 0 or omega != Omega")

    @property
    def E2(self) -> float:
        return 0.5 * (self.omega + self.Omega)

    @property
    def E0(self) -> float:
        return -self.E2

    @property
    def Eplus(self) -> float:
        return math.sqrt(0.25 * (self.omega - self.Omega) ** 2 + self.g**2)

    @property
    def Eminus(self) -> float:
        return -self.Eplus

    @property
    def asym(self) -> float:
        """(omega - Omega) / (2 E_+), the detuning weight in |+-> and xi."""
        return (self.omega - self.Omega) / (2.0 * self.Eplus)


@dataclass(frozen=True)
class DephasingChannel:
    k0: np.ndarray
    kplus: np.ndarray
    kminus: np.ndarray

    @property
    def ops(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.k0, self.kplus, self.kminus)

    def apply(self, rho_xs: np.ndarray) -> np.ndarray:
        return sum(k @ rho_xs @ dagger(k) for k in self.ops)


def hamiltonian_xs(omega: float, Omega: float, g: float) -> np.ndarray:
    """H_XS as an explicit 4x4 matrix (X first)."""
    sz = np.diag([1.0, -1.0]).astype(complex)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sm = sp.T
    i2 = np.eye(2)
    return (
        0.5 * omega * np.kron(sz, i2)
        + 0.5 * Omega * np.kron(i2, sz)
        + g * (np.kron(sp, sm) + np.kron(sm, sp))
    )


def dephasing_eigensystem(p: DephasingParams):
    """Energies (E2, E0, E+, E-) and eigenstates as columns (|2>, |0>, |+>, |->)."""
    d = p.asym
    sg = 1.0 if p.g >= 0 else -1.0
    a = math.sqrt(max(0.0, 1.0 + d)) / math.sqrt(2.0)
    b = math.sqrt(max(0.0, 1.0 - d)) / math.sqrt(2.0)
    states = np.zeros((4, 4), dtype=complex)
    states[0, 0] = 1.0
    states[3, 1] = 1.0
    states[1, 2], states[2, 2] = a, sg * b
    states[1, 3], states[2, 3] = b, -sg * a
    energies = np.array([p.E2, p.E0, p.Eplus, p.Eminus])
    return energies, states


def kraus_dephasing(p: DephasingParams, t: float) -> DephasingChannel:
    if t < 0:
        raise ValueError("t must be >= 0")
    _, st = dephasing_eigensystem(p)
    proj = [np.outer(st[:, i], st[:, i].conj()) for i in range(4)]
    decay = math.exp(-0.5 * p.gamma * t)
    ph2 = np.exp(-1j * (p.E2 + p.deltaE) * t) * decay
    ph0 = np.exp(-1j * (p.E0 + p.deltaE) * t) * decay
    k0 = (
        ph2 * proj[0]
        + ph0 * proj[1]
        + np.exp(-1j * p.Eplus * t) * proj[2]
        + np.exp(-1j * p.Eminus * t) * proj[3]
    )
    gt = p.gamma * t
    kplus = math.sqrt(max(0.0, math.cosh(gt) - 1.0)) * (ph2 * proj[0] + ph0 * proj[1])
    kminus = math.sqrt(math.sinh(gt)) * (ph2 * proj[0] - ph0 * proj[1])
    return DephasingChannel(k0, kplus, kminus)


def xi(p: DephasingParams) -> complex:
    """cos(E+ tau) + i (omega - Omega)/(2 E+) sin(E+ tau).

    |xi|^2 is the probability for S to stay down while X is found up. With
    the propagator exp(-i H t) the amplitude <up,down|K_0|up,down> itself is
    conj(xi); the off-diagonal of rho_N then scales as (e^{-i E2 tau} xi)^N.
    """
    x = p.Eplus * p.tau
    return complex(math.cos(x), p.asym * math.sin(x))


def _up_phase(p: DephasingParams) -> complex:
    return np.exp(-1j * (p.E2 + p.deltaE) * p.tau - 0.5 * p.gamma * p.tau)


def projected_ops_up(p: DephasingParams):
    """The three diagonal 2x2 operators <up|K_i|up>_X at t = tau."""
    e = _up_phase(p)
    gt = p.gamma * p.tau
    v0 = np.diag([e, np.conj(xi(p))])
    vplus = math.sqrt(max(0.0, math.cosh(gt) - 1.0)) * e * RHO_UP
    vminus = math.sqrt(math.sinh(gt)) * e * RHO_UP
    return v0, vplus, vminus


def step_dephasing(rho: np.ndarray, ops) -> np.ndarray:
    return sum(v @ rho @ dagger(v) for v in ops)


def rhoN_dephasing_closed(rho0: np.ndarray, p: DephasingParams, n: int) -> np.ndarray:
    """Unnormalized S state after ``n`` successful |up>_X confirmations."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rho0 = np.asarray(rho0, dtype=complex)
    x = xi(p)
    c = _up_phase(p) * x
    out = np.empty((2, 2), dtype=complex)
    out[0, 0] = rho0[0, 0]
    out[1, 1] = abs(x) ** (2 * n) * rho0[1, 1]
    out[0, 1] = c**n * rho0[0, 1]
    out[1, 0] = np.conj(c) ** n * rho0[1, 0]
    return out


def optimal_tau(p: DephasingParams) -> tuple[float, float]:
    """Shortest interval with cos(E+ tau) = 0 and the resulting minimum |xi|^2."""
    if p.g == 0:
        raise ValueError("no purification possible with g = 0")
    dw2 = (p.omega - p.Omega) ** 2
    return math.pi / (2.0 * p.Eplus), dw2 / (dw2 + 4.0 * p.g**2)


def joint_oracle_dephasing(rho0: np.ndarray, p: DephasingParams, n: int) -> np.ndarray:
    """Brute 4x4 evolution: prepare |up>_X, evolve tau, project X on |up>, repeat."""
    if n < 0:
        raise ValueError("n must be >= 0")
    ch = kraus_dephasing(p, p.tau)
    rho = np.asarray(rho0, dtype=complex).copy()
    for _ in range(n):
        rho = project_X(ch.apply(tensor_X(UP, rho)), np.inf)
    return rho


def projected_ops_general(p: DephasingParams, phi: np.ndarray):
    """<phi|K_i|phi>_X for an arbitrary normalized X state ``phi``."""
    ch = kraus_dephasing(p, p.tau)
    return tuple(project_op_X(k, phi) for k in ch.ops)


def iterate_dephasing(rho0: np.ndarray, p: DephasingParams, n: int, target=UP) -> Trajectory:
    ops = projected_ops_up(p)
    return run_trajectory(rho0, n, lambda r: step_dephasing(r, ops), target=target)


def kraus_completeness(ch: DephasingChannel) -> np.ndarray:
    """sum_i K_i^dag K_i - 1 (zero for a trace-preserving channel)."""
    return sum(dagger(k) @ k for k in ch.ops) - ID4

