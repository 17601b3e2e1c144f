"""The twelve acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed and collected into the
terminal summary) before asserting.
"""

import math
import subprocess
import sys

import numpy as np
import pytest

from _helpers import random_density, random_dephasing_params, random_dissipative_params
from conftest import ACCEPTANCE_LINES
from qpurify import closedform as cf
from qpurify.asymptotics import peak_fidelity, fidelity_curve, yield_estimate
from qpurify.core import RHO_DOWN, RHO_UP, UP, eig2, project_X, project_X_vec, tensor_X, trace_distance
from qpurify.dephasing import (
    DephasingParams,
    iterate_dephasing,
    joint_oracle_dephasing,
    kraus_dephasing,
    projected_ops_up,
    rhoN_dephasing_closed,
    step_dephasing,
    xi,
)
from qpurify.dissipative import (
    DissipativeParams,
    build_projected_map,
    dissipative_kraus_joint,
    iterate,
    joint_oracle_dissipative,
    step_dissipative,
)
from qpurify.harness import identity_test


def record(num, passed, detail):
    line = f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def maxdev(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


def test_criterion_01_dephasing_fixed_point():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        p = random_dephasing_params(rng)
        worst = max(worst, maxdev(step_dephasing(RHO_UP, projected_ops_up(p)), RHO_UP))
    record(1, worst < 1e-14, f"dephasing fixed point, 200 draws, max dev {worst:.2e} (tol 1e-14)")


def test_criterion_02_dephasing_three_way():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        p = random_dephasing_params(rng)
        rho0 = random_density(rng)
        traj = iterate_dephasing(rho0, p, 100)
        ch = kraus_dephasing(p, p.tau)
        joint = rho0.astype(complex)
        for n in range(101):
            if n:
                joint = project_X(ch.apply(tensor_X(UP, joint)), np.inf)
            closed = rhoN_dephasing_closed(rho0, p, n)
            it = traj[n].rho_unnormalized
            worst = max(worst, maxdev(closed, it), maxdev(closed, joint), maxdev(it, joint))
        worst = max(worst, maxdev(joint, joint_oracle_dephasing(rho0, p, 100)))
    record(2, worst < 1e-10, f"closed vs iterate vs joint, N <= 100, 100 draws, max dev {worst:.2e} (tol 1e-10)")


def test_criterion_03_optimal_bound():
    rng = np.random.default_rng(103)
    worst_val = worst_cos = 0.0
    for _ in range(20):
        p = random_dephasing_params(rng, gamma=0.0)
        dw = p.omega - p.Omega
        bound = dw**2 / (dw**2 + 4 * p.g**2)
        taus = np.linspace(1e-6, 2 * math.pi / p.Eplus, 10**4)
        vals = np.array([abs(xi(DephasingParams(p.omega, p.Omega, p.g, 0.0, t))) ** 2 for t in taus])
        k = int(np.argmin(vals))
        worst_val = max(worst_val, abs(vals[k] - bound))
        worst_cos = max(worst_cos, abs(math.cos(p.Eplus * taus[k])))
    ok = worst_val < 1e-6 and worst_cos < 1e-3
    record(3, ok, f"grid min of |xi|^2 vs bound, dev {worst_val:.2e} (tol 1e-6), |cos E+ tau| {worst_cos:.2e} (< 1e-3)")


def test_criterion_04_channel_cptp():
    rng = np.random.default_rng(104)
    tr_dev, min_eig = 0.0, np.inf
    for gt in (0.01, 0.1, 1.0, 10.0):
        for _ in range(500):
            p = random_dissipative_params(rng)
            t = gt / p.gamma
            out = dissipative_kraus_joint(p, t).apply(random_density(rng, 4))
            tr_dev = max(tr_dev, abs(np.trace(out).real - 1))
            min_eig = min(min_eig, np.linalg.eigvalsh(0.5 * (out + out.conj().T)).min())
    ok = tr_dev < 1e-12 and min_eig >= -1e-12
    record(4, ok, f"joint channel on 4 x 500 states, trace dev {tr_dev:.2e} (1e-12), min eig {min_eig:.2e} (>= -1e-12)")


def test_criterion_05_projected_map_oracle():
    rng = np.random.default_rng(105)
    step_dev = iter_dev = 0.0
    for _ in range(30):
        p = random_dissipative_params(rng)
        rho0 = random_density(rng)
        pm = build_projected_map(p)
        ch = dissipative_kraus_joint(p, p.tau)
        a = p.x_vec
        step_dev = max(step_dev, maxdev(step_dissipative(rho0, pm), project_X_vec(ch.apply(tensor_X(a, rho0)), a)))
        traj = iterate(rho0, p, 50)
        joint = rho0.astype(complex)
        for n in range(51):
            if n:
                joint = project_X_vec(ch.apply(tensor_X(a, joint)), a)
            iter_dev = max(iter_dev, maxdev(traj[n].rho_unnormalized, joint))
        iter_dev = max(iter_dev, maxdev(joint, joint_oracle_dissipative(rho0, p, 50)))
    ok = step_dev < 1e-12 and iter_dev < 1e-10
    record(5, ok, f"one step dev {step_dev:.2e} (1e-12), n <= 50 iterate vs joint dev {iter_dev:.2e} (1e-10)")


def test_criterion_06_alpha_zero_sector():
    rng = np.random.default_rng(106)
    eps = np.finfo(float).eps
    rho_dev = step_dev = cum_ulps = 0.0
    for _ in range(50):
        p = random_dissipative_params(rng, gamma_tau=rng.uniform(0, 5), alpha=0.0)
        steps = iterate(RHO_DOWN, p, 50).steps
        for prev, s in zip(steps, steps[1:]):
            rho_dev = max(rho_dev, maxdev(s.rho, RHO_DOWN))
            step_dev = max(step_dev, abs(s.trace / prev.trace - 1))
            cum_ulps = max(cum_ulps, abs(s.trace - 1) / (s.n * eps))
    # one rounding per step; the cumulative trace may drift by n ulps
    ok = rho_dev <= 2 * eps and step_dev <= 2 * eps and cum_ulps <= 1.0
    record(
        6,
        ok,
        f"alpha = 0 from down, state dev {rho_dev:.1e}, per-step trace dev {step_dev:.1e} (<= 2 eps), "
        f"cumulative {cum_ulps:.2f} n eps (<= n eps)",
    )


def test_criterion_07_nested_sum_identity():
    rep = identity_test(l_max=6, k_max=20, trials=200, seed=107)
    record(7, rep.max_rel_dev < 1e-8, f"nested sums, 200 draws, l <= 6, k <= 20, max rel dev {rep.max_rel_dev:.2e} (tol 1e-8)")


def test_criterion_08_closed_form_engine():
    rng = np.random.default_rng(108)
    rho_dev = fg_dev = 0.0
    for _ in range(50):
        p = random_dissipative_params(rng)
        rho0 = random_density(rng)
        traj = iterate(rho0, p, 10)
        series = cf.rhoN_closed_series(rho0, p, 10)
        rho_dev = max(rho_dev, max(maxdev(series[n], traj[n].rho_unnormalized) for n in range(11)))
        t = cf.tensors(eig2(build_projected_map(p).v), p, rho0)
        rec = cf.fg_by_recursion(t, 10)
        clo = cf.fg_closed_series(t, 10)
        along = np.column_stack([traj.column("F"), traj.column("G")])
        rec_arr = np.column_stack([rec.F, rec.G])
        fg_dev = max(fg_dev, maxdev(np.column_stack([clo.F, clo.G]), rec_arr), maxdev(rec_arr, along))
    ok = rho_dev < 1e-8 and fg_dev < 1e-8
    record(8, ok, f"rhoN_closed vs iterate dev {rho_dev:.2e}, F,G closed/recursion/trajectory dev {fg_dev:.2e} (tol 1e-8)")


def test_criterion_09_intermediate_dominance():
    gt = 0.01
    p = DissipativeParams.from_gamma_tau(gt, 3.0, Omega=1.5, g=1.0, alpha=1.0, deltaE2=1.0, deltaEplus=2.0)
    n_far = int(round(5 / gt))
    curve = fidelity_curve(np.eye(2) / 2, p, n_far)
    window = [row for row in curve if 5 <= row[0] <= 1 / gt]
    n_pk, f_pk = peak_fidelity(window)
    f_far = curve[n_far][1]
    ok = f_pk > 0.9 and f_far < f_pk
    record(9, ok, f"peak fid_u1 {f_pk:.4f} at n = {n_pk} (> 0.9), fid at n = {n_far}: {f_far:.4f} (< peak)")


def test_criterion_10_strong_dissipation():
    rng = np.random.default_rng(110)
    dists = []
    for _ in range(100):
        p = random_dissipative_params(rng, gamma_tau=20.0, shifts=False)
        dists.append(trace_distance(iterate(random_density(rng), p, 10).final.rho, RHO_DOWN))
    dists = np.array(dists)
    ok = bool(dists.max() < 0.05)
    record(
        10,
        ok,
        f"gamma tau = 20, n = 10, 100 draws: max trace distance {dists.max():.3f}, "
        f"mean {dists.mean():.3f}, {np.mean(dists < 0.05):.0%} below 0.05 (tol 0.05)",
    )


def test_criterion_11_yield_scaling():
    rng = np.random.default_rng(111)
    draws = [
        DissipativeParams.from_gamma_tau(gt, 3.9, Omega=1.5, g=0.5, alpha=1.0) for gt in (0.005, 0.01, 0.02)
    ]
    for _ in range(30):
        p = random_dissipative_params(rng, gamma_tau=float(rng.choice([0.005, 0.01, 0.02])))
        draws.append(p)
    ratios = []
    for p in draws:
        gt = p.gamma_tau
        es = eig2(build_projected_map(p).v)
        n_max = int(round(1 / gt))
        traj = iterate(np.eye(2) / 2, p, n_max)
        q = np.array([traj[n].trace / yield_estimate(es, gt, n) for n in range(1, n_max + 1)])
        ratios.append(max(q.max(), 1 / q.min()))
    ratios = np.array(ratios)
    ok = bool(ratios.max() <= 3.0)
    record(
        11,
        ok,
        f"{len(draws)} draws, worst factor {ratios.max():.3f} (reference point {ratios[:3].max():.3f}), "
        f"{np.mean(ratios <= 3):.0%} within 3 (tol 3)",
    )


def cli(*args):
    return subprocess.run([sys.executable, "-m", "qpurify.cli", *args], capture_output=True)


def test_criterion_12_harness_determinism(tmp_path):
    sweep = ["--set", "axis1=gamma_tau 0.001 0.1 3 log", "--set", "axis2=n 0 40 3", "--set", "metric=fid_u1,yield"]
    run = [cli("run", "--seed", "5") for _ in range(2)]
    swp = [cli("sweep", "--seed", "5", "--jobs", "2", *sweep) for _ in range(2)]
    chk = cli("check")
    same_run = run[0].returncode == run[1].returncode == 0 and run[0].stdout == run[1].stdout
    same_sweep = swp[0].returncode == swp[1].returncode == 0 and swp[0].stdout == swp[1].stdout
    ok = same_run and same_sweep and chk.returncode == 0 and len(run[0].stdout) > 0
    record(
        12,
        ok,
        f"run identical: {same_run}, sweep identical: {same_sweep}, check exit code {chk.returncode}",
    )
