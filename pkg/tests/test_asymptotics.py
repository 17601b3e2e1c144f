import math

import numpy as np
import pytest

from _helpers import random_density, random_pure
from qpurify import asymptotics as asy
from qpurify.closedform import second_term_sums, tensors
from qpurify.core import RHO_DOWN, eig2, normalized, trace_distance
from qpurify.dissipative import DissipativeParams, build_projected_map, iterate

MIXED = np.eye(2) / 2


def resonant(gamma_tau, **kw):
    base = dict(tau=3.0, Omega=1.5, g=1.0, alpha=1.0, deltaE2=1.0, deltaEplus=2.0)
    base.update(kw)
    return DissipativeParams.from_gamma_tau(gamma_tau, **base)


def prepared(p, rho0=MIXED):
    es = eig2(build_projected_map(p).v)
    return es, tensors(es, p, rho0)


def random_weak(rng, gamma_tau):
    return DissipativeParams.from_gamma_tau(
        gamma_tau,
        tau=rng.uniform(0.5, 3.5),
        Omega=rng.uniform(1.2, 2.2),
        g=rng.uniform(0.3, 0.9),
        alpha=complex(*rng.normal(size=2)),
        deltaE2=rng.normal(),
        deltaEplus=rng.normal(),
    )


# M vectors


@pytest.mark.parametrize("n", [2, 3, 6, 11])
def test_resummed_matches_direct(rng, n):
    for _ in range(5):
        p = random_weak(rng, rng.uniform(0.005, 0.1))
        es, t = prepared(p, random_density(rng))
        for r, d in zip(asy.M_resummed(t, es, n), asy.M_direct(t, n)):
            assert np.allclose(r, d, atol=1e-12)


def test_M_vanish_without_dissipation():
    p = resonant(0.0)
    es, t = prepared(p)
    for m in asy.M_resummed(t, es, 5) + asy.M_direct(t, 5):
        assert np.allclose(m, 0)


def test_M_requires_two_steps():
    es, t = prepared(resonant(0.01))
    with pytest.raises(ValueError):
        asy.M_resummed(t, es, 1)
    with pytest.raises(ValueError):
        asy.M_direct(t, 1)


def test_weak_M11_leading_order():
    es, t = prepared(resonant(0.001))
    n = 20
    M11 = asy.M_direct(t, n)[0]
    approx = (n - 1) * t.Lambda[0, 0] ** (n - 1) * t.d[0, 0]
    assert np.linalg.norm(M11 - approx) <= 0.05 * np.linalg.norm(approx)


# weak regime


def test_weak_prediction_example():
    p = resonant(0.01)
    es, t = prepared(p)
    rep = asy.predict_weak(t, es, 50)
    assert rep.regime == "weak"
    assert np.allclose(rep.rho_pred, np.outer(es.u1, es.u1.conj()))
    assert 0.0 <= rep.fid_u1_pred <= 1.0 and rep.yield_pred >= 0
    assert iterate(MIXED, p, 50).final.fid_u1 > 0.9


def test_weak_decoherence_free_fidelity_tends_to_one():
    p = DissipativeParams(Omega=1.5, g=1.0, gamma=0.0, tau=1.0, alpha=0.5, deltaE2=1.0, deltaEplus=2.0)
    es, t = prepared(p)
    preds = [asy.predict_weak(t, es, n).fid_u1_pred for n in (5, 20, 60)]
    assert preds == sorted(preds) and preds[-1] == pytest.approx(1.0, abs=1e-12)
    assert iterate(MIXED, p, 60).final.fid_u1 == pytest.approx(1.0, abs=1e-12)


def test_yield_estimate_trivial():
    es = eig2(np.diag([1.0, 0.5]))
    assert asy.yield_estimate(es, 0.0, 30) == 1.0
    assert asy.yield_estimate(es, 0.01, 30) == pytest.approx(1.3)


@pytest.mark.parametrize("gamma_tau, n", [(0.2, 2), (0.01, 150)])
def test_weak_regime_errors(gamma_tau, n):
    es, t = prepared(resonant(gamma_tau))
    with pytest.raises(asy.RegimeError):
        asy.predict_weak(t, es, n)


# intermediate regime


def test_intermediate_example():
    p = resonant(0.05)
    es, t = prepared(p)
    rep = asy.predict_intermediate(t, es, 100)
    assert rep.regime == "intermediate" and rep.mixed_floor
    assert np.allclose(rep.rho_pred, rep.rho_pred.conj().T, atol=1e-10)
    assert 0.0 <= rep.fid_u1_pred <= 1.0 and rep.yield_pred >= 0
    assert 1 - iterate(MIXED, p, 100).final.purity >= 0.05


def test_intermediate_fidelity_non_increasing_beyond_peak():
    p = resonant(0.05)
    es, t = prepared(p)
    ns = range(21, 400)
    pred = np.array([asy.predict_intermediate(t, es, n).fid_u1_pred for n in ns])
    k = int(np.argmax(pred))
    assert np.all(np.diff(pred[k:]) <= 1e-12)
    ref = np.array([row[1] for row in asy.fidelity_curve(MIXED, p, 399)])
    k = int(np.argmax(ref))
    assert np.all(np.diff(ref[k:]) <= 1e-4)
    assert ref[-1] < ref[k]


@pytest.mark.parametrize("gamma_tau, n", [(0.0, 50), (0.05, 10), (0.05, 500)])
def test_intermediate_regime_errors(gamma_tau, n):
    es, t = prepared(resonant(gamma_tau))
    with pytest.raises(asy.RegimeError):
        asy.predict_intermediate(t, es, n)


# strong regime


def test_strong_limit_alpha_zero_is_down():
    p = resonant(20.0, alpha=0.0)
    for n in (2, 5, 10):
        assert np.allclose(normalized(asy.strong_limit_state(RHO_DOWN, p, n)), RHO_DOWN, atol=1e-14)


def test_strong_limit_structure(rng):
    p = resonant(20.0, alpha=0.7 + 0.3j)
    rho0 = random_density(rng)
    out = asy.strong_limit_state(rho0, p, 10)
    assert np.allclose(out, out.conj().T)
    with pytest.raises(asy.RegimeError):
        asy.strong_limit_state(rho0, resonant(1.0), 10)
    with pytest.raises(ValueError):
        asy.strong_limit_state(rho0, p, 1)


def test_strong_dissipation_kills_G(rng):
    for _ in range(10):
        p = resonant(20.0, alpha=complex(*rng.normal(size=2)), tau=rng.uniform(0.5, 4))
        traj = iterate(random_density(rng), p, 20)
        assert max(traj.column("G")) <= 1e-6


def test_strong_limit_saturates_in_gamma():
    # prediction and iteration both stop depending on gamma tau; they differ
    # from each other by O(0.1): the dark state is not captured by the limit form
    preds, iters = [], []
    for gt in (80.0, 320.0):
        p = resonant(gt, alpha=0.7 + 0.3j)
        preds.append(normalized(asy.strong_limit_state(MIXED, p, 10)))
        iters.append(iterate(MIXED, p, 10).final.rho)
    assert trace_distance(*preds) < 1e-6 and trace_distance(*iters) < 1e-6
    assert trace_distance(preds[1], iters[1]) < 0.2


# fidelity curves


def test_fidelity_curve_decoherence_free_is_monotone():
    p = DissipativeParams(Omega=1.5, g=1.0, gamma=0.0, tau=1.0, alpha=0.5, deltaE2=1.0, deltaEplus=2.0)
    curve = asy.fidelity_curve(MIXED, p, 100)
    fid = np.array([row[1] for row in curve])
    assert np.all(np.diff(fid) >= -1e-12)
    assert fid[-1] == pytest.approx(1.0, abs=1e-12)
    assert asy.peak_fidelity(curve)[1] == pytest.approx(1.0, abs=1e-12)


def test_fidelity_curve_has_interior_peak():
    curve = asy.fidelity_curve(MIXED, resonant(0.01), 500)
    n, f = asy.peak_fidelity(curve)
    assert 0 < n < 500 and f > curve[-1][1]
    assert len(curve) == 501 and curve[0][0] == 0


def test_fidelity_curve_alpha_zero_stays_down():
    curve = asy.fidelity_curve(RHO_DOWN, resonant(0.3, alpha=0.0), 30, target=np.array([0, 1]))
    assert all(row[1] == pytest.approx(1.0, abs=1e-14) for row in curve)
    with pytest.raises(ValueError):
        asy.fidelity_curve(RHO_DOWN, resonant(0.3), 0)


def test_peak_fidelity_picks_first_maximum():
    assert asy.peak_fidelity([(0, 0.5, 1, 1), (1, 0.9, 1, 1), (2, 0.9, 1, 1)]) == (1, 0.9)


# properties


def test_offdiagonal_matrix_has_negative_eigenvalue(rng):
    for _ in range(100):
        u1, u2 = random_pure(rng), random_pure(rng)
        if abs(np.vdot(u2, u1) + np.vdot(u1, u2)) < 1e-3:
            continue
        m = asy.offdiagonal_limit_matrix(u1, u2)
        assert np.trace(m) == pytest.approx(1.0)
        assert np.trace(m @ m).real > 1
        assert np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < 0


def test_offdiagonal_matrix_orthogonal_raises():
    with pytest.raises(ZeroDivisionError):
        asy.offdiagonal_limit_matrix(np.array([1, 0]), np.array([0, 1]))


def test_no_go_purity_floor(rng):
    for _ in range(10):
        p = random_weak(rng, 0.05)
        assert 1 - iterate(random_density(rng), p, 2000).final.purity >= 10 * 1e-8


def dominance_draws(rng, count):
    out = []
    while len(out) < count:
        p = random_weak(rng, 0.01)
        es = eig2(build_projected_map(p).v)
        ratio = abs(es.lambda1) / abs(es.lambda2)
        phase = abs(np.angle(es.lambda2 / es.lambda1))
        if ratio >= 1.5 and phase >= 0.3:
            out.append((p, es, tensors(es, p, MIXED)))
    return out


def dominance_error(t, n):
    full = second_term_sums(t, n)[0, 0]
    dom = second_term_sums(t, n, dominant_only=True)[0, 0]
    return np.linalg.norm(dom - full) / np.linalg.norm(full)


def test_dominance_error_shrinks_with_n(rng):
    # the 10% level is only reached at larger n; the error falls roughly like 1/n
    for p, es, t in dominance_draws(rng, 20):
        errs = [dominance_error(t, n) for n in (4, 8, 12)]
        assert errs[0] > errs[1] > errs[2]
        assert asy.dominant_fraction(MIXED, p, 8) == pytest.approx(errs[1])


def test_dominance_within_ten_percent_when_d11_leads(rng):
    checked = 0
    for p, es, t in dominance_draws(rng, 40):
        if np.linalg.norm(t.d[0, 0]) >= np.linalg.norm(t.d[1, 1]):
            assert dominance_error(t, 12) < 0.10
            checked += 1
    assert checked >= 5


def test_dominant_fraction_degenerate_is_nan():
    p = DissipativeParams(Omega=1.5, g=0.5, gamma=0.0, tau=2 * math.pi, alpha=1.0)
    assert math.isnan(asy.dominant_fraction(MIXED, p, 5))
