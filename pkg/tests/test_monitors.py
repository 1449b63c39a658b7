import dataclasses
import math

import numpy as np
import pytest

import so3track as st
from so3track.errors import ContractError


def test_lyapunov_values_at_attractors(paper_params, paper_gains, paper_inertia):
    p, gn, J = paper_params, paper_gains, paper_inertia
    basic = st.BasicLoopState(
        Re=np.eye(3), theta=0.0, omega_e=np.zeros(3), Rr=np.eye(3), omega_r=np.zeros(3)
    )
    assert st.lyapunov_basic(basic, p, gn, J) == 0.0
    smooth = st.SmoothLoopState(**basic.__dict__, zeta=np.zeros(3))
    assert st.lyapunov_smooth(smooth, p, gn, J) == 0.0
    vf = st.VelocityFreeLoopState(**basic.__dict__, Rtilde=np.eye(3), theta_bar=0.0)
    assert st.lyapunov_velocity_free(vf, p, gn, J) == 0.0
    assert st.lyapunov_cross(basic, p, gn, J, eps=0.5) == 0.0


def test_lyapunov_reductions(paper_params, paper_gains, paper_inertia):
    p, gn, J = paper_params, paper_gains, paper_inertia
    rng = np.random.default_rng(0)
    base = st.BasicLoopState(
        Re=st.random_rotation(rng),
        theta=0.7,
        omega_e=np.zeros(3),
        Rr=np.eye(3),
        omega_r=np.zeros(3),
    )
    # no velocity error: the basic monitor is k_R U
    assert st.lyapunov_basic(base, p, gn, J) == pytest.approx(
        gn.k_R * st.value(base.Re, base.theta, p), abs=1e-14
    )
    # filter state equal to the gradient: smooth monitor reduces to the basic one
    base.omega_e = rng.standard_normal(3)
    g = st.grad_rotation(base.Re, base.theta, p)
    smooth = st.SmoothLoopState(**base.__dict__, zeta=g)
    assert st.lyapunov_smooth(smooth, p, gn, J) == st.lyapunov_basic(base, p, gn, J)
    # auxiliary rotation at its target: only the k_R and kinetic terms remain
    vf = st.VelocityFreeLoopState(**base.__dict__, Rtilde=np.eye(3), theta_bar=0.0)
    assert st.lyapunov_velocity_free(vf, p, gn, J) == st.lyapunov_basic(base, p, gn, J)
    # zero cross weight recovers the plain monitor
    assert st.lyapunov_cross(base, p, gn, J, eps=0.0) == st.lyapunov_basic(base, p, gn, J)


def test_lyapunov_positive_away_from_attractor(paper_params, paper_gains, paper_inertia):
    p, gn, J = paper_params, paper_gains, paper_inertia
    rng = np.random.default_rng(1)
    n = 100_000
    R = st.random_rotations(n, rng)
    theta = rng.uniform(-math.pi, math.pi, n)
    we = rng.standard_normal((n, 3))
    U = st.potential.value_many(R, theta, p)
    kin = 0.5 * np.einsum("ni,ij,nj->n", we, J.J, we)
    lyap = gn.k_R * U + kin
    dist = np.sqrt(np.clip((3.0 - np.einsum("nii->n", R)) / 4.0, 0.0, None))
    away = (dist > 1e-3) | (np.abs(theta) > 1e-3) | (np.linalg.norm(we, axis=1) > 1e-3)
    assert lyap[away].min() > 0.0


def test_cross_eps_bound_value(paper_params, paper_gains, paper_inertia):
    # (1 / lam_max) * sqrt(2 k_R lam_min / alpha1) with alpha1 = 175/3
    expect = (1.0 / 0.0297) * math.sqrt(2.0 * 1.5 * 0.0150 / (175.0 / 3.0))
    got = st.cross_eps_bound(paper_params, paper_gains, paper_inertia)
    assert got == pytest.approx(expect, abs=1e-12)


def test_cross_monitor_positive_below_bound(fig3_runs, paper_gains, paper_inertia):
    member, loop, arc, _, _ = fig3_runs["2_basic"]
    p = loop.params
    eps = 0.9 * st.cross_eps_bound(p, paper_gains, paper_inertia)
    floor_hit = 0
    for k in range(0, len(arc), 50):
        s = st.BasicLoopState.unpack(arc.states[k])
        val = st.lyapunov_cross(s, p, paper_gains, paper_inertia, eps)
        sq = st.value(s.Re, s.theta, p) + s.omega_e @ s.omega_e
        if sq > 1e-12:
            assert val > 0.0
        else:
            floor_hit += 1
            assert val > -1e-12
    assert floor_hit > 0  # the run does converge to the numerical floor


def test_exponential_fit_recovers_rate():
    t = np.linspace(0.0, 10.0, 2001)
    vals = 3.0 * np.exp(-1.7 * t)
    slope, r2, n = st.exponential_fit(t, vals, floor=1e-300)
    assert slope == pytest.approx(-1.7, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    assert n == 2001
    assert st.exponential_fit(t[:5], vals[:5]) is None


def test_certify_passes_on_short_basic_run(fig3_cfg):
    cfg = dataclasses.replace(fig3_cfg, t_max=2.0)
    res = st.simulate_member(cfg, cfg.members[2])
    rep = res.report
    assert rep.passed
    assert rep.n_jumps == 1
    assert rep.n_jumps <= rep.jump_bound
    assert rep.max_flow_increase <= 1e-7
    assert rep.min_jump_drop >= 1.5 * res.loop.params.delta - 1e-9
    text = rep.as_text()
    assert "status=PASS" in text and "min_jump_drop" in text


def test_certify_flags_wrong_sign_gain(paper_params, paper_inertia):
    # destabilizing velocity gain: the monitor must increase along flows
    bad = st.Gains(k_R=1.5, k_omega=-0.2, k_theta=50.0)
    ref = st.make_reference("paper_sine", m_bound=2.0, omega_r_bound=25.0)
    loop = st.make_loop("basic", paper_params, bad, paper_inertia, ref, check=False)
    y0 = st.BasicLoopState(
        Re=st.angle_axis(1.0, np.array([0.0, 1.0, 0.0])),
        theta=0.0,
        omega_e=np.array([0.2, -0.1, 0.1]),
        Rr=np.eye(3),
        omega_r=np.zeros(3),
    ).pack()
    arc = st.solve(loop, y0, st.SolverConfig(dt=1e-3, t_max=1.0, j_max=10))
    rep = st.certify_arc(arc, loop)
    assert not rep.passed
    assert rep.max_flow_increase > 1e-7
    assert any("increased" in f for f in rep.failures)
    assert "status=FAIL" in rep.as_text()


def test_certify_rejects_mismatched_monitor(fig3_cfg):
    cfg = dataclasses.replace(fig3_cfg, t_max=0.2)
    res = st.simulate_member(cfg, cfg.members[2])
    with pytest.raises(ContractError, match="mismatch"):
        st.certify_arc(res.arc, res.loop, monitor="smooth")


def test_certify_smooth_reports_torque_continuity(fig4_cfg):
    cfg = dataclasses.replace(fig4_cfg, t_max=1.0)
    member = next(m for m in cfg.members if m.controller == "smooth")
    res = st.simulate_member(cfg, member)
    assert res.report.max_torque_jump == 0.0
    assert res.report.torque_continuity_ok
