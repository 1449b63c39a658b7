import inspect
import math

import numpy as np
import pytest

import so3track as st
from so3track.errors import ContractError

E1, E2, E3 = np.eye(3)


def random_basic_state(rng):
    return st.BasicLoopState(
        Re=st.random_rotation(rng),
        theta=rng.uniform(-math.pi, math.pi),
        omega_e=rng.standard_normal(3),
        Rr=st.random_rotation(rng),
        omega_r=rng.standard_normal(3),
    )


# --- warp-angle subsystem ----------------------------------------------------


def test_warp_rate_zero_at_target(paper_params, paper_gains):
    assert st.warp_rate(np.eye(3), 0.0, paper_params, paper_gains) == 0.0


def test_warp_rate_pure_quadratic_pull(paper_params, paper_gains):
    # rotations about e1 have their gradient direction orthogonal to the warp
    # axis, leaving only the quadratic term
    p = paper_params
    for theta in (0.5, -1.1, 2.0):
        T = st.angle_axis(1.3, E1)
        R = T @ st.warp_rotation(theta, p).T
        rate = st.warp_rate(R, theta, p, paper_gains)
        assert rate == pytest.approx(-paper_gains.k_theta * p.gamma * theta, abs=1e-12)


def test_warp_rate_descends(paper_params, paper_gains):
    rng = np.random.default_rng(0)
    for _ in range(200):
        R = st.random_rotation(rng)
        theta = rng.uniform(-math.pi, math.pi)
        assert st.warp_rate(R, theta, paper_params, paper_gains) * st.grad_warp(
            R, theta, paper_params
        ) <= 0.0


def test_warp_reset_singleton(paper_params):
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert st.warp_reset(st.random_rotation(rng), paper_params) == 0.9 * math.pi


def test_warp_reset_drops_potential_by_gap(paper_params):
    p = paper_params
    rng = np.random.default_rng(2)
    found = 0
    while found < 25:
        R = st.random_rotation(rng)
        theta = rng.uniform(-math.pi, math.pi)
        if st.gap(R, theta, p) < p.delta:
            continue
        found += 1
        post = st.warp_reset(R, p)
        assert st.value(R, post, p) <= st.value(R, theta, p) - p.delta


def test_warp_reset_tie_break_prefers_first():
    # at the identity the potential is even in theta, so {a, -a} ties exactly
    p = st.design_params(
        np.diag([2.0, 4.0, 6.0]), [0.9 * math.pi, -0.9 * math.pi], gamma_frac=0.5, delta_frac=0.5
    )
    a, b = p.theta_set
    assert st.value(np.eye(3), a, p) == st.value(np.eye(3), b, p)
    assert st.warp_reset(np.eye(3), p) == a


def test_flow_and_jump_sets(paper_params):
    p = paper_params
    assert st.in_flow_set(np.eye(3), 0.0, p)
    assert not st.in_jump_set(np.eye(3), 0.0, p)
    for cp in st.undesired_critical_points(p):
        assert st.in_jump_set(cp.rotation, cp.theta, p)
    # boundary states belong to both closed sets
    import dataclasses

    rng = np.random.default_rng(3)
    R = st.random_rotation(rng)
    g = st.gap(R, 0.3, p)
    if 0.0 < g < 4.0 * p.spectral.delta_star / math.pi**2:
        boundary = dataclasses.replace(p, delta=g)
        assert st.in_flow_set(R, 0.3, boundary) and st.in_jump_set(R, 0.3, boundary)


# --- torque laws -------------------------------------------------------------


def test_torque_basic_zero_at_attractor(paper_params, paper_gains, paper_inertia):
    tau = st.torque_basic(
        np.eye(3), 0.0, np.zeros(3), np.zeros(3), np.zeros(3), paper_params, paper_gains,
        paper_inertia,
    )
    assert np.array_equal(tau, np.zeros(3))


def test_basic_lyapunov_rate_identity(paper_params, paper_gains, paper_inertia):
    """Chain-rule derivative of the basic monitor equals its closed form.

    Along closed-loop flows the monitor rate must be
    -k_omega |omega_e|^2 - k_R k_theta |grad_warp|^2; this pins the coupling
    matrix, feedforward, and gradient conventions simultaneously.
    """
    p, gn, J = paper_params, paper_gains, paper_inertia
    ref = st.make_reference("paper_sine", m_bound=2.0, omega_r_bound=25.0)
    loop = st.make_loop("basic", p, gn, J, ref, check=False)
    rng = np.random.default_rng(4)
    for _ in range(50):
        s = random_basic_state(rng)
        y = s.pack()
        t = rng.uniform(0.0, 10.0)
        ydot = loop.flow(t, y, None)
        g_rot, g_th = st.gradients(s.Re, s.theta, p)
        theta_dot = ydot[9]
        we_dot = ydot[10:13]
        ldot = gn.k_R * (2.0 * s.omega_e @ g_rot + g_th * theta_dot) + s.omega_e @ (
            J.J @ we_dot
        )
        expected = -gn.k_omega * (s.omega_e @ s.omega_e) - gn.k_R * gn.k_theta * g_th**2
        assert ldot == pytest.approx(expected, abs=1e-9 * max(1.0, abs(expected)))


def test_flow_torque_matches_public_op(paper_params, paper_gains, paper_inertia):
    # the inlined torque inside the loop flow must equal torque_basic exactly
    p, gn, J = paper_params, paper_gains, paper_inertia
    ref = st.make_reference("paper_sine", m_bound=2.0, omega_r_bound=25.0)
    loop = st.make_loop("basic", p, gn, J, ref, check=False)
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = random_basic_state(rng)
        y = s.pack()
        t = rng.uniform(0.0, 10.0)
        ydot = loop.flow(t, y, None)
        tau = st.torque_basic(
            s.Re, s.theta, s.omega_e, s.omega_r, ref.z_at(t), p, gn, J
        )
        # recover the applied torque from the velocity equation
        rhs = J.J @ ydot[10:13]
        sig = st.coupling_times(s.Re, s.omega_e, s.omega_r, J)
        ups = st.feedforward(s.Re, s.omega_r, ref.z_at(t), J)
        assert np.allclose(rhs - sig + ups, tau, atol=1e-12)
        assert np.allclose(loop.torque(t, y, None), tau, atol=0.0)


def test_smooth_lyapunov_rate_identity(paper_params, paper_gains, paper_inertia):
    """Filtered-monitor rate matches its closed form for both filter variants."""
    p, gn, J = paper_params, paper_gains, paper_inertia
    ref = st.make_reference("paper_sine", m_bound=2.0, omega_r_bound=25.0)
    rng = np.random.default_rng(6)
    for relaxed in (False, True):
        loop = st.make_loop(
            "smooth", p, gn, J, ref, relaxed_filter=relaxed, check=False
        )
        for _ in range(30):
            base = random_basic_state(rng)
            s = st.SmoothLoopState(**base.__dict__, zeta=rng.standard_normal(3))
            y = s.pack()
            t = rng.uniform(0.0, 10.0)
            ydot = loop.flow(t, y, None)
            g_rot, g_th = st.gradients(s.Re, s.theta, p)
            theta_dot = ydot[9]
            we_dot = ydot[10:13]
            zeta_dot = ydot[25:28]
            rate_g = st.grad_rotation_rate(s.Re, s.theta, s.omega_e, theta_dot, p)
            mism = s.zeta - g_rot
            wdot = (
                2.0 * s.omega_e @ g_rot
                + g_th * theta_dot
                + 2.0 * gn.rho * mism @ (zeta_dot - rate_g)
            )
            ldot = gn.k_R * wdot + s.omega_e @ (J.J @ we_dot)
            if relaxed:
                expected = (
                    -gn.k_omega * (s.omega_e @ s.omega_e)
                    - gn.k_R * gn.k_theta * g_th**2
                    - 2.0 * gn.k_R * gn.rho * gn.k_zeta * (mism @ mism)
                )
            else:
                expected = (
                    -gn.k_omega * (s.omega_e @ s.omega_e)
                    - gn.k_R * gn.k_theta * g_th**2
                    - 2.0 * gn.k_R * gn.rho * gn.k_zeta * (mism @ mism)
                    - 2.0 * gn.k_R * gn.rho * (mism @ rate_g)
                    - 2.0 * gn.k_R * (s.omega_e @ mism)
                )
            assert ldot == pytest.approx(expected, abs=1e-8 * max(1.0, abs(expected)))


def test_smooth_torque_ignores_warp_jumps(paper_params, paper_gains, paper_inertia):
    p, gn, J = paper_params, paper_gains, paper_inertia
    rng = np.random.default_rng(7)
    base = random_basic_state(rng)
    z = rng.standard_normal(3)
    zeta = rng.standard_normal(3)
    pre = st.torque_smooth(base.Re, zeta, base.omega_e, base.omega_r, z, p, gn, J)
    post = st.torque_smooth(base.Re, zeta, base.omega_e, base.omega_r, z, p, gn, J)
    assert np.array_equal(pre, post)  # theta is not even an input


def test_zeta_flow_stationary_at_gradient(paper_params, paper_gains):
    rng = np.random.default_rng(8)
    R = st.random_rotation(rng)
    theta = 0.8
    g = st.grad_rotation(R, theta, paper_params)
    zdot = st.zeta_flow(R, theta, g, np.zeros(3), paper_params, paper_gains, relaxed=False)
    assert np.array_equal(zdot, np.zeros(3))


def test_filtered_potential_properties(paper_params, paper_gains):
    p, rho = paper_params, paper_gains.rho
    assert st.filtered_value(np.eye(3), 0.0, np.zeros(3), p, rho) == 0.0
    rng = np.random.default_rng(9)
    R = st.random_rotation(rng)
    theta = rng.uniform(-math.pi, math.pi)
    g = st.grad_rotation(R, theta, p)
    assert st.filtered_value(R, theta, g, p, rho) == st.value(R, theta, p)


def test_filtered_gap_margin_with_compliant_rho(paper_params, paper_gains):
    # with rho below (delta - delta_prime)/c_psi^2 the unwanted critical
    # points keep a filtered-gap margin above delta_prime
    p = paper_params
    dp = paper_gains.delta_prime
    c_psi = 2.0 * p.spectral.a_bar_max
    rho_ok = 0.9 * (p.delta - dp) / c_psi**2
    for cp in st.undesired_critical_points(p):
        fg = st.filtered_gap(cp.rotation, cp.theta, np.zeros(3), p, rho_ok)
        assert fg > dp
        assert st.in_jump_set_smooth(cp.rotation, cp.theta, np.zeros(3), p, rho_ok, dp)


def test_smooth_set_membership(paper_params, paper_gains):
    p, gn = paper_params, paper_gains
    assert st.in_flow_set_smooth(np.eye(3), 0.0, np.zeros(3), p, gn.rho, gn.delta_prime)
    assert not st.in_jump_set_smooth(np.eye(3), 0.0, np.zeros(3), p, gn.rho, gn.delta_prime)


# --- velocity-free law -------------------------------------------------------


def test_aux_flow_stationary_at_target(paper_params, paper_gains):
    Rt_dot, tb_dot = st.aux_flow(np.eye(3), 0.0, np.zeros(3), paper_params, paper_gains)
    assert np.array_equal(Rt_dot, np.zeros((3, 3)))
    assert tb_dot == 0.0


def test_aux_damping_output_zero_at_target(paper_params, paper_gains):
    beta = paper_gains.Gamma @ st.grad_rotation(np.eye(3), 0.0, paper_params)
    assert np.array_equal(beta, np.zeros(3))


def test_velocity_free_gain_relation(paper_gains):
    # the study picks k_beta so that 2 k_beta Gamma^-1 equals k_omega
    rel = 2.0 * paper_gains.k_beta * np.linalg.inv(paper_gains.Gamma)
    assert np.allclose(rel, paper_gains.k_omega * np.eye(3), atol=1e-15)


def test_velocity_free_signature_excludes_velocities():
    names = set(inspect.signature(st.torque_velocity_free).parameters)
    forbidden = {"omega", "omega_e", "omega_y", "w", "we", "velocity", "angular_velocity"}
    assert names.isdisjoint(forbidden)
    assert "omega_r" in names  # the reference velocity is known, not measured


def test_velocity_free_torque_zero_at_attractor(paper_params, paper_gains, paper_inertia):
    tau = st.torque_velocity_free(
        np.eye(3), 0.0, np.eye(3), 0.0, np.zeros(3), np.zeros(3), paper_params, paper_gains,
        paper_inertia,
    )
    assert np.array_equal(tau, np.zeros(3))


def test_velocity_free_lyapunov_rate_identity(paper_params, paper_gains, paper_inertia):
    p, gn, J = paper_params, paper_gains, paper_inertia
    ref = st.make_reference("paper_sine", m_bound=2.0, omega_r_bound=25.0)
    loop = st.make_loop("velocity_free", p, gn, J, ref, check=False)
    rng = np.random.default_rng(10)
    for _ in range(50):
        base = random_basic_state(rng)
        s = st.VelocityFreeLoopState(
            **base.__dict__, Rtilde=st.random_rotation(rng), theta_bar=rng.uniform(-2.0, 2.0)
        )
        y = s.pack()
        t = rng.uniform(0.0, 10.0)
        ydot = loop.flow(t, y, None)
        g1, g1_th = st.gradients(s.Re, s.theta, p)
        g2, g2_th = st.gradients(s.Rtilde, s.theta_bar, p)
        we_dot = ydot[10:13]
        # chain rule: U(Rtilde, theta_bar) flows with drive omega_e - beta
        beta = gn.Gamma @ g2
        ldot = (
            gn.k_R * (2.0 * s.omega_e @ g1 + g1_th * ydot[9])
            + gn.k_beta * (2.0 * (s.omega_e - beta) @ g2 + g2_th * ydot[34])
            + s.omega_e @ (J.J @ we_dot)
        )
        expected = (
            -gn.k_R * gn.k_theta * g1_th**2
            - gn.k_beta * gn.k_theta * g2_th**2
            - 2.0 * gn.k_beta * (g2 @ (gn.Gamma @ g2))
        )
        assert ldot == pytest.approx(expected, abs=1e-8 * max(1.0, abs(expected)))


def test_velocity_free_dual_jump(paper_params, paper_gains, paper_inertia):
    # both warp angles reset in a single jump event when both gaps are large
    p = paper_params
    ref = st.make_reference("rest", m_bound=1.0, omega_r_bound=5.0)
    loop = st.make_loop("velocity_free", p, paper_gains, paper_inertia, ref, check=False)
    bad = st.undesired_critical_points(p)[0].rotation
    s = st.VelocityFreeLoopState(
        Re=bad, theta=0.0, omega_e=np.zeros(3), Rr=np.eye(3), omega_r=np.zeros(3),
        Rtilde=bad.copy(), theta_bar=0.0,
    )
    y = s.pack()
    assert loop.in_jump_set(0.0, y, None)
    y_post = loop.jump(0.0, y, None)
    assert y_post[9] == 0.9 * math.pi
    assert y_post[34] == 0.9 * math.pi


# --- non-hybrid baseline -----------------------------------------------------


def test_non_hybrid_equals_basic_at_zero_warp(paper_params, paper_gains, paper_inertia):
    rng = np.random.default_rng(11)
    for _ in range(20):
        s = random_basic_state(rng)
        z = rng.standard_normal(3)
        a = st.torque_non_hybrid(
            s.Re, s.omega_e, s.omega_r, z, paper_params, paper_gains, paper_inertia
        )
        b = st.torque_basic(
            s.Re, 0.0, s.omega_e, s.omega_r, z, paper_params, paper_gains, paper_inertia
        )
        assert np.array_equal(a, b)


def test_non_hybrid_stalls_at_critical_rotation(paper_params, paper_gains, paper_inertia):
    # the gradient term vanishes at the half-turn about e3, so the baseline
    # torque collapses to the feedforward alone
    R = st.angle_axis(math.pi, E3)
    wr = np.array([0.1, 0.2, -0.1])
    z = np.array([0.0, 0.5, 0.1])
    tau = st.torque_non_hybrid(R, np.zeros(3), wr, z, paper_params, paper_gains, paper_inertia)
    ups = st.feedforward(R, wr, z, paper_inertia)
    assert np.linalg.norm(tau - ups) <= 2.0 * paper_gains.k_R * 1e-12


def test_non_hybrid_loop_never_jumps(paper_params, paper_gains, paper_inertia):
    ref = st.make_reference("rest", m_bound=1.0, omega_r_bound=5.0)
    loop = st.make_loop("non_hybrid", paper_params, paper_gains, paper_inertia, ref, check=False)
    bad = st.undesired_critical_points(paper_params)[0].rotation
    y = st.BasicLoopState(
        Re=bad, theta=0.0, omega_e=np.zeros(3), Rr=np.eye(3), omega_r=np.zeros(3)
    ).pack()
    assert loop.in_flow_set(0.0, y, None)
    assert not loop.in_jump_set(0.0, y, None)
    ydot = loop.flow(0.0, y, None)
    assert ydot[9] == 0.0  # warp angle frozen


# --- gains validation --------------------------------------------------------


def test_gains_validation(paper_params):
    with pytest.raises(ContractError):
        st.Gains(k_R=-1.0).check_for("basic", paper_params)
    with pytest.raises(ContractError):
        st.Gains(k_R=1.0, k_theta=1.0).check_for("basic", paper_params)  # k_omega missing
    with pytest.raises(ContractError):
        st.Gains(k_R=1.0, k_omega=1.0, k_theta=1.0, k_zeta=10.0, rho=0.001).check_for(
            "smooth", paper_params
        )  # delta_prime missing
    with pytest.raises(ContractError):
        st.Gains(
            k_R=1.0, k_omega=1.0, k_theta=1.0, k_beta=1.0, Gamma=np.diag([1.0, 1.0, -1.0])
        ).check_for("velocity_free", paper_params)


def test_gains_warning_for_large_rho(paper_params, paper_gains):
    notes = paper_gains.check_for("smooth", paper_params)
    assert any("rho" in n and "0.00162" in n for n in notes)
    assert any("k_zeta" in n for n in notes)
    # a compliant configuration produces no advisories
    quiet = st.Gains(
        k_R=1.5, k_omega=0.2, k_theta=50.0, k_zeta=8000.0, rho=0.001, delta_prime=0.162
    )
    kz_star = st.filter_gain_bound(quiet, paper_params)
    assert quiet.k_zeta > kz_star
    assert quiet.check_for("smooth", paper_params) == []
