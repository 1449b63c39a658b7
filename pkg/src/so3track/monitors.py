"""Lyapunov evaluation and certification of recorded hybrid arcs.

Each closed loop has a monitor function that must not increase along flows
and must drop by a known amount at every jump.  `certify_arc` replays those
two properties over a recorded arc, checks the jump-count bound implied by
the initial monitor value, and optionally fits an exponential rate to the
squared distance from the attractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controllers import filtered_value
from .errors import ContractError
from .potential import grad_rotation, value


def lyapunov_basic(state, params, gains, inertia, *, U_value=None) -> float:
    """k_R U(R_e, theta) + kinetic energy of the velocity error."""
    U = value(state.Re, state.theta, params) if U_value is None else U_value
    return gains.k_R * U + 0.5 * float(state.omega_e @ (inertia.J @ state.omega_e))


def lyapunov_smooth(state, params, gains, inertia, *, W_value=None) -> float:
    """k_R times the filtered potential plus kinetic energy."""
    W = (
        filtered_value(state.Re, state.theta, state.zeta, params, gains.rho)
        if W_value is None
        else W_value
    )
    return gains.k_R * W + 0.5 * float(state.omega_e @ (inertia.J @ state.omega_e))


def lyapunov_velocity_free(state, params, gains, inertia) -> float:
    """k_R U at the error rotation plus k_beta U at the auxiliary rotation plus kinetic."""
    U1 = value(state.Re, state.theta, params)
    U2 = value(state.Rtilde, state.theta_bar, params)
    kin = 0.5 * float(state.omega_e @ (inertia.J @ state.omega_e))
    return gains.k_R * U1 + gains.k_beta * U2 + kin


def lyapunov_cross(state, params, gains, inertia, eps: float) -> float:
    """Diagnostic monitor with an eps cross term between velocity and gradient.

    Positive definite for eps below `cross_eps_bound`; used to visualize the
    exponential decay envelope, not for certification.
    """
    g = grad_rotation(state.Re, state.theta, params)
    return lyapunov_basic(state, params, gains, inertia) + eps * float(
        state.omega_e @ (inertia.J @ g)
    )


def cross_eps_bound(params, gains, inertia, alpha1: float | None = None) -> float:
    """Largest eps for which the cross-term monitor stays positive definite."""
    if alpha1 is None:
        sp = params.spectral
        alpha1 = max(7.0 * sp.a_bar_max**2 / sp.a_bar_min, 6.0 * params.gamma)
    return (1.0 / inertia.lam_max) * math.sqrt(2.0 * gains.k_R * inertia.lam_min / alpha1)


def exponential_fit(t: np.ndarray, values: np.ndarray, floor: float = 1e-12):
    """Least-squares fit of log(values) vs t over samples above the floor.

    Returns (slope, r_squared, n_used) or None when fewer than 10 samples
    survive.  The floor keeps the fit in the regime where the signal is above
    integration and rounding noise.
    """
    mask = values > floor
    if mask.sum() < 10:
        return None
    x = t[mask]
    yv = np.log(values[mask])
    xm = x.mean()
    ym = yv.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        return None
    slope = float(((x - xm) * (yv - ym)).sum()) / sxx
    resid = yv - (ym + slope * (x - xm))
    sstot = float(((yv - ym) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sstot if sstot > 0.0 else 0.0
    return slope, r2, int(mask.sum())


@dataclass
class CertificationReport:
    controller: str
    n_samples: int
    n_jumps: int
    noise_enabled: bool
    flow_tol_per_step: float
    max_flow_increase: float
    flow_monotone_ok: bool | None
    required_jump_drop: float
    min_jump_drop: float | None
    jump_drops_ok: bool
    jump_bound: int
    jump_count_ok: bool
    max_torque_jump: float | None
    torque_continuity_ok: bool | None
    terminal_dist: float
    terminal_omega: float
    terminal_theta: float
    fit_slope: float | None = None
    fit_r2: float | None = None
    fit_n: int | None = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [
            f"certification: controller={self.controller} "
            f"status={'PASS' if self.passed else 'FAIL'}",
            f"  samples={self.n_samples} jumps={self.n_jumps} jump_bound={self.jump_bound} "
            f"noise={'on' if self.noise_enabled else 'off'}",
            f"  max_flow_increase_per_step={self.max_flow_increase:.6g} "
            f"(tol {self.flow_tol_per_step:.6g}, "
            f"{'enforced' if self.flow_monotone_ok is not None else 'informational under noise'})",
            f"  min_jump_drop={self.min_jump_drop if self.min_jump_drop is not None else 'n/a'} "
            f"required>={self.required_jump_drop:.6g}"
            + ("" if not self.noise_enabled else " (informational under noise)"),
        ]
        if self.max_torque_jump is not None:
            out.append(f"  max_torque_jump={self.max_torque_jump:.6g}")
        out.append(
            f"  terminal: dist_Re={self.terminal_dist:.6g} "
            f"|omega_e|={self.terminal_omega:.6g} theta={self.terminal_theta:.6g}"
        )
        if self.fit_slope is not None:
            out.append(
                f"  exp_fit: slope={self.fit_slope:.6g} r2={self.fit_r2:.6g} n={self.fit_n}"
            )
        for f in self.failures:
            out.append(f"  FAIL: {f}")
        return out

    def as_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def required_jump_drop(loop) -> float:
    kind = loop.kind
    if kind == "basic":
        return loop.gains.k_R * loop.params.delta
    if kind == "smooth":
        return loop.gains.k_R * loop.gains.delta_prime
    if kind == "velocity_free":
        return min(loop.gains.k_R, loop.gains.k_beta) * loop.params.delta
    return 0.0


def certify_arc(arc, loop, monitor: str | None = None, *, flow_tol: float = 1e-7,
                fit: bool = True, fit_floor: float = 1e-12) -> CertificationReport:
    """Check the monitor decrease properties of a recorded arc.

    The per-step flow tolerance covers RK4 truncation at the default step; it
    scales as dt^4 if the step changes.  Under measurement noise the flow
    monotonicity of the monitor is not a theorem, so it is reported but not
    enforced.  The monitor kind must match the controller that produced the
    arc.
    """
    if monitor is None:
        monitor = loop.kind
    if monitor != arc.controller or loop.kind != arc.controller:
        raise ContractError(
            f"monitor/controller mismatch: arc from '{arc.controller}', "
            f"monitor '{monitor}', loop '{loop.kind}'"
        )
    failures: list[str] = []
    lyap = arc.column("lyap")
    same_segment = arc.j[1:] == arc.j[:-1]
    deltas = lyap[1:][same_segment] - lyap[:-1][same_segment]
    max_inc = float(deltas.max()) if deltas.size else 0.0
    noise_on = loop.noise is not None
    if noise_on:
        flow_ok = None
    else:
        flow_ok = max_inc <= flow_tol
        if not flow_ok:
            failures.append(
                f"monitor increased by {max_inc:.3g} on a flow step (tol {flow_tol:.3g})"
            )

    req = required_jump_drop(loop)
    drops = [ev.info["lyap_pre"] - ev.info["lyap_post"] for ev in arc.jumps if ev.info]
    min_drop = min(drops) if drops else None
    drops_ok = all(d >= req - 1e-9 for d in drops)
    if not drops_ok and not noise_on:
        # Noise-triggered jumps fire on the measured state, so the true-state
        # drop is only guaranteed for exact measurements.
        failures.append(f"a jump dropped the monitor by {min_drop:.6g} < required {req:.6g}")
    if arc.controller == "non_hybrid" and arc.jumps:
        failures.append("the non-hybrid loop produced jumps")

    bound = max(1, math.ceil(lyap[0] / req)) if req > 0.0 else 0
    count_ok = len(arc.jumps) <= bound if req > 0.0 else len(arc.jumps) == 0
    if not count_ok:
        failures.append(f"jump count {len(arc.jumps)} exceeds the bound {bound}")

    tau_jumps = [ev.info["tau_jump"] for ev in arc.jumps if "tau_jump" in ev.info]
    max_tau_jump = max(tau_jumps) if tau_jumps else None
    torque_ok = None
    if arc.controller == "smooth":
        torque_ok = max_tau_jump is None or max_tau_jump <= 0.0
        if not torque_ok:
            failures.append(f"smooth torque jumped by {max_tau_jump:.3g} at a reset")

    we = np.sqrt(
        arc.column("we_x") ** 2 + arc.column("we_y") ** 2 + arc.column("we_z") ** 2
    )
    slope = r2 = n_used = None
    if fit:
        t_tail = arc.jumps[-1].t if arc.jumps else 0.0
        tail = arc.t >= t_tail
        vals = arc.column("U")[tail] + we[tail] ** 2
        res = exponential_fit(arc.t[tail], vals, floor=fit_floor)
        if res is not None:
            slope, r2, n_used = res

    return CertificationReport(
        controller=arc.controller,
        n_samples=len(arc),
        n_jumps=len(arc.jumps),
        noise_enabled=noise_on,
        flow_tol_per_step=flow_tol,
        max_flow_increase=max_inc,
        flow_monotone_ok=flow_ok,
        required_jump_drop=req,
        min_jump_drop=min_drop,
        jump_drops_ok=drops_ok,
        jump_bound=bound,
        jump_count_ok=count_ok,
        max_torque_jump=max_tau_jump,
        torque_continuity_ok=torque_ok,
        terminal_dist=float(arc.column("dist_Re")[-1]),
        terminal_omega=float(we[-1]),
        terminal_theta=float(arc.column("theta")[-1]),
        fit_slope=slope,
        fit_r2=r2,
        fit_n=n_used,
        failures=failures,
    )
