"""Hybrid warp-angle subsystem and the four attitude tracking feedback laws.

The warp angle flows down the potential gradient while the extended state is
away from the unwanted critical configurations, and is reset to the best
value from a finite set when the gap function says the state is near one.
Three hybrid torque laws build on this mechanism:

  * basic: gradient feedback plus velocity damping; the torque jumps with the
    warp angle.
  * smooth: the gradient term is routed through a first-order filter state
    that does not jump, so the torque stays continuous; flow and jump sets
    use a filtered potential with its own (smaller) gap.
  * velocity_free: damping is generated by an auxiliary rotation state driven
    by attitude information only; the torque never reads an angular velocity.

A non-hybrid baseline (the basic law with the warp angle frozen at zero) is
included for comparisons.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, SolverError
from .hybrid import HybridSystem
from .potential import (
    PotentialParams,
    grad_rotation,
    gradients,
    grad_rotation_rate,
    gap,
    value,
    warp_rotation,
)
from .rigid_body import Inertia, Reference, _cross, feedforward, coupling_times
from .so3 import exp_so3, orthonormalize, rot_distance, skew

CONTROLLER_KINDS = ("basic", "smooth", "velocity_free", "non_hybrid")


class Measurement(NamedTuple):
    """One sample of measurement noise, held constant over an integration step."""

    E: np.ndarray  # attitude noise rotation, R_y = R @ E
    n_omega: np.ndarray


@dataclass(frozen=True, eq=False)
class Gains:
    """Feedback gains; which fields are required depends on the controller."""

    k_R: float
    k_omega: float | None = None
    k_theta: float | None = None
    k_zeta: float | None = None
    k_beta: float | None = None
    Gamma: np.ndarray | None = None
    rho: float | None = None
    delta_prime: float | None = None

    def check_for(self, kind: str, params: PotentialParams) -> list[str]:
        """Validate gains for a controller kind; returns advisory warnings.

        Hard violations raise ContractError.  The filter-rate sufficient bound
        and the filtered-gap margin bound are advisory: values beyond them are
        reported, not rejected.
        """
        notes: list[str] = []
        if self.k_R <= 0.0:
            raise ContractError("k_R must be positive")
        if kind != "non_hybrid":
            if self.k_theta is None or self.k_theta <= 0.0:
                raise ContractError("k_theta must be positive")
        if kind in ("basic", "smooth", "non_hybrid"):
            if self.k_omega is None or self.k_omega <= 0.0:
                raise ContractError("k_omega must be positive")
        if kind == "smooth":
            if self.k_zeta is None or self.k_zeta <= 0.0:
                raise ContractError("k_zeta must be positive")
            if self.rho is None or self.rho <= 0.0:
                raise ContractError("rho must be positive")
            if self.delta_prime is None or not 0.0 < self.delta_prime < params.delta:
                raise ContractError("delta_prime must lie in (0, delta)")
            c_psi = 2.0 * params.spectral.a_bar_max
            rho_bound = (params.delta - self.delta_prime) / (c_psi * c_psi)
            if self.rho >= rho_bound:
                notes.append(
                    f"rho = {self.rho} exceeds the certified filtered-gap bound "
                    f"(delta - delta_prime)/c_psi^2 = {rho_bound:.6g}; the jump-set "
                    "margin at the unwanted critical points is no longer guaranteed"
                )
            kz_star = filter_gain_bound(self, params)
            if self.k_zeta <= kz_star:
                notes.append(
                    f"k_zeta = {self.k_zeta} is below the sufficient bound "
                    f"k_zeta* = {kz_star:.6g}; flow decrease of the filtered "
                    "monitor is not certified (it may still hold)"
                )
        if kind == "velocity_free":
            if self.k_beta is None or self.k_beta <= 0.0:
                raise ContractError("k_beta must be positive")
            if self.Gamma is None:
                raise ContractError("Gamma matrix is required")
            G = np.asarray(self.Gamma, dtype=float)
            if G.shape != (3, 3) or np.linalg.norm(G - G.T) > 1e-12:
                raise ContractError("Gamma must be symmetric 3x3")
            if np.linalg.eigvalsh(G)[0] <= 0.0:
                raise ContractError("Gamma must be positive definite")
        return notes


def filter_gain_bound(gains: Gains, params: PotentialParams) -> float:
    """Sufficient filter rate max{k_R (1 + rho c_R)^2 / (rho k_omega), c_theta^2 k_theta rho}."""
    sp = params.spectral
    c_R = sp.a_bar_fro
    c_theta = sp.a_bar_fro + 2.0 * sp.a_bar_max
    a = gains.k_R * (1.0 + gains.rho * c_R) ** 2 / (gains.rho * gains.k_omega)
    b = c_theta * c_theta * gains.k_theta * gains.rho
    return max(a, b)


# ---------------------------------------------------------------------------
# Warp-angle subsystem.


def warp_rate(R, theta: float, p: PotentialParams, gains: Gains) -> float:
    """Flow of the warp angle: minus k_theta times the warp gradient."""
    return -gains.k_theta * gradients(R, theta, p)[1]


def warp_reset(R, p: PotentialParams) -> float:
    """Reset value: the angle from the reset set minimizing the potential at R.

    Ties break deterministically to the earliest angle in the stored order.
    """
    AR = p.A @ R
    best_t = p.theta_set[0]
    best_v = math.inf
    for tp in p.theta_set:
        Ra = warp_rotation(tp, p)
        v = p._trA - (AR * Ra.T).sum() + 0.5 * p.gamma * tp * tp
        if v < best_v:
            best_v = v
            best_t = tp
    return best_t


def in_flow_set(R, theta: float, p: PotentialParams) -> bool:
    return gap(R, theta, p) <= p.delta


def in_jump_set(R, theta: float, p: PotentialParams) -> bool:
    return gap(R, theta, p) >= p.delta


# ---------------------------------------------------------------------------
# Filtered potential used by the smooth law.


def filtered_value(R, theta: float, zeta, p: PotentialParams, rho: float) -> float:
    """Potential plus rho times the squared filter mismatch."""
    g_rot = grad_rotation(R, theta, p)
    d = np.asarray(zeta, dtype=float) - g_rot
    return value(R, theta, p) + rho * float(d @ d)


def filtered_gap(R, theta: float, zeta, p: PotentialParams, rho: float) -> float:
    """filtered_value at theta minus its best value over the reset set."""
    here = filtered_value(R, theta, zeta, p, rho)
    best = math.inf
    for tp in p.theta_set:
        v = filtered_value(R, tp, zeta, p, rho)
        if v < best:
            best = v
    return here - best


def in_flow_set_smooth(R, theta: float, zeta, p: PotentialParams, rho: float,
                       delta_prime: float) -> bool:
    return filtered_gap(R, theta, zeta, p, rho) <= delta_prime


def in_jump_set_smooth(R, theta: float, zeta, p: PotentialParams, rho: float,
                       delta_prime: float) -> bool:
    return filtered_gap(R, theta, zeta, p, rho) >= delta_prime


# ---------------------------------------------------------------------------
# Torque laws.


def torque_basic(Re, theta, omega_e, omega_r, z, p: PotentialParams, gains: Gains,
                 inertia: Inertia) -> np.ndarray:
    """Feedforward minus gradient feedback minus velocity damping."""
    g_rot = grad_rotation(Re, theta, p)
    return feedforward(Re, omega_r, z, inertia) - 2.0 * gains.k_R * g_rot - gains.k_omega * omega_e


def torque_smooth(Re, zeta, omega_e, omega_r, z, p: PotentialParams, gains: Gains,
                  inertia: Inertia) -> np.ndarray:
    """Like the basic law but with the filter state in place of the gradient.

    The filter state does not jump, so this torque is continuous across warp
    resets.
    """
    return (
        feedforward(Re, omega_r, z, inertia)
        - 2.0 * gains.k_R * np.asarray(zeta, dtype=float)
        - gains.k_omega * omega_e
    )


def zeta_flow(Re, theta: float, zeta, omega_e, p: PotentialParams, gains: Gains,
              relaxed: bool = False) -> np.ndarray:
    """Filter dynamics tracking the rotation gradient.

    Standard form: -k_zeta (zeta - grad).  The relaxed form adds the gradient
    rate and omega_e / rho, which removes the high-gain requirement on k_zeta.
    """
    g_rot, g_th = gradients(Re, theta, p)
    out = -gains.k_zeta * (np.asarray(zeta, dtype=float) - g_rot)
    if relaxed:
        rate = -gains.k_theta * g_th
        out = out + grad_rotation_rate(Re, theta, omega_e, rate, p) + omega_e / gains.rho
    return out


def aux_flow(Rtilde, theta_bar: float, omega_e, p: PotentialParams, gains: Gains):
    """Rates of the auxiliary rotation and its warp angle.

    The auxiliary rotation is driven by the true relative velocity minus the
    damping output beta = Gamma @ grad_rotation; that is plant physics, the
    control law itself never reads omega_e.
    """
    g_rot, g_th = gradients(Rtilde, theta_bar, p)
    beta = gains.Gamma @ g_rot
    return Rtilde @ skew(np.asarray(omega_e, dtype=float) - beta), -gains.k_theta * g_th


def torque_velocity_free(Re, theta, Rtilde, theta_bar, omega_r, z, p: PotentialParams,
                         gains: Gains, inertia: Inertia) -> np.ndarray:
    """Gradient feedback at the error and auxiliary rotations; no velocity input.

    The signature deliberately excludes every angular velocity of the body;
    damping comes entirely through the auxiliary rotation state.
    """
    g1 = grad_rotation(Re, theta, p)
    g2 = grad_rotation(Rtilde, theta_bar, p)
    return feedforward(Re, omega_r, z, inertia) - 2.0 * gains.k_R * g1 - 2.0 * gains.k_beta * g2


def torque_non_hybrid(Re, omega_e, omega_r, z, p: PotentialParams, gains: Gains,
                      inertia: Inertia) -> np.ndarray:
    """Smooth baseline: the basic law with the warp angle frozen at zero."""
    g_rot = grad_rotation(Re, 0.0, p)
    return feedforward(Re, omega_r, z, inertia) - 2.0 * gains.k_R * g_rot - gains.k_omega * omega_e


# ---------------------------------------------------------------------------
# Loop states.


@dataclass
class BasicLoopState:
    Re: np.ndarray
    theta: float
    omega_e: np.ndarray
    Rr: np.ndarray
    omega_r: np.ndarray

    def pack(self) -> np.ndarray:
        y = np.empty(25)
        y[0:9] = np.asarray(self.Re, dtype=float).ravel()
        y[9] = self.theta
        y[10:13] = self.omega_e
        y[13:22] = np.asarray(self.Rr, dtype=float).ravel()
        y[22:25] = self.omega_r
        return y

    @classmethod
    def unpack(cls, y: np.ndarray) -> "BasicLoopState":
        return cls(
            Re=y[0:9].reshape(3, 3).copy(),
            theta=float(y[9]),
            omega_e=y[10:13].copy(),
            Rr=y[13:22].reshape(3, 3).copy(),
            omega_r=y[22:25].copy(),
        )


@dataclass
class SmoothLoopState(BasicLoopState):
    zeta: np.ndarray = None

    def pack(self) -> np.ndarray:
        y = np.empty(28)
        y[0:25] = super().pack()
        y[25:28] = self.zeta
        return y

    @classmethod
    def unpack(cls, y: np.ndarray) -> "SmoothLoopState":
        base = BasicLoopState.unpack(y)
        return cls(**base.__dict__, zeta=y[25:28].copy())


@dataclass
class VelocityFreeLoopState(BasicLoopState):
    Rtilde: np.ndarray = None
    theta_bar: float = 0.0

    def pack(self) -> np.ndarray:
        y = np.empty(35)
        y[0:25] = super().pack()
        y[25:34] = np.asarray(self.Rtilde, dtype=float).ravel()
        y[34] = self.theta_bar
        return y

    @classmethod
    def unpack(cls, y: np.ndarray) -> "VelocityFreeLoopState":
        base = BasicLoopState.unpack(y)
        return cls(**base.__dict__, Rtilde=y[25:34].reshape(3, 3).copy(), theta_bar=float(y[34]))

    def Rbar(self) -> np.ndarray:
        """Auxiliary estimate rotation, reconstructed as R_e @ Rtilde^T."""
        return self.Re @ self.Rtilde.T


@dataclass(frozen=True)
class NoiseModel:
    """Per-axis measurement noise standard deviations (zero disables a channel)."""

    sigma_R: float = 0.0
    sigma_omega: float = 0.0

    @property
    def enabled(self) -> bool:
        return self.sigma_R > 0.0 or self.sigma_omega > 0.0


# ---------------------------------------------------------------------------
# Closed loops.


class _TrackingLoop(HybridSystem):
    """Shared plumbing: reference inputs, measurement sampling, projection."""

    state_cls = BasicLoopState
    rotation_slices: tuple = (slice(0, 9), slice(13, 22))

    def __init__(self, params: PotentialParams, gains: Gains, inertia: Inertia,
                 reference: Reference, noise: NoiseModel | None = None):
        self.params = params
        self.gains = gains
        self.inertia = inertia
        self.reference = reference
        self.noise = noise if (noise is not None and noise.enabled) else None

    def check(self) -> list[str]:
        return self.gains.check_for(self.kind, self.params)

    def sample_measurement(self, rng):
        n = self.noise
        if n is None:
            return None
        E = exp_so3(rng.normal(0.0, n.sigma_R, 3)) if n.sigma_R > 0.0 else np.eye(3)
        nw = rng.normal(0.0, n.sigma_omega, 3) if n.sigma_omega > 0.0 else np.zeros(3)
        return Measurement(E=E, n_omega=nw)

    def project(self, y: np.ndarray) -> np.ndarray:
        for sl in self.rotation_slices:
            y[sl] = orthonormalize(y[sl].reshape(3, 3)).ravel()
        return y

    def _guard_reference(self, omega_r: np.ndarray, t: float) -> None:
        n2 = omega_r @ omega_r
        b = self.reference.omega_r_bound
        if n2 > b * b:
            raise SolverError(
                f"reference angular velocity left its declared set at t={t}: "
                f"||omega_r|| = {math.sqrt(n2):.6g} > {b}"
            )

    def _measured(self, Re, theta, omega_e, a_true, omega_r, meas):
        """Measured error rotation, warp angle, velocity error, and R_m^T omega_r."""
        if meas is None:
            return Re, theta, omega_e, a_true
        Rm = Re @ meas.E
        am = Rm.T @ omega_r
        wem = omega_e + meas.n_omega + a_true - am
        return Rm, theta, wem, am

    def initial_state(self, state) -> np.ndarray:
        return state.pack()

    def unpack(self, y: np.ndarray):
        return self.state_cls.unpack(y)

    # Monitor pieces shared by record() and jump_event_info().

    def _kinetic(self, omega_e: np.ndarray) -> float:
        return 0.5 * float(omega_e @ (self.inertia.J @ omega_e))

    def lyapunov_packed(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def torque(self, t: float, y: np.ndarray, meas) -> np.ndarray:
        raise NotImplementedError


class BasicLoop(_TrackingLoop):
    kind = "basic"
    margin_defines_sets = True
    columns = (
        "dist_Re", "theta", "we_x", "we_y", "we_z",
        "tau_x", "tau_y", "tau_z", "U", "lyap", "in_jump_set",
    )

    def flow(self, t, y, meas):
        p, gn, J = self.params, self.gains, self.inertia
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        Rr = y[13:22].reshape(3, 3)
        wr = y[22:25]
        self._guard_reference(wr, t)
        z = self.reference.z_at(t)
        a = Re.T @ wr
        Rm, thm, wem, am = self._measured(Re, th, we, a, wr, meas)
        g_rot, g_th = gradients(Rm, thm, p)
        # Same formula as torque_basic, inlined so one gradient evaluation
        # serves both the torque and the warp-angle flow.
        ups_m = J.J @ (Rm.T @ z) + _cross(am, J.J @ am)
        tau = ups_m - (2.0 * gn.k_R) * g_rot - gn.k_omega * wem
        ups = ups_m if meas is None else J.J @ (Re.T @ z) + _cross(a, J.J @ a)
        sig_we = coupling_times(Re, we, wr, J)
        out = np.empty(25)
        out[0:9] = (Re @ skew(we)).ravel()
        out[9] = -gn.k_theta * g_th
        out[10:13] = J.J_inv @ (sig_we - ups + tau)
        out[13:22] = (Rr @ skew(wr)).ravel()
        out[22:25] = z
        return out

    def jump(self, t, y, meas):
        Rm = y[0:9].reshape(3, 3) if meas is None else y[0:9].reshape(3, 3) @ meas.E
        y_post = y.copy()
        y_post[9] = warp_reset(Rm, self.params)
        return y_post

    def _gap_measured(self, y, meas) -> float:
        Re = y[0:9].reshape(3, 3)
        Rm = Re if meas is None else Re @ meas.E
        return gap(Rm, y[9], self.params)

    def in_flow_set(self, t, y, meas):
        return self._gap_measured(y, meas) <= self.params.delta

    def in_jump_set(self, t, y, meas):
        return self._gap_measured(y, meas) >= self.params.delta

    def jump_margin(self, t, y, meas):
        return self._gap_measured(y, meas) - self.params.delta

    def torque(self, t, y, meas):
        Re = y[0:9].reshape(3, 3)
        we = y[10:13]
        wr = y[22:25]
        z = self.reference.z_at(t)
        Rm, thm, wem, _ = self._measured(Re, y[9], we, Re.T @ wr, wr, meas)
        return torque_basic(Rm, thm, wem, wr, z, self.params, self.gains, self.inertia)

    def lyapunov_packed(self, y):
        return self.gains.k_R * value(y[0:9].reshape(3, 3), y[9], self.params) + self._kinetic(
            y[10:13]
        )

    def record(self, t, j, y, meas, in_jump):
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        U = value(Re, th, self.params)
        lyap = self.gains.k_R * U + self._kinetic(we)
        tau = self.torque(t, y, meas)
        return (
            rot_distance(Re), th, we[0], we[1], we[2],
            tau[0], tau[1], tau[2], U, lyap,
            1.0 if in_jump else 0.0,
        )

    def jump_event_info(self, t, y_pre, y_post, meas):
        tau_pre = self.torque(t, y_pre, meas)
        tau_post = self.torque(t, y_post, meas)
        return {
            "theta_pre": float(y_pre[9]),
            "theta_post": float(y_post[9]),
            "lyap_pre": self.lyapunov_packed(y_pre),
            "lyap_post": self.lyapunov_packed(y_post),
            "tau_pre": tau_pre,
            "tau_post": tau_post,
            "tau_jump": float(np.linalg.norm(tau_post - tau_pre)),
            "margin": self.jump_margin(t, y_pre, meas),
        }


class NonHybridLoop(BasicLoop):
    kind = "non_hybrid"
    margin_defines_sets = False

    def flow(self, t, y, meas):
        out = super().flow(t, y, meas)
        out[9] = 0.0  # warp angle frozen
        return out

    def jump(self, t, y, meas):
        raise SolverError("the non-hybrid loop has no jump map")

    def in_flow_set(self, t, y, meas):
        return True

    def in_jump_set(self, t, y, meas):
        return False

    def jump_margin(self, t, y, meas):
        return None


class SmoothLoop(_TrackingLoop):
    kind = "smooth"
    margin_defines_sets = True
    state_cls = SmoothLoopState
    columns = BasicLoop.columns + ("zeta_x", "zeta_y", "zeta_z")

    def __init__(self, params, gains, inertia, reference, noise=None, relaxed: bool = False):
        super().__init__(params, gains, inertia, reference, noise)
        self.relaxed = relaxed

    def flow(self, t, y, meas):
        p, gn, J = self.params, self.gains, self.inertia
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        Rr = y[13:22].reshape(3, 3)
        wr = y[22:25]
        zeta = y[25:28]
        self._guard_reference(wr, t)
        z = self.reference.z_at(t)
        a = Re.T @ wr
        Rm, thm, wem, am = self._measured(Re, th, we, a, wr, meas)
        g_rot, g_th = gradients(Rm, thm, p)
        th_dot = -gn.k_theta * g_th
        ups_m = J.J @ (Rm.T @ z) + _cross(am, J.J @ am)
        tau = ups_m - (2.0 * gn.k_R) * zeta - gn.k_omega * wem
        ups = ups_m if meas is None else J.J @ (Re.T @ z) + _cross(a, J.J @ a)
        sig_we = coupling_times(Re, we, wr, J)
        zdot = -gn.k_zeta * (zeta - g_rot)
        if self.relaxed:
            zdot = zdot + grad_rotation_rate(Rm, thm, wem, th_dot, p) + wem / gn.rho
        out = np.empty(28)
        out[0:9] = (Re @ skew(we)).ravel()
        out[9] = th_dot
        out[10:13] = J.J_inv @ (sig_we - ups + tau)
        out[13:22] = (Rr @ skew(wr)).ravel()
        out[22:25] = z
        out[25:28] = zdot
        return out

    def jump(self, t, y, meas):
        Rm = y[0:9].reshape(3, 3) if meas is None else y[0:9].reshape(3, 3) @ meas.E
        y_post = y.copy()
        y_post[9] = warp_reset(Rm, self.params)  # the filter state does not jump
        return y_post

    def _fgap_measured(self, y, meas) -> float:
        Re = y[0:9].reshape(3, 3)
        Rm = Re if meas is None else Re @ meas.E
        return filtered_gap(Rm, y[9], y[25:28], self.params, self.gains.rho)

    def in_flow_set(self, t, y, meas):
        return self._fgap_measured(y, meas) <= self.gains.delta_prime

    def in_jump_set(self, t, y, meas):
        return self._fgap_measured(y, meas) >= self.gains.delta_prime

    def jump_margin(self, t, y, meas):
        return self._fgap_measured(y, meas) - self.gains.delta_prime

    def torque(self, t, y, meas):
        Re = y[0:9].reshape(3, 3)
        we = y[10:13]
        wr = y[22:25]
        z = self.reference.z_at(t)
        Rm, _, wem, _ = self._measured(Re, y[9], we, Re.T @ wr, wr, meas)
        return torque_smooth(Rm, y[25:28], wem, wr, z, self.params, self.gains, self.inertia)

    def lyapunov_packed(self, y):
        W = filtered_value(y[0:9].reshape(3, 3), y[9], y[25:28], self.params, self.gains.rho)
        return self.gains.k_R * W + self._kinetic(y[10:13])

    def record(self, t, j, y, meas, in_jump):
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        zeta = y[25:28]
        U = value(Re, th, self.params)
        g_rot = grad_rotation(Re, th, self.params)
        d = zeta - g_rot
        W = U + self.gains.rho * float(d @ d)
        lyap = self.gains.k_R * W + self._kinetic(we)
        tau = self.torque(t, y, meas)
        return (
            rot_distance(Re), th, we[0], we[1], we[2],
            tau[0], tau[1], tau[2], U, lyap,
            1.0 if in_jump else 0.0,
            zeta[0], zeta[1], zeta[2],
        )

    def jump_event_info(self, t, y_pre, y_post, meas):
        tau_pre = self.torque(t, y_pre, meas)
        tau_post = self.torque(t, y_post, meas)
        return {
            "theta_pre": float(y_pre[9]),
            "theta_post": float(y_post[9]),
            "lyap_pre": self.lyapunov_packed(y_pre),
            "lyap_post": self.lyapunov_packed(y_post),
            "tau_pre": tau_pre,
            "tau_post": tau_post,
            "tau_jump": float(np.linalg.norm(tau_post - tau_pre)),
            "margin": self.jump_margin(t, y_pre, meas),
        }


class VelocityFreeLoop(_TrackingLoop):
    kind = "velocity_free"
    margin_defines_sets = True
    state_cls = VelocityFreeLoopState
    rotation_slices = (slice(0, 9), slice(13, 22), slice(25, 34))
    columns = BasicLoop.columns + ("dist_Rtilde", "theta_bar")

    def flow(self, t, y, meas):
        p, gn, J = self.params, self.gains, self.inertia
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        Rr = y[13:22].reshape(3, 3)
        wr = y[22:25]
        Rt = y[25:34].reshape(3, 3)
        tb = y[34]
        self._guard_reference(wr, t)
        z = self.reference.z_at(t)
        a = Re.T @ wr
        if meas is None:
            Rm, Rtm, am = Re, Rt, a
        else:
            Rm = Re @ meas.E
            Rtm = Rt @ meas.E
            am = Rm.T @ wr
        g1_rot, g1_th = gradients(Rm, th, p)
        g2_rot, g2_th = gradients(Rtm, tb, p)
        beta = gn.Gamma @ g2_rot
        ups_m = J.J @ (Rm.T @ z) + _cross(am, J.J @ am)
        tau = ups_m - (2.0 * gn.k_R) * g1_rot - (2.0 * gn.k_beta) * g2_rot
        ups = ups_m if meas is None else J.J @ (Re.T @ z) + _cross(a, J.J @ a)
        sig_we = coupling_times(Re, we, wr, J)
        drive = we - beta if meas is None else we - meas.E @ beta
        out = np.empty(35)
        out[0:9] = (Re @ skew(we)).ravel()
        out[9] = -gn.k_theta * g1_th
        out[10:13] = J.J_inv @ (sig_we - ups + tau)
        out[13:22] = (Rr @ skew(wr)).ravel()
        out[22:25] = z
        out[25:34] = (Rt @ skew(drive)).ravel()
        out[34] = -gn.k_theta * g2_th
        return out

    def _measured_pair(self, y, meas):
        Re = y[0:9].reshape(3, 3)
        Rt = y[25:34].reshape(3, 3)
        if meas is None:
            return Re, Rt
        return Re @ meas.E, Rt @ meas.E

    def jump(self, t, y, meas):
        """Reset whichever of the two warp angles is in its jump set (possibly both)."""
        p = self.params
        Rm, Rtm = self._measured_pair(y, meas)
        y_post = y.copy()
        fired = False
        if gap(Rm, y[9], p) >= p.delta:
            y_post[9] = warp_reset(Rm, p)
            fired = True
        if gap(Rtm, y[34], p) >= p.delta:
            y_post[34] = warp_reset(Rtm, p)
            fired = True
        if not fired:
            raise SolverError("velocity-free jump map applied outside the jump set")
        return y_post

    def in_flow_set(self, t, y, meas):
        p = self.params
        Rm, Rtm = self._measured_pair(y, meas)
        return gap(Rm, y[9], p) <= p.delta and gap(Rtm, y[34], p) <= p.delta

    def in_jump_set(self, t, y, meas):
        p = self.params
        Rm, Rtm = self._measured_pair(y, meas)
        return gap(Rm, y[9], p) >= p.delta or gap(Rtm, y[34], p) >= p.delta

    def jump_margin(self, t, y, meas):
        p = self.params
        Rm, Rtm = self._measured_pair(y, meas)
        return max(gap(Rm, y[9], p), gap(Rtm, y[34], p)) - p.delta

    def torque(self, t, y, meas):
        wr = y[22:25]
        z = self.reference.z_at(t)
        Rm, Rtm = self._measured_pair(y, meas)
        return torque_velocity_free(
            Rm, y[9], Rtm, y[34], wr, z, self.params, self.gains, self.inertia
        )

    def lyapunov_packed(self, y):
        p, gn = self.params, self.gains
        U1 = value(y[0:9].reshape(3, 3), y[9], p)
        U2 = value(y[25:34].reshape(3, 3), y[34], p)
        return gn.k_R * U1 + gn.k_beta * U2 + self._kinetic(y[10:13])

    def record(self, t, j, y, meas, in_jump):
        p, gn = self.params, self.gains
        Re = y[0:9].reshape(3, 3)
        th = y[9]
        we = y[10:13]
        Rt = y[25:34].reshape(3, 3)
        tb = y[34]
        U1 = value(Re, th, p)
        U2 = value(Rt, tb, p)
        lyap = gn.k_R * U1 + gn.k_beta * U2 + self._kinetic(we)
        tau = self.torque(t, y, meas)
        return (
            rot_distance(Re), th, we[0], we[1], we[2],
            tau[0], tau[1], tau[2], U1, lyap,
            1.0 if in_jump else 0.0,
            rot_distance(Rt), tb,
        )

    def jump_event_info(self, t, y_pre, y_post, meas):
        tau_pre = self.torque(t, y_pre, meas)
        tau_post = self.torque(t, y_post, meas)
        return {
            "theta_pre": float(y_pre[9]),
            "theta_post": float(y_post[9]),
            "theta_bar_pre": float(y_pre[34]),
            "theta_bar_post": float(y_post[34]),
            "lyap_pre": self.lyapunov_packed(y_pre),
            "lyap_post": self.lyapunov_packed(y_post),
            "tau_pre": tau_pre,
            "tau_post": tau_post,
            "tau_jump": float(np.linalg.norm(tau_post - tau_pre)),
            "margin": self.jump_margin(t, y_pre, meas),
        }


LOOP_CLASSES = {
    "basic": BasicLoop,
    "smooth": SmoothLoop,
    "velocity_free": VelocityFreeLoop,
    "non_hybrid": NonHybridLoop,
}


def make_loop(kind: str, params: PotentialParams, gains: Gains, inertia: Inertia,
              reference: Reference, noise: NoiseModel | None = None,
              relaxed_filter: bool = False, check: bool = True):
    """Build a closed loop of the given kind; gain warnings go to `warnings`."""
    if kind not in LOOP_CLASSES:
        raise ContractError(f"unknown controller '{kind}', choose from {CONTROLLER_KINDS}")
    if kind == "smooth":
        loop = SmoothLoop(params, gains, inertia, reference, noise, relaxed=relaxed_filter)
    else:
        loop = LOOP_CLASSES[kind](params, gains, inertia, reference, noise)
    if check:
        for note in loop.check():
            warnings.warn(note, stacklevel=2)
    return loop
