"""Rigid-body attitude dynamics, reference generation, and tracking errors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError
from .so3 import exp_so3, skew

Vec3 = np.ndarray


def _cross(a, b) -> np.ndarray:
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


@dataclass(frozen=True, eq=False)
class Inertia:
    """Symmetric positive definite inertia matrix with its inverse cached."""

    J: np.ndarray
    J_inv: np.ndarray
    lam_min: float
    lam_max: float

    @classmethod
    def from_matrix(cls, J) -> "Inertia":
        J = np.asarray(J, dtype=float)
        if J.shape != (3, 3) or np.linalg.norm(J - J.T) > 1e-12:
            raise ContractError("inertia matrix must be symmetric 3x3")
        evals = np.linalg.eigvalsh(J)
        if evals[0] <= 0.0:
            raise ContractError("inertia matrix must be positive definite")
        return cls(J=J, J_inv=np.linalg.inv(J), lam_min=float(evals[0]), lam_max=float(evals[2]))

    @classmethod
    def from_diag(cls, d) -> "Inertia":
        return cls.from_matrix(np.diag(np.asarray(d, dtype=float)))


@dataclass
class BodyState:
    R: np.ndarray
    omega: np.ndarray


@dataclass
class RefState:
    R: np.ndarray
    omega: np.ndarray


@dataclass
class ErrorState:
    R: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class Reference:
    """Reference acceleration selection z(t) with its declared bounds.

    `m_bound` bounds ||z(t)|| (checked at every evaluation) and
    `omega_r_bound` declares the compact set the reference velocity must stay
    in; the simulation aborts if the bound is violated.
    """

    name: str
    z_fn: Callable[[float], np.ndarray]
    m_bound: float
    omega_r_bound: float

    def z_at(self, t: float) -> np.ndarray:
        z = self.z_fn(t)
        n = math.sqrt(z @ z)
        if n > self.m_bound:
            raise ContractError(
                f"reference '{self.name}' at t={t}: ||z|| = {n} exceeds the bound {self.m_bound}"
            )
        return z


def _paper_sine(t: float) -> np.ndarray:
    return np.array([math.sin(0.1 * t), -math.cos(0.3 * t), 0.1])


def _rest(t: float) -> np.ndarray:
    return np.zeros(3)


REFERENCE_FUNCTIONS: dict[str, Callable[[float], np.ndarray]] = {
    "paper_sine": _paper_sine,
    "rest": _rest,
}


def make_reference(name: str, m_bound: float, omega_r_bound: float) -> Reference:
    if name not in REFERENCE_FUNCTIONS:
        raise ContractError(f"unknown reference '{name}', choose from {sorted(REFERENCE_FUNCTIONS)}")
    return Reference(name=name, z_fn=REFERENCE_FUNCTIONS[name], m_bound=m_bound, omega_r_bound=omega_r_bound)


def body_flow(state: BodyState, tau, inertia: Inertia) -> tuple[np.ndarray, np.ndarray]:
    """Rigid-body rates: Rdot = R skew(omega), J omegadot = -omega x J omega + tau."""
    w = state.omega
    Rdot = state.R @ skew(w)
    wdot = inertia.J_inv @ (-_cross(w, inertia.J @ w) + np.asarray(tau, dtype=float))
    return Rdot, wdot


def ref_flow(state: RefState, z, m_bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Reference rates: Rdot = R skew(omega_r), omegadot = z with ||z|| <= m_bound."""
    z = np.asarray(z, dtype=float)
    n = math.sqrt(z @ z)
    if n > m_bound:
        raise ContractError(f"reference acceleration norm {n} exceeds the bound {m_bound}")
    return state.R @ skew(state.omega), z


def tracking_error(body: BodyState, ref: RefState) -> ErrorState:
    """Left-invariant errors R_e = R_r^T R and omega_e = omega - R_e^T omega_r."""
    Re = ref.R.T @ body.R
    return ErrorState(R=Re, omega=body.omega - Re.T @ ref.omega)


def feedforward(Re, omega_r, z, inertia: Inertia) -> np.ndarray:
    """Torque compensating reference acceleration and gyroscopic coupling.

    J R_e^T z + (R_e^T omega_r) x J (R_e^T omega_r); zero for a constant reference.
    """
    a = Re.T @ np.asarray(omega_r, dtype=float)
    return inertia.J @ (Re.T @ np.asarray(z, dtype=float)) + _cross(a, inertia.J @ a)


def coupling_matrix(Re, omega_e, omega_r, inertia: Inertia) -> np.ndarray:
    """Skew-symmetric coupling matrix of the error dynamics (contributes no power)."""
    J = inertia.J
    a = Re.T @ np.asarray(omega_r, dtype=float)
    ax = skew(a)
    return skew(J @ np.asarray(omega_e, dtype=float)) + skew(J @ a) - (ax @ J + J @ ax)


def coupling_times(Re, omega_e, omega_r, inertia: Inertia) -> np.ndarray:
    """coupling_matrix(...) @ omega_e without forming the matrix."""
    J = inertia.J
    a = Re.T @ omega_r
    Jw = J @ omega_e
    return _cross(Jw, omega_e) + _cross(J @ a, omega_e) - _cross(a, Jw) - J @ _cross(a, omega_e)


def error_flow(err: ErrorState, omega_r, z, tau, inertia: Inertia) -> tuple[np.ndarray, np.ndarray]:
    """Error rates: Rdot_e = R_e skew(omega_e), J omegadot_e = Sigma omega_e - Upsilon + tau."""
    Redot = err.R @ skew(err.omega)
    rhs = (
        coupling_times(err.R, err.omega, np.asarray(omega_r, dtype=float), inertia)
        - feedforward(err.R, omega_r, z, inertia)
        + np.asarray(tau, dtype=float)
    )
    return Redot, inertia.J_inv @ rhs


def apply_noise(
    body: BodyState, sigma_R: float, sigma_omega: float, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Noisy measurements R_y = R exp(skew(n_R)), omega_y = omega + n_omega.

    Noise components are i.i.d. N(0, sigma^2); zero sigmas give exact
    measurements without consuming random draws.
    """
    if sigma_R < 0.0 or sigma_omega < 0.0:
        raise ContractError("noise standard deviations must be nonnegative")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    R_y = body.R if sigma_R == 0.0 else body.R @ exp_so3(rng.normal(0.0, sigma_R, 3))
    w_y = body.omega if sigma_omega == 0.0 else body.omega + rng.normal(0.0, sigma_omega, 3)
    return R_y, w_y
