"""Warped trace potential on SO(3) x R.

The potential combines a weighted trace distance with a quadratic term in a
scalar warp angle `theta`:

    value(R, theta) = tr(A (I - T(R, theta))) + gamma/2 * theta^2,
    T(R, theta)     = R @ angle_axis(theta, u),

where A is symmetric positive definite and u a fixed unit axis.  Warping the
attitude inside the trace ties the unwanted critical rotations of the trace
distance to theta = 0, so resetting theta to a value from a finite set moves
the state off those configurations while the potential drops by at least a
designed gap `delta`.

This module owns the parameter constructor (axis and gap selection from the
spectrum of A), the potential and its two gradients, the gap function used to
define flow and jump sets, the gradient rate along trajectories, and the
numerical certification of the gradient and gap bounds that the feedback laws
rely on.  Bulk (vectorized) evaluators back the sampling-based certification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError
from .so3 import EYE3, angle_axis, skew, trace_complement

_PI2 = math.pi * math.pi


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Spectrum-derived quantities of the weight matrix A.

    eigenvalues are ascending; eigenvectors are the matching columns with the
    first nonzero component of each made positive for reproducibility.
    `a_bar` is (tr(A) I - A)/2 and `a_under` is tr(a_bar^2) I - 2 a_bar^2.
    `case_id` records which construction case produced the axis coefficients
    `alphas`, and `delta_star` the guaranteed gap coefficient.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    a_bar: np.ndarray
    a_under: np.ndarray
    a_bar_min: float
    a_bar_max: float
    a_bar_fro: float
    delta_star: float
    case_id: int
    alphas: np.ndarray


@dataclass(frozen=True, eq=False)
class PotentialParams:
    """Full parameter set of the warped potential: {theta_set, A, u, gamma, delta}.

    Invariants (checked on construction):
      * every reset angle satisfies 0 < |theta_i| <= pi,
      * A is symmetric positive definite with lambda_2 < lambda_3,
      * gamma < 4 delta_star / pi^2,
      * delta < (4 delta_star / pi^2 - gamma) * theta_min^2 / 2.
    """

    theta_set: tuple
    A: np.ndarray
    u: np.ndarray
    gamma: float
    delta: float
    spectral: SpectralData
    theta_min: float = field(init=False)
    _ux: np.ndarray = field(init=False, repr=False)
    _ux2: np.ndarray = field(init=False, repr=False)
    _trA: float = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.theta_set) == 0:
            raise ContractError("theta_set must be nonempty")
        for th in self.theta_set:
            if not 0.0 < abs(th) <= math.pi + 1e-12:
                raise ContractError(f"reset angle {th} outside (0, pi]")
        if abs(float(np.linalg.norm(self.u)) - 1.0) > 1e-12:
            raise ContractError("warp axis u must be a unit vector")
        gmax = 4.0 * self.spectral.delta_star / _PI2
        if not 0.0 < self.gamma < gmax:
            raise ContractError(f"gamma={self.gamma} outside (0, {gmax}) = (0, 4*delta_star/pi^2)")
        tmin = min(abs(th) for th in self.theta_set)
        dmax = (gmax - self.gamma) * tmin * tmin / 2.0
        if not 0.0 < self.delta < dmax:
            raise ContractError(f"delta={self.delta} outside (0, {dmax})")
        ux = skew(self.u)
        object.__setattr__(self, "theta_min", tmin)
        object.__setattr__(self, "_ux", ux)
        object.__setattr__(self, "_ux2", ux @ ux)
        object.__setattr__(self, "_trA", float(np.trace(self.A)))

    def to_mapping(self) -> dict:
        """Flat mapping matching the scenario config keys for this parameter set."""
        return {
            "A_diag": [float(v) for v in np.diag(self.A)],
            "theta_set": [float(t) for t in self.theta_set],
            "gamma": float(self.gamma),
            "delta": float(self.delta),
        }


class CriticalPoint(NamedTuple):
    rotation: np.ndarray
    theta: float
    isolated: bool


@dataclass(frozen=True)
class CertificationConstants:
    """Closed-form gradient bounds plus the sampled lower-bound coefficient.

    alpha1, c_psi, c_R and c_theta are exact functions of the spectrum; the
    lower coefficient alpha2_approx depends on the minimum axis-alignment
    factor over the flow set, which is estimated by sampling and is therefore
    an approximation (the sampled minimum and 1st percentile are reported).
    """

    alpha1: float
    alpha2_approx: float
    c_psi: float
    c_R: float
    c_theta: float
    alignment_min: float
    alignment_p01: float
    n_samples: int


def warp_gap(u, v, A) -> float:
    """Gap coefficient Delta(u, v) = u^T (tr(A) I - A - 2 v^T A v (I - v v^T)) u."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=float)
    M = np.trace(A) * EYE3 - A - 2.0 * (v @ A @ v) * (EYE3 - np.outer(v, v))
    return float(u @ M @ u)


def _spectral_data(A: np.ndarray) -> SpectralData:
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3) or np.linalg.norm(A - A.T) > 1e-12:
        raise ContractError("A must be a symmetric 3x3 matrix")
    evals, evecs = np.linalg.eigh(A)
    if evals[0] <= 0.0:
        raise ContractError("A must be positive definite")
    scale = evals[2]
    if evals[2] - evals[1] <= 1e-9 * scale:
        raise ContractError("lambda_2 = lambda_3: axis construction is undefined")
    # Sign-fix eigenvectors: first component of magnitude > 1e-12 made positive.
    evecs = evecs.copy()
    for i in range(3):
        col = evecs[:, i]
        for c in col:
            if abs(c) > 1e-12:
                if c < 0.0:
                    evecs[:, i] = -col
                break
    l1, l2, l3 = (float(v) for v in evals)
    if l2 - l1 <= 1e-9 * scale:
        # Equal low pair: only the top-axis coefficient is pinned; the rest of
        # the mass goes on the first eigenvector (any split in the eigenplane
        # is equivalent by symmetry).
        a3sq = 1.0 - l2 / l3
        alphas = np.array([math.sqrt(1.0 - a3sq), 0.0, math.sqrt(a3sq)])
        delta_star = l1 * (1.0 - l2 / l3)
        case_id = 1
    elif l2 >= l1 * l3 / (l3 - l1):
        alphas = np.array([0.0, math.sqrt(l2 / (l2 + l3)), math.sqrt(l3 / (l2 + l3))])
        delta_star = l1
        case_id = 2
    else:
        s = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3)
        alphas = np.array(
            [
                math.sqrt(1.0 - 4.0 * l2 * l3 / s),
                math.sqrt(1.0 - 4.0 * l1 * l3 / s),
                math.sqrt(1.0 - 4.0 * l1 * l2 / s),
            ]
        )
        delta_star = 4.0 * l1 * l2 * l3 / s
        case_id = 3
    a_bar = 0.5 * ((l1 + l2 + l3) * EYE3 - A)
    a_bar2 = a_bar @ a_bar
    a_under = np.trace(a_bar2) * EYE3 - 2.0 * a_bar2
    bar_evals = 0.5 * ((l1 + l2 + l3) - evals)
    return SpectralData(
        eigenvalues=evals,
        eigenvectors=evecs,
        a_bar=a_bar,
        a_under=a_under,
        a_bar_min=float(bar_evals.min()),
        a_bar_max=float(bar_evals.max()),
        a_bar_fro=float(np.linalg.norm(a_bar)),
        delta_star=float(delta_star),
        case_id=case_id,
        alphas=alphas,
    )


def design_params(
    A,
    theta_set,
    *,
    gamma: float | None = None,
    gamma_frac: float | None = None,
    delta: float | None = None,
    delta_frac: float | None = None,
) -> PotentialParams:
    """Build a parameter set with the warp axis chosen from the spectrum of A.

    The axis u and gap coefficient delta_star follow the three-way case split
    on the eigenvalues of A.  Exactly one of gamma / gamma_frac and one of
    delta / delta_frac must be given; fractions are taken of the admissible
    upper bounds, so fractional inputs always satisfy the invariants.
    """
    spectral = _spectral_data(np.asarray(A, dtype=float))
    theta_set = tuple(float(t) for t in theta_set)
    if (gamma is None) == (gamma_frac is None):
        raise ContractError("give exactly one of gamma, gamma_frac")
    if (delta is None) == (delta_frac is None):
        raise ContractError("give exactly one of delta, delta_frac")
    gmax = 4.0 * spectral.delta_star / _PI2
    if gamma is None:
        if not 0.0 < gamma_frac < 1.0:
            raise ContractError("gamma_frac must lie in (0, 1)")
        gamma = gamma_frac * gmax
    if not theta_set:
        raise ContractError("theta_set must be nonempty")
    tmin = min(abs(t) for t in theta_set)
    dmax = (gmax - float(gamma)) * tmin * tmin / 2.0
    if delta is None:
        if not 0.0 < delta_frac < 1.0:
            raise ContractError("delta_frac must lie in (0, 1)")
        delta = delta_frac * dmax
    u = spectral.eigenvectors @ spectral.alphas
    u = u / np.linalg.norm(u)
    return PotentialParams(
        theta_set=theta_set,
        A=np.asarray(A, dtype=float),
        u=u,
        gamma=float(gamma),
        delta=float(delta),
        spectral=spectral,
    )


def warp_rotation(theta: float, p: PotentialParams) -> np.ndarray:
    """Rotation by the warp angle about the designed axis u."""
    return EYE3 + math.sin(theta) * p._ux + (1.0 - math.cos(theta)) * p._ux2


def warped(R, theta: float, p: PotentialParams) -> np.ndarray:
    """Warped attitude T(R, theta) = R @ warp_rotation(theta)."""
    return R @ warp_rotation(theta, p)


def value(R, theta: float, p: PotentialParams) -> float:
    """The potential tr(A (I - T(R, theta))) + gamma/2 theta^2, nonnegative."""
    T = R @ warp_rotation(theta, p)
    trAT = (p.A * T.T).sum()
    return p._trA - trAT + 0.5 * p.gamma * theta * theta


def gradients(R, theta: float, p: PotentialParams) -> tuple[np.ndarray, float]:
    """Both gradients at once: the body-frame rotation gradient and the warp gradient.

    The rotation gradient is the vector g such that d/ds value(R exp(s w^), theta)
    equals 2 w . g at s = 0; the warp gradient is d value / d theta.
    """
    Ra = EYE3 + math.sin(theta) * p._ux + (1.0 - math.cos(theta)) * p._ux2
    M = p.A @ (R @ Ra)
    ps = 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return Ra @ ps, p.gamma * theta + 2.0 * (p.u @ ps)


def grad_rotation(R, theta: float, p: PotentialParams) -> np.ndarray:
    return gradients(R, theta, p)[0]


def grad_warp(R, theta: float, p: PotentialParams) -> float:
    return gradients(R, theta, p)[1]


def gap(R, theta: float, p: PotentialParams) -> float:
    """value(R, theta) minus the best value over the reset set; may be negative."""
    AR = p.A @ R
    best = math.inf
    for tp in p.theta_set:
        Ra = EYE3 + math.sin(tp) * p._ux + (1.0 - math.cos(tp)) * p._ux2
        v = p._trA - (AR * Ra.T).sum() + 0.5 * p.gamma * tp * tp
        if v < best:
            best = v
    Ra = EYE3 + math.sin(theta) * p._ux + (1.0 - math.cos(theta)) * p._ux2
    here = p._trA - (AR * Ra.T).sum() + 0.5 * p.gamma * theta * theta
    return here - best


def grad_rotation_rate(R, theta: float, omega, theta_rate: float, p: PotentialParams) -> np.ndarray:
    """Time derivative of grad_rotation along Rdot = R skew(omega), thetadot = theta_rate."""
    Ra = EYE3 + math.sin(theta) * p._ux + (1.0 - math.cos(theta)) * p._ux2
    M = p.A @ (R @ Ra)
    E = trace_complement(M)
    ps = 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    d_rot = Ra @ (E @ (Ra.T @ np.asarray(omega, dtype=float)))
    d_warp = Ra @ (E @ p.u) - np.cross(Ra @ ps, p.u)
    return d_rot + d_warp * theta_rate


def undesired_critical_points(p: PotentialParams) -> list[CriticalPoint]:
    """Half-turn rotations about the eigenvectors of A, paired with theta = 0.

    With a repeated low eigenvalue the eigenvector family is a continuum; the
    returned points are representatives from the eigenplane, flagged as not
    isolated.
    """
    V = p.spectral.eigenvectors
    if p.spectral.case_id == 1:
        mix = (V[:, 0] + V[:, 1]) / math.sqrt(2.0)
        return [
            CriticalPoint(angle_axis(math.pi, V[:, 0]), 0.0, False),
            CriticalPoint(angle_axis(math.pi, V[:, 1]), 0.0, False),
            CriticalPoint(angle_axis(math.pi, mix), 0.0, False),
            CriticalPoint(angle_axis(math.pi, V[:, 2]), 0.0, True),
        ]
    return [CriticalPoint(angle_axis(math.pi, V[:, i]), 0.0, True) for i in range(3)]


# ---------------------------------------------------------------------------
# Bulk evaluators (vectorized over a leading sample axis).


def warp_rotations_many(theta: np.ndarray, p: PotentialParams) -> np.ndarray:
    s = np.sin(theta)[:, None, None]
    c = (1.0 - np.cos(theta))[:, None, None]
    return EYE3[None, :, :] + s * p._ux[None, :, :] + c * p._ux2[None, :, :]


def value_many(R: np.ndarray, theta: np.ndarray, p: PotentialParams) -> np.ndarray:
    T = R @ warp_rotations_many(theta, p)
    trAT = np.einsum("ij,nji->n", p.A, T)
    return p._trA - trAT + 0.5 * p.gamma * theta * theta


def gradients_many(R: np.ndarray, theta: np.ndarray, p: PotentialParams):
    Ra = warp_rotations_many(theta, p)
    M = np.einsum("ij,njk->nik", p.A, R @ Ra)
    ps = 0.5 * np.stack(
        [M[:, 2, 1] - M[:, 1, 2], M[:, 0, 2] - M[:, 2, 0], M[:, 1, 0] - M[:, 0, 1]], axis=1
    )
    g_rot = np.einsum("nij,nj->ni", Ra, ps)
    g_warp = p.gamma * theta + 2.0 * ps @ p.u
    return g_rot, g_warp


def gap_many(R: np.ndarray, theta: np.ndarray, p: PotentialParams) -> np.ndarray:
    here = value_many(R, theta, p)
    n = R.shape[0]
    best = np.full(n, np.inf)
    for tp in p.theta_set:
        best = np.minimum(best, value_many(R, np.full(n, tp), p))
    return here - best


def alignment_factor_many(T: np.ndarray, p: PotentialParams, guard: float = 1e-9) -> np.ndarray:
    """Axis-alignment factor 1 - |T|_I^2 cos^2(axis(T), a_bar axis(T)) per sample.

    Samples whose rotation angle is within `guard` of 0 or pi (where the axis
    read off the antisymmetric part is ill-conditioned) are returned as nan.
    """
    w = 0.5 * np.stack(
        [T[:, 2, 1] - T[:, 1, 2], T[:, 0, 2] - T[:, 2, 0], T[:, 1, 0] - T[:, 0, 1]], axis=1
    )
    s = np.linalg.norm(w, axis=1)
    distsq = np.clip((3.0 - np.einsum("nii->n", T)) / 4.0, 0.0, 1.0)
    out = np.full(T.shape[0], np.nan)
    ok = s > guard
    axis = w[ok] / s[ok, None]
    mapped = axis @ p.spectral.a_bar
    cosang = np.einsum("ni,ni->n", axis, mapped) / np.linalg.norm(mapped, axis=1)
    out[ok] = 1.0 - distsq[ok] * cosang * cosang
    return out


def certification_constants(
    p: PotentialParams, n_samples: int = 100_000, seed: int = 0
) -> CertificationConstants:
    """Gradient-bound constants, with the flow-set alignment minimum sampled.

    alpha1 bounds |grad_rotation|^2 + |grad_warp|^2 from above by alpha1 * value
    everywhere; alpha2_approx bounds it from below on the flow set, up to the
    sampling error in the alignment minimum.  c_psi bounds |grad_rotation|,
    while c_R and c_theta bound the gradient rate coefficients.
    """
    from .so3 import random_rotations

    sp = p.spectral
    alpha1 = max(7.0 * sp.a_bar_max**2 / sp.a_bar_min, 6.0 * p.gamma)
    c_psi = 2.0 * sp.a_bar_max
    c_R = sp.a_bar_fro
    c_theta = sp.a_bar_fro + c_psi
    rng = np.random.default_rng(seed)
    R = random_rotations(n_samples, rng)
    theta = rng.uniform(-math.pi, math.pi, n_samples)
    in_flow = gap_many(R, theta, p) <= p.delta
    T = R[in_flow] @ warp_rotations_many(theta[in_flow], p)
    align = alignment_factor_many(T, p)
    align = align[np.isfinite(align)]
    if align.size == 0:
        raise ContractError("certification_constants: no usable flow-set samples")
    a_min = float(align.min())
    a_p01 = float(np.percentile(align, 1.0))
    alpha2 = min(a_min * sp.a_bar_min**2 / (2.0 * sp.a_bar_max), p.gamma / 8.0)
    return CertificationConstants(
        alpha1=float(alpha1),
        alpha2_approx=float(alpha2),
        c_psi=float(c_psi),
        c_R=float(c_R),
        c_theta=float(c_theta),
        alignment_min=a_min,
        alignment_p01=a_p01,
        n_samples=int(align.size),
    )
