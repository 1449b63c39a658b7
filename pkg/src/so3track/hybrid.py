"""Generic solver for hybrid systems: flow on a flow set, jump on a jump set.

Solutions are produced on hybrid time domains: samples carry (t, j) where t
accumulates flow time and j counts jumps.  Flow uses fixed-step RK4 in the
ambient space with an optional per-step projection hook (used to push
rotation blocks back onto SO(3)); jumps are detected through set membership,
optionally refined by bisection on a scalar margin that changes sign at the
jump-set boundary.

Where the flow and jump sets overlap, jump priority is the default: it forces
the designed potential drop at the set boundary.  Flow priority is available
for robustness experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SolverError


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_max: float = 20.0
    j_max: int = 50
    priority: str = "jump"
    refine_tol: float | None = None  # defaults to 1e-9 * dt
    refine: bool = True
    max_jumps_per_instant: int = 10

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ContractError("dt must be positive")
        if self.j_max < 1:
            raise ContractError("j_max must be at least 1")
        if self.priority not in ("jump", "flow"):
            raise ContractError("priority must be 'jump' or 'flow'")


class HybridSystem:
    """Base contract for systems handed to `solve`.

    Subclasses must provide flow and jump maps plus the two set-membership
    predicates; the remaining hooks have neutral defaults.  The union of flow
    and jump sets must cover every state the solution visits.

    Systems whose two closed sets are the sublevel and superlevel sets of one
    scalar may set `margin_defines_sets = True`; the solver then derives both
    memberships from a single `jump_margin` evaluation and can refine jump
    times by bisection on it.
    """

    kind: str = "generic"
    columns: tuple = ()
    margin_defines_sets: bool = False

    def flow(self, t: float, y: np.ndarray, meas) -> np.ndarray:
        raise NotImplementedError

    def jump(self, t: float, y: np.ndarray, meas) -> np.ndarray:
        raise NotImplementedError

    def in_flow_set(self, t: float, y: np.ndarray, meas) -> bool:
        return True

    def in_jump_set(self, t: float, y: np.ndarray, meas) -> bool:
        return False

    def jump_margin(self, t: float, y: np.ndarray, meas):
        """Scalar that is >= 0 exactly on the jump set, or None to disable refinement."""
        return None

    def project(self, y: np.ndarray) -> np.ndarray:
        return y

    def sample_measurement(self, rng):
        return None

    def record(self, t: float, j: int, y: np.ndarray, meas, in_jump: bool) -> tuple:
        return ()

    def jump_event_info(self, t: float, y_pre: np.ndarray, y_post: np.ndarray, meas) -> dict:
        return {}


@dataclass
class JumpEvent:
    t: float
    j_before: int
    y_pre: np.ndarray
    y_post: np.ndarray
    info: dict = field(default_factory=dict)


@dataclass
class HybridArc:
    """A recorded solution: samples over a hybrid time domain plus jump events."""

    controller: str
    columns: tuple
    t: np.ndarray
    j: np.ndarray
    data: np.ndarray
    states: np.ndarray
    jumps: list
    status: str
    dt: float

    def __len__(self) -> int:
        return self.t.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise ContractError(f"arc has no column '{name}'") from None
        return self.data[:, idx]


def rk4_step(f, t: float, y: np.ndarray, h: float, meas) -> np.ndarray:
    k1 = f(t, y, meas)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1, meas)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2, meas)
    k4 = f(t + h, y + h * k3, meas)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def detect_crossing(scalar_before: float, scalar_after: float, refine, dt: float,
                    tol: float | None = None, scans: int = 64):
    """Locate the first sign change of a scalar over a step of length dt.

    `refine` evaluates the scalar at an offset in [0, dt].  Returns the upper
    end of the bisection bracket (first point past the crossing) refined to
    `tol` (default 1e-9 * dt), or None if the scalar never changes sign on the
    scan grid.  With several roots inside the step the earliest one is found.
    """
    if tol is None:
        tol = 1e-9 * dt
    s0 = scalar_before
    if s0 == 0.0:
        return 0.0
    sign0 = s0 > 0.0
    lo = 0.0
    hi = None
    if scalar_after == 0.0 or (scalar_after > 0.0) != sign0:
        hi = dt
    # Scan for an earlier bracket; required when the scalar re-crosses within
    # the step so that the endpoint signs agree.
    step = dt / scans
    for i in range(1, scans):
        x = i * step
        s = refine(x)
        if s == 0.0 or (s > 0.0) != sign0:
            hi = x
            break
        lo = x
    if hi is None:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s = refine(mid)
        if s == 0.0 or (s > 0.0) != sign0:
            hi = mid
        else:
            lo = mid
    return hi


def solve(system: HybridSystem, y0, config: SolverConfig, rng=None) -> HybridArc:
    """Integrate a hybrid system from y0 until t_max or j_max.

    Raises SolverError when the state leaves both sets, or when more than
    `max_jumps_per_instant` jumps occur without any flow in between
    (chattering guard; the closed loops of this package have provably finite
    jump counts, so hitting the guard indicates a configuration error).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    y = system.project(np.array(y0, dtype=float))
    t = 0.0
    j = 0
    meas = system.sample_measurement(rng)

    ts: list[float] = []
    js: list[int] = []
    rows: list[tuple] = []
    states: list[np.ndarray] = []
    jumps: list[JumpEvent] = []

    def sample(in_jump: bool):
        ts.append(t)
        js.append(j)
        rows.append(system.record(t, j, y, meas, in_jump))
        states.append(y.copy())

    by_margin = system.margin_defines_sets

    def membership(tt, yy):
        """(margin, in_jump, in_flow) under the current measurement."""
        if by_margin:
            m = system.jump_margin(tt, yy, meas)
            return m, m >= 0.0, m <= 0.0
        return None, system.in_jump_set(tt, yy, meas), system.in_flow_set(tt, yy, meas)

    margin, in_jump, in_flow = membership(t, y)
    if not (in_jump or in_flow):
        raise SolverError("initial state lies outside both the flow and jump sets")
    sample(in_jump)

    jumps_here = 0
    last_jump_t = None
    status = "t_max"
    while True:
        if j >= config.j_max:
            status = "j_max"
            break
        take_jump = in_jump and (config.priority == "jump" or not in_flow)
        if take_jump:
            if last_jump_t is not None and t == last_jump_t:
                jumps_here += 1
            else:
                jumps_here = 1
            if jumps_here > config.max_jumps_per_instant:
                raise SolverError(
                    f"chattering guard: more than {config.max_jumps_per_instant} jumps at t={t}"
                )
            last_jump_t = t
            y_post = system.jump(t, y, meas)
            jumps.append(
                JumpEvent(
                    t=t,
                    j_before=j,
                    y_pre=y.copy(),
                    y_post=y_post.copy(),
                    info=system.jump_event_info(t, y, y_post, meas),
                )
            )
            y = y_post
            j += 1
            margin, in_jump, in_flow = membership(t, y)
            sample(in_jump)
            continue
        if not in_flow:
            raise SolverError(
                f"state left both the flow and jump sets at t={t}, j={j} (solver-domain exit)"
            )
        remaining = config.t_max - t
        if remaining <= 1e-12:
            status = "t_max"
            break
        h = config.dt if config.dt < remaining else remaining
        y_new = system.project(rk4_step(system.flow, t, y, h, meas))
        margin_new, in_jump_new, in_flow_new = membership(t + h, y_new)
        if config.refine and in_jump_new and margin_new is not None:
            margin_old = margin if margin is not None else system.jump_margin(t, y, meas)
            if margin_old is not None and margin_old < 0.0:

                def margin_at(tau: float) -> float:
                    yt = system.project(rk4_step(system.flow, t, y, tau, meas))
                    return system.jump_margin(t + tau, yt, meas)

                tol = config.refine_tol if config.refine_tol is not None else 1e-9 * h
                tau_c = detect_crossing(margin_old, margin_new, margin_at, h, tol)
                if tau_c is not None and tau_c < h:
                    h = tau_c
                    y_new = system.project(rk4_step(system.flow, t, y, h, meas))
                    margin_new, in_jump_new, in_flow_new = membership(t + h, y_new)
        t += h
        y = y_new
        sample(in_jump_new)
        fresh = system.sample_measurement(rng)
        if fresh is None and meas is None:
            # No noise: the membership under the step's measurement is current.
            margin, in_jump, in_flow = margin_new, in_jump_new, in_flow_new
        else:
            meas = fresh
            margin, in_jump, in_flow = membership(t, y)

    n_cols = len(system.columns)
    data = np.array(rows, dtype=float) if n_cols else np.zeros((len(ts), 0))
    return HybridArc(
        controller=system.kind,
        columns=tuple(system.columns),
        t=np.array(ts),
        j=np.array(js, dtype=int),
        data=data.reshape(len(ts), n_cols),
        states=np.array(states),
        jumps=jumps,
        status=status,
        dt=config.dt,
    )
