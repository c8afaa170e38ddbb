"""Explicit Newmark central-difference integration with a consistent mass.

The scheme is the beta = 0, gamma = 1/2 member of the Newmark family:
displacement and half-step velocity are extrapolated from the previous
acceleration, the new acceleration is solved from the consistent mass matrix
(one sparse factorization reused every step), and the velocity is corrected.
Kinematically prescribed DOFs follow analytic time profiles; their
acceleration enters the free-DOF solve through the mass coupling block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .material import MaterialParams, wave_speeds
from .mesh import Mesh, min_element_size


class DivergenceError(RuntimeError):
    """A state vector picked up a non-finite entry."""

    def __init__(self, step: int, name: str):
        self.step = step
        super().__init__(f"non-finite {name} at step {step}; the run has diverged")


class MassSolveError(RuntimeError):
    """The mass matrix restricted to free DOFs could not be factorized."""


@dataclass
class KinematicState:
    """Nodal kinematics at one instant, plus the step predictors."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u_p: np.ndarray
    v_p: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, n_nodes: int) -> "KinematicState":
        z = np.zeros(2 * n_nodes)
        return cls(u=z.copy(), v=z.copy(), a=z.copy(), u_p=z.copy(), v_p=z.copy(), t=0.0)

    def check_finite(self, step: int) -> None:
        for name in ("u", "v", "a"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DivergenceError(step, name)


@dataclass(frozen=True)
class TimeControl:
    """Fixed time step from the stability limit of the fastest wave."""

    dt: float
    cfl_factor: float
    dt_critical: float
    n_steps: int
    t_end: float

    def __post_init__(self):
        if not 0.0 < self.cfl_factor < 1.0:
            raise ValueError(f"CFL factor must lie in (0, 1), got {self.cfl_factor}")
        if self.dt > self.dt_critical:
            raise ValueError(f"dt {self.dt} exceeds the critical step {self.dt_critical}")


def critical_timestep(
    mesh: Mesh, params: MaterialParams, cfl_factor: float, t_end: float
) -> TimeControl:
    """Time control with dt = cfl_factor * h_min / c_d, held for the whole run."""
    c_d = wave_speeds(params).c_d
    dt_crit = min_element_size(mesh) / c_d
    dt = cfl_factor * dt_crit
    n_steps = max(1, math.ceil(t_end / dt))
    return TimeControl(
        dt=dt, cfl_factor=cfl_factor, dt_critical=dt_crit, n_steps=n_steps, t_end=t_end
    )


def predict(state: KinematicState, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference predictors from the current state."""
    u_p = state.u + dt * state.v + 0.5 * dt * dt * state.a
    v_p = state.v + 0.5 * dt * state.a
    return u_p, v_p


def correct_velocity(v_p: np.ndarray, a: np.ndarray, dt: float) -> np.ndarray:
    """Velocity update once the new acceleration is known."""
    return v_p + 0.5 * dt * a


_COMPONENT = {"x": 0, "y": 1}


@dataclass(frozen=True)
class BoundaryCondition:
    """Declarative boundary condition attached to a facet tag.

    ``kind`` is ``"displacement"`` or ``"velocity"`` (kinematic, needs
    ``component``) or ``"traction"`` (``value`` is the traction vector in Pa).
    ``profile`` is ``"constant"`` (full value from t = 0) or ``"ramp"``
    (linear rise over ``rise_time``, then held).
    """

    tag: str
    kind: str
    value: tuple[float, float] | float
    component: str | None = None
    profile: str = "constant"
    rise_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("displacement", "velocity", "traction"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")
        if self.kind == "traction":
            if self.component is not None:
                raise ValueError("traction conditions apply to both components")
        elif self.component not in _COMPONENT:
            raise ValueError(f"kinematic condition needs component x or y, got {self.component!r}")
        if self.profile not in ("constant", "ramp"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "ramp" and self.rise_time <= 0.0:
            raise ValueError("ramp profile needs a positive rise time")


class KinematicConstraint:
    """Resolved kinematic prescription: DOF indices plus analytic u, v, a of t.

    For a displacement value c the profile gives u directly; for a velocity
    value c the displacement is its exact time integral, so the prescription
    stays consistent with the integrator at every step.
    """

    def __init__(self, dofs: np.ndarray, bc: BoundaryCondition):
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self._c = float(bc.value)
        self._kind = bc.kind
        self._ramp = bc.profile == "ramp"
        self._rise = bc.rise_time

    def u(self, t: float) -> float:
        c = self._c
        if self._kind == "displacement":
            if not self._ramp:
                return c
            return c * min(t / self._rise, 1.0)
        # velocity prescription: integrate the profile
        if not self._ramp:
            return c * t
        rise = self._rise
        if t < rise:
            return 0.5 * c * t * t / rise
        return c * (t - 0.5 * rise)

    def v(self, t: float) -> float:
        c = self._c
        if self._kind == "displacement":
            if not self._ramp or t >= self._rise:
                return 0.0
            return c / self._rise
        if not self._ramp:
            return c
        return c * min(t / self._rise, 1.0)

    def a(self, t: float) -> float:
        if self._kind == "displacement" or not self._ramp or t >= self._rise:
            return 0.0
        return self._c / self._rise


@dataclass(frozen=True)
class TractionLoad:
    """Resolved traction: facets plus a time amplitude in [0, 1]."""

    facets: np.ndarray
    vector: tuple[float, float]
    ramp: bool = False
    rise_time: float = 0.0

    def amplitude(self, t: float) -> float:
        if not self.ramp:
            return 1.0
        return min(max(t, 0.0) / self.rise_time, 1.0)


def resolve_bcs(
    mesh: Mesh, bcs: list[BoundaryCondition]
) -> tuple[list[KinematicConstraint], list[TractionLoad]]:
    """Bind declarative conditions to mesh node sets and facet sets.

    Raises ``ValueError`` if a tag matches nothing or two kinematic
    prescriptions claim the same DOF.
    """
    kin: list[KinematicConstraint] = []
    tractions: list[TractionLoad] = []
    claimed: dict[int, str] = {}
    for bc in bcs:
        if bc.kind == "traction":
            facets = mesh.facets_with_tag(bc.tag)
            if len(facets) == 0:
                raise ValueError(f"traction tag {bc.tag!r} matches no boundary facets")
            tx, ty = bc.value
            tractions.append(
                TractionLoad(
                    facets=facets,
                    vector=(float(tx), float(ty)),
                    ramp=bc.profile == "ramp",
                    rise_time=bc.rise_time,
                )
            )
            continue
        nodes = mesh.nodes_with_tag(bc.tag)
        if len(nodes) == 0:
            raise ValueError(f"kinematic tag {bc.tag!r} matches no nodes")
        dofs = 2 * nodes + _COMPONENT[bc.component]
        for dof in dofs:
            if int(dof) in claimed:
                raise ValueError(
                    f"DOF {dof} prescribed by both {claimed[int(dof)]!r} and {bc.tag!r}"
                )
            claimed[int(dof)] = bc.tag
        kin.append(KinematicConstraint(dofs, bc))
    return kin, tractions


def apply_bcs(state: KinematicState, constraints: list[KinematicConstraint], t: float) -> None:
    """Overwrite prescribed DOFs with their profile values at time ``t``."""
    for con in constraints:
        state.u[con.dofs] = con.u(t)
        state.v[con.dofs] = con.v(t)
        state.a[con.dofs] = con.a(t)


def prescribed_dofs(constraints: list[KinematicConstraint]) -> np.ndarray:
    """Sorted union of all kinematically prescribed DOF indices."""
    if not constraints:
        return np.array([], dtype=np.int64)
    return np.unique(np.concatenate([c.dofs for c in constraints]))


def prescribed_acceleration(
    constraints: list[KinematicConstraint], n_dofs: int, t: float
) -> np.ndarray:
    """Full-length vector holding the prescribed accelerations at time ``t``."""
    out = np.zeros(n_dofs)
    for con in constraints:
        out[con.dofs] = con.a(t)
    return out


class MassSolver:
    """Consistent-mass acceleration solve with eliminated prescribed DOFs.

    The free-free block is factorized once; each solve costs one sparse
    triangular substitution plus the coupling product with the prescribed
    accelerations.
    """

    def __init__(self, mass: sp.spmatrix, fixed_dofs: np.ndarray):
        mass = mass.tocsr()
        n = mass.shape[0]
        fixed = np.asarray(fixed_dofs, dtype=np.int64)
        if fixed.size and (fixed.min() < 0 or fixed.max() >= n):
            raise ValueError("prescribed DOF index out of range")
        self.n_dofs = n
        self.fixed = fixed
        self.free = np.setdiff1d(np.arange(n, dtype=np.int64), fixed)
        if len(self.free) == 0:
            raise MassSolveError("all DOFs are prescribed; nothing to integrate")
        m_free_rows = mass[self.free]
        self._m_ff = m_free_rows[:, self.free].tocsc()
        self._m_fc = m_free_rows[:, self.fixed].tocsr()
        try:
            self._solve = factorized(self._m_ff)
        except RuntimeError as exc:
            raise MassSolveError(f"mass factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray, a_prescribed: np.ndarray) -> np.ndarray:
        """Acceleration from M a = rhs with prescribed entries fixed.

        ``rhs`` is the full force residual (external minus internal);
        ``a_prescribed`` is read only at the prescribed DOFs.
        """
        a = np.empty(self.n_dofs)
        a_c = a_prescribed[self.fixed]
        b = rhs[self.free]
        if len(self.fixed):
            b = b - self._m_fc @ a_c
        a[self.free] = self._solve(b)
        a[self.fixed] = a_c
        return a


def solve_acceleration(
    solver: MassSolver,
    f_int: np.ndarray,
    r_ext: np.ndarray,
    a_prescribed: np.ndarray,
) -> np.ndarray:
    """Acceleration from the assembled force balance (external minus internal)."""
    return solver.solve(r_ext - f_int, a_prescribed)
