"""End-to-end simulation loop and run artifacts.

Per step: kinematic predictors, displacement update, strain split, local
damage, Lipschitz bounds, regional damage solves where the bounds disagree,
force assembly, acceleration solve, velocity correction. Outputs are a VTK
snapshot per cadence tick, an energy/crack time series CSV, and a JSON run
summary. All files are written atomically.
"""
from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import replace

import numpy as np
from scipy.sparse.csgraph import connected_components

from .config import PostprocOptions, SimulationConfig
from .dynamics import (
    DivergenceError,
    KinematicState,
    MassSolver,
    apply_bcs,
    correct_velocity,
    critical_timestep,
    predict,
    prescribed_acceleration,
    prescribed_dofs,
    resolve_bcs,
)
from .fem import (
    ElementKinematics,
    assemble_mass,
    energy_integrals,
    external_traction,
    kinetic_energy,
)
from .lipfield import (
    BoundsSolver,
    DamageState,
    damage_update,
    local_damage_field,
)
from .material import stress_batch, split_batch, wave_speeds
from .mesh import build_lipmesh, load_mesh
from .vtkio import write_vtk

CSV_HEADER = "t,E_kin,E_p,E_d,W_ext,a,v_tip_over_cR"


def crack_increment(d, d_n, areas, lc: float, halved: bool = False) -> float:
    """Crack growth from a damage increment: sum of A_e (d_e - d_n,e) / l.

    ``halved`` applies after branching in a symmetric half-model, where one
    increment of damage feeds two propagating tips.
    """
    delta = float(areas @ (np.asarray(d) - np.asarray(d_n))) / lc
    return 0.5 * delta if halved else delta


def region_lengths(d, areas, centroids, lc: float, post: PostprocOptions):
    """Per-region crack lengths: integral of d / l over each configured box."""
    out = []
    for rect in (post.region1, post.region2):
        if rect is None:
            out.append(0.0)
            continue
        mask = rect.contains(centroids)
        out.append(float(areas[mask] @ np.asarray(d)[mask]) / lc)
    return tuple(out)


def branching_detected(lip, centroids, d, *, d_thresh, notch_x, lc) -> bool:
    """True when the damaged set ahead of the notch splits into components
    separated transversely by more than twice the regularization length."""
    mask = (np.asarray(d) > d_thresh) & (centroids[:, 0] > notch_x)
    idx = np.flatnonzero(mask)
    if len(idx) < 2:
        return False
    sub = lip.adjacency()[np.ix_(idx, idx)]
    n_comp, labels = connected_components(sub, directed=False)
    if n_comp < 2:
        return False
    ys = centroids[idx, 1]
    spans = [(ys[labels == c].min(), ys[labels == c].max()) for c in range(n_comp)]
    spans.sort()
    for (lo_a, hi_a), (lo_b, hi_b) in zip(spans[:-1], spans[1:]):
        if lo_b - hi_a > 2.0 * lc:
            return True
    return False


def detect_branching(times, damage_history, lip, centroids, lc, *, d_thresh=0.95, notch_x=0.0):
    """Earliest time in a damage history at which branching is detected."""
    for t, d in zip(times, damage_history):
        if branching_detected(
            lip, centroids, d, d_thresh=d_thresh, notch_x=notch_x, lc=lc
        ):
            return t
    return None


def _atomic_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


class Simulation:
    """One configured run: owns mesh, operators, state, and output files."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.mesh = load_mesh(
            config.mesh_path, fmt=config.mesh_format, tag_names=config.tag_names
        )
        self.params = config.material
        self.speeds = wave_speeds(self.params)
        self.kinematics = ElementKinematics(self.mesh)
        self.mass = assemble_mass(self.mesh, self.params.rho)
        self.lip = build_lipmesh(self.mesh)
        self.bounds_solver = BoundsSolver(self.lip, self.params.lc)
        self.constraints, self.tractions = resolve_bcs(self.mesh, list(config.bcs))
        self.fixed = prescribed_dofs(self.constraints)
        self.mass_solver = MassSolver(self.mass, self.fixed)
        self.tc = critical_timestep(self.mesh, self.params, config.cfl_factor, config.t_end)
        self.centroids = self.mesh.centroids()

        self.state = KinematicState.initial(self.mesh.n_nodes)
        self.damage = DamageState.initial(self.mesh.n_elements)
        apply_bcs(self.state, self.constraints, t=0.0)
        r0 = self._external_forces(0.0)
        f0 = self.kinematics.internal_forces(self.state.u, self.damage.d, self.params)
        a_c = prescribed_acceleration(self.constraints, 2 * self.mesh.n_nodes, 0.0)
        self.state.a = self.mass_solver.solve(r0 - f0, a_c)

        self.crack_length = 0.0
        self.t_br: float | None = None
        self.w_ext = 0.0
        self.step_index = 0
        # carried between steps for the trapezoidal work bookkeeping
        self._r_prev = r0
        self._res_prev = self.mass @ self.state.a + f0 - r0

    def _external_forces(self, t: float) -> np.ndarray:
        r = np.zeros(2 * self.mesh.n_nodes)
        for load in self.tractions:
            r += external_traction(
                self.mesh, load.facets, load.vector, scale=load.amplitude(t)
            )
        return r

    def _damage_step(self, e_plus: np.ndarray) -> DamageState:
        d_loc = local_damage_field(
            e_plus, self.damage.d_n, self.params.yc, tol=self.config.local_tol
        )
        if np.array_equal(d_loc, self.damage.d_n):
            # nothing moved locally; the bound chain collapses onto d_n
            return replace(
                self.damage, d=d_loc.copy(), d_loc=d_loc, d_lower=d_loc, d_upper=d_loc
            )
        return damage_update(
            self.mesh,
            self.lip,
            e_plus,
            self.damage,
            self.params,
            bounds_solver=self.bounds_solver,
            gap_tol=self.config.gap_tol,
            kkt_tol=self.config.kkt_tol,
            local_tol=self.config.local_tol,
            max_iter=self.config.max_iter,
        )

    def step(self):
        """Advance one time step; returns per-step diagnostics."""
        dt = self.tc.dt
        t_new = self.state.t + dt
        u_prev = self.state.u.copy()
        r_prev = self._r_prev
        res_prev = self._res_prev
        self.step_index += 1

        u_p, v_p = predict(self.state, dt)
        self.state.u = u_p
        for con in self.constraints:
            self.state.u[con.dofs] = con.u(t_new)

        exx, eyy, exy = self.kinematics.strain(self.state.u)
        _, _, _, e_plus, e_minus = split_batch(exx, eyy, exy, self.params)
        # the damage solver needs finite energies; a blown-up elastic state
        # must abort here, not inside the minimizer
        if not np.all(np.isfinite(e_plus)):
            raise DivergenceError(self.step_index, "tensile energy")
        new_damage = self._damage_step(e_plus)

        f_int = self.kinematics.internal_forces_from_strain(
            exx, eyy, exy, new_damage.d, self.params
        )
        r_ext = self._external_forces(t_new)
        a_c = prescribed_acceleration(self.constraints, 2 * self.mesh.n_nodes, t_new)
        self.state.a = self.mass_solver.solve(r_ext - f_int, a_c)
        self.state.v = correct_velocity(v_p, self.state.a, dt)
        for con in self.constraints:
            self.state.v[con.dofs] = con.v(t_new)
        self.state.t = t_new
        self.state.check_finite(self.step_index)

        # external work: trapezoidal traction work plus reaction work at the
        # kinematically driven DOFs
        du = self.state.u - u_prev
        self.w_ext += 0.5 * float((r_prev + r_ext) @ du)
        res_new = self.mass @ self.state.a + f_int - r_ext
        if len(self.fixed):
            reactions = 0.5 * (res_prev[self.fixed] + res_new[self.fixed])
            self.w_ext += float(reactions @ du[self.fixed])
        self._r_prev = r_ext
        self._res_prev = res_new

        halved = self.config.post.mode == "symmetric_branching" and self.t_br is not None
        self.crack_length += crack_increment(
            new_damage.d, self.damage.d_n, self.mesh.element_area, self.params.lc, halved
        )
        self.damage = new_damage.advanced()

        e_kin = kinetic_energy(self.mass, self.state.v)
        e_p, e_d = energy_integrals(
            self.mesh, e_plus, e_minus, self.damage.d_n, self.params
        )
        return e_kin, e_p, e_d

    def _maybe_detect_branching(self):
        post = self.config.post
        if self.t_br is not None or post.notch_x is None:
            return
        if branching_detected(
            self.lip,
            self.centroids,
            self.damage.d_n,
            d_thresh=post.d_thresh,
            notch_x=post.notch_x,
            lc=self.params.lc,
        ):
            self.t_br = self.state.t

    def _snapshot(self, tick: int):
        d = self.damage.d_n
        exx, eyy, exy = self.kinematics.strain(self.state.u)
        _, _, _, e_plus, _ = split_batch(exx, eyy, exy, self.params)
        sxx, syy, _ = stress_batch(exx, eyy, exy, d, self.params)
        write_vtk(
            self.config.out_dir / f"fields_{tick:06d}.vtk",
            self.mesh,
            point_data={
                "displacement": np.vstack([self.state.u[0::2], self.state.u[1::2]]),
                "velocity": np.vstack([self.state.v[0::2], self.state.v[1::2]]),
            },
            cell_data={
                "damage": d.astype(float),
                "tensile_energy": e_plus,
                "hydrostatic_stress": 0.5 * (sxx + syy),
            },
        )

    def run(self) -> dict:
        """Execute until t_end; returns the run summary (also written to disk)."""
        start = time.perf_counter()
        out = self.config.out_dir
        os.makedirs(out, exist_ok=True)

        rows = []
        a_prev_out, t_prev_out = 0.0, 0.0
        e_p0, e_d0 = energy_integrals(
            self.mesh,
            np.zeros(self.mesh.n_elements),
            np.zeros(self.mesh.n_elements),
            self.damage.d_n,
            self.params,
        )
        rows.append((0.0, kinetic_energy(self.mass, self.state.v), e_p0, e_d0, 0.0, 0.0, 0.0))
        self._snapshot(0)

        error: str | None = None
        try:
            for step in range(1, self.tc.n_steps + 1):
                e_kin, e_p, e_d = self.step()
                if step % self.config.every == 0:
                    self._maybe_detect_branching()
                    dt_out = self.state.t - t_prev_out
                    v_tip = (self.crack_length - a_prev_out) / dt_out if dt_out > 0 else 0.0
                    a_prev_out, t_prev_out = self.crack_length, self.state.t
                    rows.append(
                        (
                            self.state.t,
                            e_kin,
                            e_p,
                            e_d,
                            self.w_ext,
                            self.crack_length,
                            v_tip / self.speeds.c_R,
                        )
                    )
                    self._snapshot(step // self.config.every)
        except Exception as exc:
            error = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            self._write_series(rows)
            summary = self._summary(rows, time.perf_counter() - start, error)
            _atomic_text(out / "summary.json", json.dumps(summary, indent=2) + "\n")
        return summary

    def _write_series(self, rows):
        lines = [CSV_HEADER]
        for row in rows:
            lines.append(",".join(repr(float(x)) for x in row))
        _atomic_text(self.config.out_dir / "series.csv", "\n".join(lines) + "\n")

    def _summary(self, rows, wall_time, error):
        a1, a2 = region_lengths(
            self.damage.d_n,
            self.mesh.element_area,
            self.centroids,
            self.params.lc,
            self.config.post,
        )
        cfg = self.config
        return {
            "config": {
                "mesh": str(cfg.mesh_path),
                "E": self.params.E,
                "nu": self.params.nu,
                "rho": self.params.rho,
                "yc": self.params.yc,
                "lc": self.params.lc,
                "cfl_factor": cfg.cfl_factor,
                "t_end": cfg.t_end,
                "every": cfg.every,
                "mode": cfg.post.mode,
            },
            "dt": self.tc.dt,
            "n_steps": self.tc.n_steps,
            "steps_completed": self.step_index,
            "wall_time_s": wall_time,
            "t_br": self.t_br,
            "crack_length": self.crack_length,
            "region_lengths": [a1, a2],
            "final_time": self.state.t,
            "max_damage": float(self.damage.d_n.max()) if self.mesh.n_elements else 0.0,
            "outputs": len(rows),
            "error": error,
        }


def run(config: SimulationConfig) -> dict:
    return Simulation(config).run()
