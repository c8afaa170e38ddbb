"""End-to-end acceptance checks for the shipped solver.

One test per published guarantee: derived material constants, equivalence
of the bound estimates and the region shortcut with brute-force references,
local-solver and derivative consistency, elastic wave propagation, the two
desk-scale fracture scenarios, and run determinism. Each test records a
one-line verdict that the conftest hook prints after the run; the asserts
carry the same conditions so a regression fails the suite.
"""
import csv
import hashlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from conftest import record_criterion
from test_dynamics import pinched_strip
from test_fem import CONCRETE, rectangle_mesh
from test_lipfield import feasible_field, whole_domain_solve
from test_mesh import floyd_warshall, random_delaunay_mesh

from lipfrac.config import PostprocOptions, Rectangle, SimulationConfig
from lipfrac.driver import Simulation, region_lengths
from lipfrac.dynamics import BoundaryCondition, MassSolver, critical_timestep
from lipfrac.fem import ElementKinematics, assemble_mass, kinetic_energy
from lipfrac.lipfield import DamageState, compute_bounds, damage_update, local_damage_solve, slope_ratio
from lipfrac.material import (
    MaterialParams,
    Strain2D,
    degradation,
    driving_energy,
    eigen_split,
    free_energy,
    softening,
    stress,
    wave_speeds,
    yc_from_gc,
)
from lipfrac.mesh import Mesh, build_lipmesh, save_mesh
from lipfrac.vtkio import read_vtk

STEEL = MaterialParams(E=190e9, nu=0.3, rho=8000.0, yc=2.775e6, lc=2e-3)


def test_criterion_1_derived_constants():
    worst_speed = 0.0
    for mat, targets in (
        (CONCRETE, (3810.0, 2332.0, 2119.0)),
        (STEEL, (5654.0, 3022.0, 2799.0)),
    ):
        ws = wave_speeds(mat)
        for got, want in zip((ws.c_d, ws.c_s, ws.c_R), targets):
            worst_speed = max(worst_speed, abs(got - want))
    worst_yc = 0.0
    for gc, lc, want in ((3.0, 1.25e-3, 600.0), (3.0, 0.8333e-3, 899.999), (22.2e3, 2e-3, 2775e3)):
        worst_yc = max(worst_yc, abs(yc_from_gc(gc, lc) - want) / want)
    ok = worst_speed <= 1.0 and worst_yc <= 1e-3
    record_criterion(
        1, ok,
        f"wave speeds off by <= {worst_speed:.3f} m/s (tol 1), "
        f"yc rel err <= {worst_yc:.1e} (tol 1e-3)",
    )
    assert worst_speed <= 1.0
    assert worst_yc <= 1e-3


def test_criterion_2_bound_estimates():
    rng = np.random.default_rng(11)
    worst_bf = 0.0
    worst_chain = 0.0
    for k in range(500):
        npts = int(rng.integers(8, 28))
        mesh = random_delaunay_mesh(npts, seed=3000 + k)
        assert mesh.n_elements <= 50
        lip = build_lipmesh(mesh)
        # regularization length comparable to the unit-square domain, so the
        # slope limit actually binds; a physical-scale length would make
        # every field trivially feasible
        lc = float(rng.uniform(0.15, 0.6))
        d_n = feasible_field(lip, lc, seed=4000 + k, scale=float(rng.uniform(0.3, 1.0)))
        d_loc = np.minimum(d_n + rng.uniform(0.0, 1.0, mesh.n_elements) * (1.0 - d_n), 1.0)

        lower, upper = compute_bounds(lip, d_loc, lc)
        worst_chain = max(
            worst_chain,
            float((d_n - lower).max()),
            float((lower - d_loc).max()),
            float((d_loc - upper).max()),
            float((upper - 1.0).max()),
        )

        dist = floyd_warshall(lip)
        lo_bf = np.clip(np.minimum((d_loc[None, :] + dist / lc).min(axis=1), d_loc), 0.0, 1.0)
        up_bf = np.clip(np.maximum((d_loc[None, :] - dist / lc).max(axis=1), d_loc), 0.0, 1.0)
        worst_bf = max(
            worst_bf,
            float(np.abs(lower - lo_bf).max()),
            float(np.abs(upper - up_bf).max()),
        )
    ok = worst_chain <= 0.0 and worst_bf <= 1e-10
    record_criterion(
        2, ok,
        f"500 instances: chain worst violation {worst_chain:.1e} (tol 0), "
        f"brute-force mismatch {worst_bf:.1e} (tol 1e-10)",
    )
    assert worst_chain <= 0.0
    assert worst_bf <= 1e-10


def test_criterion_3_region_shortcut_oracle():
    rng = np.random.default_rng(7)
    worst_d = 0.0
    worst_obj = 0.0
    for k in range(100):
        npts = int(rng.integers(30, 106))
        mesh = random_delaunay_mesh(npts, seed=1000 + k)
        assert mesh.n_elements <= 200
        lip = build_lipmesh(mesh)
        n = mesh.n_elements
        mat = replace(CONCRETE, lc=float(rng.uniform(0.15, 0.5)))
        d_n = feasible_field(lip, mat.lc, seed=2000 + k, scale=0.8)
        ep = mat.yc * 10.0 ** rng.uniform(-1.5, 2.5, n)
        ep[rng.random(n) < 0.3] = 0.0

        state = DamageState.initial(n, d0=d_n)
        new = damage_update(mesh, lip, ep, state, mat)
        ref = whole_domain_solve(mesh, lip, ep, d_n, mat)

        worst_d = max(worst_d, float(np.abs(new.d - ref).max()))
        f_new = float(np.sum(mesh.element_area * (degradation(new.d) * ep + mat.yc * softening(new.d))))
        f_ref = float(np.sum(mesh.element_area * (degradation(ref) * ep + mat.yc * softening(ref))))
        worst_obj = max(worst_obj, abs(f_new - f_ref) / abs(f_ref))
    ok = worst_d <= 1e-5 and worst_obj <= 1e-6
    record_criterion(
        3, ok,
        f"100 instances: |d - oracle| <= {worst_d:.2e} (tol 1e-5), "
        f"rel objective gap <= {worst_obj:.2e} (tol 1e-6)",
    )
    assert worst_d <= 1e-5
    assert worst_obj <= 1e-6


def _grid_scan_argmin(e_plus, d_n, yc, n_grid=1_000_000):
    """Argmin of g(d) e_plus + yc h(d) over the n_grid-point grid on [d_n, 1].

    The objective is strictly convex in d, so its grid values form a convex
    sequence and the scan argmin is found by shrinking index thirds without
    touching every point. Ties only occur on the flat bottom where adjacent
    values agree to machine precision, so any returned plateau point matches
    a full scan to within that plateau (orders below the test tolerance).
    """
    e_plus = np.asarray(e_plus, dtype=float)
    d_n = np.asarray(d_n, dtype=float)
    yc = np.asarray(yc, dtype=float)
    span = 1.0 - d_n
    lo = np.zeros(e_plus.shape, dtype=np.int64)
    hi = np.full(e_plus.shape, n_grid - 1, dtype=np.int64)

    def phi(idx):
        d = d_n + span * (idx / (n_grid - 1))
        return degradation(d) * e_plus + yc * softening(d)

    while True:
        width = hi - lo
        if not (width > 2).any():
            break
        shrink = width > 2
        m1 = lo + width // 3
        m2 = hi - width // 3
        left = phi(m1) < phi(m2)
        hi = np.where(shrink & left, m2 - 1, hi)
        lo = np.where(shrink & ~left, m1 + 1, lo)
    best_f = None
    best_d = None
    for off in range(3):
        idx = np.minimum(lo + off, hi)
        f = phi(idx)
        d = d_n + span * (idx / (n_grid - 1))
        if best_f is None:
            best_f, best_d = f, d
        else:
            better = f < best_f
            best_f = np.where(better, f, best_f)
            best_d = np.where(better, d, best_d)
    return best_d


def test_criterion_4_local_solver_grid_scan():
    rng = np.random.default_rng(23)
    n_draws = 10_000
    yc = 10.0 ** rng.uniform(0.0, 7.0, n_draws)
    e_plus = yc * 10.0 ** rng.uniform(-2.0, 3.5, n_draws)
    e_plus[rng.random(n_draws) < 0.1] = 0.0
    d_n = rng.uniform(0.0, 1.0, n_draws)
    d_n[rng.random(n_draws) < 0.3] = 0.0

    ref = _grid_scan_argmin(e_plus, d_n, yc)
    got = np.array([local_damage_solve(e, dn, y) for e, dn, y in zip(e_plus, d_n, yc)])
    worst = float(np.abs(got - ref).max())

    # below or at the damage threshold the solver must return the old value
    # exactly, not merely within tolerance
    n_exact = 0
    for y in (1.0, 600.0, 2.775e6):
        for frac in (0.0, 0.25, 0.9999, 1.0):
            if local_damage_solve(frac * y, 0.0, y) == 0.0:
                n_exact += 1
    ok = worst <= 1e-5 and n_exact == 12
    record_criterion(
        4, ok,
        f"10^4 draws vs 10^6-point scan: |d - scan| <= {worst:.2e} (tol 1e-5); "
        f"threshold returns d_n exactly in {n_exact}/12 cases",
    )
    assert worst <= 1e-5
    assert n_exact == 12


def test_criterion_5_derivative_consistency():
    mat = CONCRETE
    rng = np.random.default_rng(31)
    scale = 1e-3
    margin = 1e-5  # stay clear of the eigenvalue / trace sign kinks
    h_eps = 1e-7  # strain step: psi is piecewise quadratic, FD is exact there
    h_d = 1e-6
    worst_s = 0.0
    worst_y = 0.0
    n_ok = 0
    while n_ok < 1000:
        exx, eyy, exy = rng.uniform(-scale, scale, 3)
        d = rng.uniform(1e-2, 0.98)
        lam = np.linalg.eigvalsh(np.array([[exx, exy], [exy, eyy]]))
        if (
            abs(lam[1] - lam[0]) < 10 * margin
            or np.abs(lam).min() < margin
            or abs(exx + eyy) < margin
        ):
            continue
        n_ok += 1

        def psi(a, b, c, dd=d):
            return free_energy(eigen_split(Strain2D(a, b, c), mat), dd, mat)

        sig = stress(eigen_split(Strain2D(exx, eyy, exy), mat), d, mat)
        fd = np.array([
            (psi(exx + h_eps, eyy, exy) - psi(exx - h_eps, eyy, exy)) / (2 * h_eps),
            (psi(exx, eyy + h_eps, exy) - psi(exx, eyy - h_eps, exy)) / (2 * h_eps),
            (psi(exx, eyy, exy + h_eps) - psi(exx, eyy, exy - h_eps)) / (2 * h_eps),
        ])
        # the tensor shear component appears twice in the contraction
        an = np.array([sig[0, 0], sig[1, 1], 2.0 * sig[0, 1]])
        worst_s = max(worst_s, float(np.abs(fd - an).max() / max(np.abs(an).max(), 1e3)))

        y_an = driving_energy(eigen_split(Strain2D(exx, eyy, exy), mat), d, mat)
        y_fd = -(psi(exx, eyy, exy, d + h_d) - psi(exx, eyy, exy, d - h_d)) / (2 * h_d)
        worst_y = max(worst_y, abs(y_fd - y_an) / max(abs(y_an), 1e-3))
    ok = worst_s <= 1e-5 and worst_y <= 1e-5
    record_criterion(
        5, ok,
        f"1000 states: stress FD rel err <= {worst_s:.2e}, "
        f"driving energy FD rel err <= {worst_y:.2e} (tol 1e-5)",
    )
    assert worst_s <= 1e-5
    assert worst_y <= 1e-5


def _run_locked_bar(nx, n_steps, pulse_center, pulse_width, probes, lx=None):
    """Central-difference run of a thin strip with every y dof locked.

    Locking the lateral displacements makes the strip strain uniaxially, so
    a plane-strain pulse travels at the dilatational speed exactly; a free
    lateral surface would give the slower bar speed instead. Returns the
    probe velocity histories, the step size and the probe positions.
    """
    dx = 1e-3
    lx = lx or nx * dx
    mesh = pinched_strip(nx, 2, lx, 2 * dx)
    params = CONCRETE
    kin = ElementKinematics(mesh)
    mass = assemble_mass(mesh, params.rho)
    n = mesh.n_nodes
    fixed = np.arange(1, 2 * n, 2)
    solver = MassSolver(mass, fixed)
    dt = critical_timestep(mesh, params, 0.8, 1.0).dt

    x = mesh.nodes[:, 0]
    u = np.zeros(2 * n)
    v = np.zeros(2 * n)
    v[0::2] = 0.1 * np.exp(-0.5 * ((x - pulse_center) / pulse_width) ** 2)
    v[fixed] = 0.0
    d = np.zeros(mesh.n_elements)
    a = solver.solve(-kin.internal_forces(u, d, params), np.zeros(2 * n))

    probe_nodes = [
        int(np.argmin(np.abs(x - px) + 1e9 * (mesh.nodes[:, 1] > 1e-9))) for px in probes
    ]
    sig = np.zeros((n_steps + 1, len(probes)))
    sig[0] = [v[2 * pn] for pn in probe_nodes]
    e0 = kinetic_energy(mass, v) + kin.stored_energy(u, d, params)
    drift = 0.0
    for s in range(1, n_steps + 1):
        u = u + dt * v + 0.5 * dt * dt * a
        v_half = v + 0.5 * dt * a
        a = solver.solve(-kin.internal_forces(u, d, params), np.zeros(2 * n))
        v = v_half + 0.5 * dt * a
        sig[s] = [v[2 * pn] for pn in probe_nodes]
        e = kinetic_energy(mass, v) + kin.stored_energy(u, d, params)
        drift = max(drift, abs(e - e0) / e0)
    return sig, dt, [x[pn] for pn in probe_nodes], drift


def test_criterion_6_wave_speed_and_energy_drift():
    dx = 1e-3
    sig, dt, px, _ = _run_locked_bar(260, 1150, 20 * dx, 6 * dx, [40 * dx, 200 * dx])
    s1, s2 = sig[:, 0], sig[:, 1]
    corr = np.correlate(s2, s1, mode="full")
    k = int(np.argmax(corr))
    lag = k - (len(s1) - 1)
    # quadratic sub-sample refinement of the correlation peak
    y0, y1, y2 = corr[k - 1], corr[k], corr[k + 1]
    lag_fine = lag + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    speed = (px[1] - px[0]) / (lag_fine * dt)
    c_d = wave_speeds(CONCRETE).c_d
    rel_err = abs(speed - c_d) / c_d

    _, _, _, drift = _run_locked_bar(40, 2000, 20e-3, 3e-3, [20e-3], lx=40e-3)
    ok = rel_err <= 0.02 and drift < 0.01
    record_criterion(
        6, ok,
        f"front speed {speed:.0f} m/s vs c_d {c_d:.0f} (rel err {rel_err:.4f}, tol 0.02); "
        f"energy drift {drift:.2e} over 2000 steps at cfl 0.8 (tol 0.01)",
    )
    assert rel_err <= 0.02
    assert drift < 0.01


def _notched_tension_mesh(h):
    # bottom half of a 100 x 40 mm plate with a 50 mm edge notch at
    # mid-height: the notch is the free part of the top (symmetry) edge
    lx, ly, notch = 0.1, 0.02, 0.05
    base = rectangle_mesh(round(lx / h), round(ly / h), lx, ly)
    nodes = base.nodes
    eps = 1e-9
    facets, tags = [], []
    bot = np.flatnonzero(nodes[:, 1] < eps)
    bot = bot[np.argsort(nodes[bot, 0])]
    for a, b in zip(bot[:-1], bot[1:]):
        facets.append([a, b])
        tags.append("load")
    top = np.flatnonzero(nodes[:, 1] > ly - eps)
    top = top[np.argsort(nodes[top, 0])]
    for a, b in zip(top[:-1], top[1:]):
        if nodes[a, 0] >= notch - eps:  # constrained only beyond the notch
            facets.append([a, b])
            tags.append("sym")
    return Mesh(nodes, base.triangles, facets=np.array(facets), facet_tags=tags)


def test_criterion_7_notched_tension(tmp_path):
    lc = 1.25e-3
    notch_tip = np.array([0.05, 0.02])
    mesh = _notched_tension_mesh(1e-3)
    save_mesh(mesh, tmp_path / "m.txt")
    cfg = SimulationConfig(
        mesh_path=str(tmp_path / "m.txt"),
        mesh_format="native_text",
        tag_names=None,
        material=CONCRETE,
        cfl_factor=0.25,
        t_end=80e-6,
        bcs=(
            BoundaryCondition(tag="load", kind="traction", value=(0.0, -1e6)),
            BoundaryCondition(tag="sym", kind="displacement", value=0.0, component="y"),
        ),
        out_dir=tmp_path / "out",
        every=16,
        post=PostprocOptions(mode="symmetric_branching", notch_x=0.05),
    )
    sim = Simulation(cfg)
    summary = sim.run()
    assert summary["error"] is None

    with open(cfg.out_dir / "series.csv") as fh:
        rows = [[float(x) for x in r] for r in list(csv.reader(fh))[1:]]
    e_d = [r[3] for r in rows]
    v_ratio = [r[6] for r in rows]

    # initiation: first output with significant damage sits at the notch tip
    first = None
    for k in range(len(rows)):
        _, _, _, cell = read_vtk(cfg.out_dir / f"fields_{k:06d}.vtk")
        if cell["damage"].max() > 0.5:
            first = k
            break
    assert first is not None, "no damage initiated"
    c = sim.centroids
    d_first = read_vtk(cfg.out_dir / f"fields_{first:06d}.vtk")[3]["damage"]
    start = c[int(np.argmax(d_first))]
    init_dist = float(np.linalg.norm(start - notch_tip))
    initiated_at_notch = init_dist <= 4 * lc

    # propagation: the damage band extends far to the right of the notch
    d_final = sim.damage.d_n
    band = d_final > 0.5
    reach = float(c[band, 0].max()) if band.any() else 0.0
    rightward = reach >= 0.07

    # dissipated energy strictly increases once the crack is running
    init_idx = next(i for i, e in enumerate(e_d) if e > 0)
    e_d_strict = all(b > a for a, b in zip(e_d[init_idx:], e_d[init_idx + 1 :]))

    ratio = slope_ratio(sim.lip, d_final, lc)
    feasible = ratio <= 1.0 + 1e-8

    # tip speed stays sub-Rayleigh outside a window of two outputs around
    # the detected branch time (no branch was detected: the whole run counts)
    t_br = summary["t_br"]
    if t_br is None:
        in_window = [False] * len(rows)
    else:
        k_br = int(np.argmin([abs(r[0] - t_br) for r in rows]))
        in_window = [abs(k - k_br) <= 2 for k in range(len(rows))]
    sub_rayleigh = all(v < 1.0 for v, w in zip(v_ratio, in_window) if not w)
    v_max = max(v for v, w in zip(v_ratio, in_window) if not w)

    # half-model signature of symmetric branching: the crack leaves the
    # symmetry plane by well over the regularization length
    y_dev = float(0.02 - c[band, 1].min()) if band.any() else 0.0
    deviates = y_dev > 2 * lc

    ok = initiated_at_notch and rightward and e_d_strict and feasible and sub_rayleigh and deviates
    record_criterion(
        7, ok,
        f"initiation {init_dist*1e3:.1f} mm from notch tip, reach x = {reach*1e3:.0f} mm, "
        f"E_d strictly increasing: {e_d_strict}, edge ratio {ratio - 1.0:+.1e} vs 1, "
        f"max v_tip/c_R {v_max:.2f}, off-plane deviation {y_dev*1e3:.1f} mm; "
        f"reference-scale energy curves and branch times are out of desk scale "
        f"(fine-mesh topology run not attempted)",
    )
    assert initiated_at_notch, f"damage initiated {init_dist*1e3:.1f} mm from the notch tip"
    assert rightward, f"damage band reaches only x = {reach*1e3:.1f} mm"
    assert e_d_strict
    assert feasible, f"edge ratio {ratio}"
    assert sub_rayleigh, f"tip speed ratio reached {max(v_ratio):.3f} outside the branch window"
    assert deviates, f"damage stays within {y_dev*1e3:.1f} mm of the symmetry plane"


def _impact_shear_mesh(h):
    """Upper half of the twin-notched impact plate, 100 x 100 mm.

    The notch is a slit along y = 25 mm from the left edge to x = 50 mm,
    meshed with duplicated nodes so the faces are disconnected; the tip
    node at (50, 25) stays shared. Impact zone: left edge below the notch.
    """
    lx = ly = 0.1
    notch_len, notch_y = 0.05, 0.025
    nx, ny = round(lx / h), round(ly / h)
    jn = round(notch_y / h)
    x = np.linspace(0.0, lx, nx + 1)
    y = np.linspace(0.0, ly, ny + 1)
    xx, yy = np.meshgrid(x, y)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    i_slit = [i for i in range(nx + 1) if x[i] < notch_len - 1e-12]
    lower = {}
    extra = []
    for i in i_slit:
        lower[nid(i, jn)] = len(nodes) + len(extra)
        extra.append(nodes[nid(i, jn)])
    nodes = np.vstack([nodes, np.array(extra)])

    def remap(node, below):
        return lower.get(node, node) if below else node

    tris = []
    for j in range(ny):
        below = j < jn  # rows under the slit use the lower copies
        for i in range(nx):
            a, b, cc, dd = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if (i + j) % 2 == 0:
                pair = ((a, b, cc), (a, cc, dd))
            else:
                pair = ((a, b, dd), (b, cc, dd))
            for t in pair:
                tris.append([remap(node, below and node in lower) for node in t])

    facets, tags = [], []
    for j in range(jn):  # impact zone: left edge below the notch
        a, b = nid(0, j), nid(0, j + 1)
        facets.append([remap(a, a in lower), remap(b, b in lower)])
        tags.append("impact")
    for i in range(nx):  # symmetry plane: bottom edge
        facets.append([nid(i, 0), nid(i + 1, 0)])
        tags.append("sym")
    return Mesh(nodes, np.array(tris), facets=np.array(facets), facet_tags=tags)


def _principal_angle(d, centroids, tip, lc):
    """Damage-weighted principal direction of the crack cloud, in degrees.

    Elements within two regularization lengths of the tip are excluded so
    the isotropic initiation halo does not bias the direction.
    """
    m = (d > 0.5) & (np.linalg.norm(centroids - tip, axis=1) > 2 * lc)
    if m.sum() < 3:
        return None
    rel = centroids[m] - tip
    w = d[m]
    cov = (w[:, None, None] * rel[:, :, None] * rel[:, None, :]).sum(axis=0)
    vals, vecs = np.linalg.eigh(cov)
    v = vecs[:, int(np.argmax(vals))]
    if v[1] < 0:
        v = -v
    return float(np.degrees(np.arctan2(v[1], v[0])))


def test_criterion_8_impact_shear(tmp_path):
    lc = 2e-3
    tip = np.array([0.05, 0.025])
    mesh = _impact_shear_mesh(1e-3)
    save_mesh(mesh, tmp_path / "m.txt")
    cfg = SimulationConfig(
        mesh_path=str(tmp_path / "m.txt"),
        mesh_format="native_text",
        tag_names=None,
        material=STEEL,
        cfl_factor=0.25,
        t_end=50e-6,
        bcs=(
            BoundaryCondition(
                tag="impact", kind="velocity", value=16.5, component="x",
                profile="ramp", rise_time=1e-6,
            ),
            BoundaryCondition(tag="sym", kind="displacement", value=0.0, component="y"),
        ),
        out_dir=tmp_path / "out",
        every=25,
        post=PostprocOptions(
            mode="single",
            notch_x=0.05,
            region1=Rectangle(0.0, 0.025, 0.1, 0.1),
            region2=Rectangle(0.06, 0.0, 0.1, 0.021),
        ),
    )
    sim = Simulation(cfg)
    summary = sim.run()
    assert summary["error"] is None

    with open(cfg.out_dir / "series.csv") as fh:
        times = [float(r[0]) for r in list(csv.reader(fh))[1:]]
    c = sim.centroids
    a2 = []
    fields = []
    for k in range(len(times)):
        cell = read_vtk(cfg.out_dir / f"fields_{k:06d}.vtk")[3]
        fields.append(cell["damage"])
        a2.append(region_lengths(cell["damage"], sim.mesh.element_area, c, lc, cfg.post)[1])

    # secondary cracking must stay silent until the guard time, long enough
    # for the impact wave to traverse the plate three times over
    t_guard = 0.8 * 3 * 0.1 / wave_speeds(STEEL).c_d
    quiet = all(a == 0.0 for a, t in zip(a2, times) if t < t_guard)

    # measure the crack angle at the last output where the secondary region
    # is still clean, so reflections cannot contaminate the direction
    k_last = max(k for k, a in enumerate(a2) if a == 0.0)
    angle = _principal_angle(fields[k_last], c, tip, lc)
    assert angle is not None, "crack cloud too small to orient"
    in_range = 55.0 <= angle <= 75.0

    # the zero is not vacuous: the primary crack is well developed by then,
    # and the secondary region does activate later in the run
    m = fields[k_last] > 0.5
    reach = float(np.linalg.norm(c[m] - tip, axis=1).max()) if m.any() else 0.0
    developed = reach >= 5 * lc
    activates = a2[-1] > 0.0

    ok = quiet and in_range and developed and activates
    record_criterion(
        8, ok,
        f"crack angle {angle:.1f} deg (range [55, 75]), secondary region silent "
        f"before {t_guard*1e6:.1f} us: {quiet}, primary reach {reach*1e3:.1f} mm, "
        f"secondary length {a2[-1]*1e3:.2f} mm at {times[-1]*1e6:.0f} us",
    )
    assert quiet, "secondary region grew before the guard time"
    assert in_range, f"crack angle {angle:.1f} deg outside [55, 75]"
    assert developed
    assert activates


def _strip_run_config(tmp_path, tag):
    from test_driver import tagged_strip

    mesh = tagged_strip(10, 3, 10e-3, 3e-3)
    mesh_path = tmp_path / f"m_{tag}.txt"
    save_mesh(mesh, mesh_path)
    return SimulationConfig(
        mesh_path=str(mesh_path),
        mesh_format="native_text",
        tag_names=None,
        material=CONCRETE,
        cfl_factor=0.2,
        t_end=1.2e-5,
        bcs=(
            BoundaryCondition(tag="right", kind="traction", value=(12e6, 0.0)),
            BoundaryCondition(tag="left", kind="displacement", value=0.0, component="x"),
            BoundaryCondition(tag="left", kind="displacement", value=0.0, component="y"),
        ),
        out_dir=tmp_path / f"out_{tag}",
        every=20,
        post=PostprocOptions(mode="single"),
    )


def test_criterion_9_determinism(tmp_path):
    digests = []
    for tag in ("a", "b"):
        cfg = _strip_run_config(tmp_path, tag)
        summary = Simulation(cfg).run()
        assert summary["error"] is None
        assert summary["max_damage"] > 0.5  # the damage solver actually ran
        digests.append(hashlib.sha256((cfg.out_dir / "series.csv").read_bytes()).hexdigest())
    ok = digests[0] == digests[1]
    record_criterion(
        9, ok,
        f"two identical runs: series.csv sha256 {'match' if ok else 'differ'} "
        f"({digests[0][:12]})",
    )
    assert digests[0] == digests[1]
