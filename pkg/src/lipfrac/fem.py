"""Linear-triangle finite-element kernels.

Displacement DOFs are interleaved: node ``i`` owns components ``2i`` (x) and
``2i+1`` (y). Strain, damage and stress are constant per element, so one-point
quadrature integrates every element integral exactly. The mass matrix is
consistent (not lumped). All integrals assume unit thickness.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .material import MaterialParams, Strain2D, degradation, softening, split_batch, stress_batch
from .mesh import Mesh

# exact integral of products of two linear basis functions over a triangle,
# divided by the area: int N_i N_j dA = A/12 * (1 + delta_ij)
_MASS_BLOCK = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class ElementKinematics:
    """Shape-function gradients and the sparse strain operator of a mesh.

    ``strain_op`` maps the interleaved displacement vector (2 n_nodes,) to
    stacked per-element strain triples ``(exx, eyy, gamma_xy)`` with the
    engineering shear ``gamma = 2 exy``, so that the internal force is the
    plain transpose product with area-weighted stress triples.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tri = mesh.triangles
        p0 = mesh.nodes[tri[:, 0]]
        p1 = mesh.nodes[tri[:, 1]]
        p2 = mesh.nodes[tri[:, 2]]
        inv2a = 1.0 / (2.0 * mesh.element_area)
        # dN_i/dx = b_i / 2A, dN_i/dy = c_i / 2A with cyclic edge differences
        bx = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
        cy = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
        self.grad_x = bx * inv2a[:, None]  # (m, 3)
        self.grad_y = cy * inv2a[:, None]
        self.strain_op = self._build_strain_op()

    def _build_strain_op(self) -> sp.csr_matrix:
        mesh = self.mesh
        m = mesh.n_elements
        tri = mesh.triangles
        rows = np.empty(12 * m, dtype=np.int64)
        cols = np.empty(12 * m, dtype=np.int64)
        vals = np.empty(12 * m)
        base = 3 * np.arange(m)
        for loc in range(3):
            node = tri[:, loc]
            gx = self.grad_x[:, loc]
            gy = self.grad_y[:, loc]
            o = 4 * loc * m
            rows[o : o + m] = base
            cols[o : o + m] = 2 * node
            vals[o : o + m] = gx
            rows[o + m : o + 2 * m] = base + 1
            cols[o + m : o + 2 * m] = 2 * node + 1
            vals[o + m : o + 2 * m] = gy
            rows[o + 2 * m : o + 3 * m] = base + 2
            cols[o + 2 * m : o + 3 * m] = 2 * node
            vals[o + 2 * m : o + 3 * m] = gy
            rows[o + 3 * m : o + 4 * m] = base + 2
            cols[o + 3 * m : o + 4 * m] = 2 * node + 1
            vals[o + 3 * m : o + 4 * m] = gx
        op = sp.coo_matrix(
            (vals, (rows, cols)), shape=(3 * m, 2 * mesh.n_nodes)
        ).tocsr()
        op.sum_duplicates()
        return op

    def strain(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-element tensor strain components ``(exx, eyy, exy)`` from displacements."""
        u = np.asarray(u, dtype=float)
        if u.shape != (2 * self.mesh.n_nodes,):
            raise ValueError(
                f"displacement vector has shape {u.shape}, expected ({2 * self.mesh.n_nodes},)"
            )
        e = self.strain_op @ u
        return e[0::3], e[1::3], 0.5 * e[2::3]

    def internal_forces(self, u: np.ndarray, d: np.ndarray, params: MaterialParams) -> np.ndarray:
        """Assembled internal force vector for damaged stress at displacement ``u``."""
        exx, eyy, exy = self.strain(u)
        return self.internal_forces_from_strain(exx, eyy, exy, d, params)

    def internal_forces_from_strain(self, exx, eyy, exy, d, params: MaterialParams) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        if d.shape != (self.mesh.n_elements,):
            raise ValueError(
                f"damage vector has shape {d.shape}, expected ({self.mesh.n_elements},)"
            )
        sxx, syy, sxy = stress_batch(exx, eyy, exy, d, params)
        weighted = np.empty(3 * self.mesh.n_elements)
        area = self.mesh.element_area
        weighted[0::3] = area * sxx
        weighted[1::3] = area * syy
        weighted[2::3] = area * sxy  # conjugate to the engineering shear row
        return self.strain_op.T @ weighted

    def stored_energy(self, u: np.ndarray, d: np.ndarray, params: MaterialParams) -> float:
        """Total stored energy (J per unit thickness) at displacement and damage."""
        exx, eyy, exy = self.strain(u)
        _, _, _, e_plus, e_minus = split_batch(exx, eyy, exy, params)
        psi = degradation(np.asarray(d, dtype=float)) * e_plus + e_minus
        return float(self.mesh.element_area @ psi)


def strain_from_displacement(mesh: Mesh, u: np.ndarray) -> list[Strain2D]:
    """Per-element strain tensors of the linear interpolant of ``u``."""
    exx, eyy, exy = ElementKinematics(mesh).strain(u)
    return [Strain2D(float(a), float(b), float(c)) for a, b, c in zip(exx, eyy, exy)]


def assemble_mass(mesh: Mesh, rho: float) -> sp.csr_matrix:
    """Consistent mass matrix on interleaved DOFs (symmetric positive definite)."""
    if rho <= 0.0:
        raise ValueError(f"density must be positive, got {rho}")
    m = mesh.n_elements
    tri = mesh.triangles
    coef = rho * mesh.element_area  # (m,)
    blocks = coef[:, None, None] * _MASS_BLOCK[None, :, :]  # (m, 3, 3)
    rows = []
    cols = []
    vals = []
    for comp in range(2):
        dof = 2 * tri + comp  # (m, 3)
        rows.append(np.repeat(dof, 3, axis=1).ravel())
        cols.append(np.tile(dof, (1, 3)).ravel())
        vals.append(blocks.ravel())
    n = 2 * mesh.n_nodes
    mass = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mass.sum_duplicates()
    return mass


def internal_forces(mesh: Mesh, u: np.ndarray, d: np.ndarray, params: MaterialParams) -> np.ndarray:
    """One-shot internal force assembly (builds the strain operator each call)."""
    return ElementKinematics(mesh).internal_forces(u, d, params)


def external_traction(mesh: Mesh, facets: np.ndarray, traction, scale: float = 1.0) -> np.ndarray:
    """Nodal force vector of a uniform traction on the given boundary facets.

    Each facet of length L sends ``traction * L / 2`` to each of its two end
    nodes (exact for linear shape functions). ``scale`` multiplies the whole
    vector, for time-dependent load amplitudes.
    """
    facets = np.asarray(facets, dtype=np.int64).reshape(-1, 2)
    tx, ty = float(traction[0]), float(traction[1])
    out = np.zeros(2 * mesh.n_nodes)
    if facets.size == 0 or scale == 0.0:
        return out
    lengths = np.linalg.norm(mesh.nodes[facets[:, 0]] - mesh.nodes[facets[:, 1]], axis=1)
    half = 0.5 * scale * lengths
    for col in range(2):
        np.add.at(out, 2 * facets[:, col], half * tx)
        np.add.at(out, 2 * facets[:, col] + 1, half * ty)
    return out


def energy_integrals(
    mesh: Mesh,
    tensile_energy: np.ndarray,
    compressive_energy: np.ndarray,
    d: np.ndarray,
    params: MaterialParams,
) -> tuple[float, float]:
    """Stored and dissipated energy (J per unit thickness).

    ``tensile_energy``/``compressive_energy`` are the per-element split energy
    densities at zero damage; stored energy degrades the tensile half, the
    dissipated energy is the softening integral scaled by the critical energy.
    """
    d = np.asarray(d, dtype=float)
    area = mesh.element_area
    e_p = float(area @ (degradation(d) * tensile_energy + compressive_energy))
    e_d = float(params.yc * (area @ softening(d)))
    return e_p, e_d


def kinetic_energy(mass: sp.spmatrix, v: np.ndarray) -> float:
    """Kinetic energy of a nodal velocity vector under the consistent mass."""
    return 0.5 * float(v @ (mass @ v))
