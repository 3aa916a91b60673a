"""Global assembly of the stabilization-free weak Galerkin system.

DoF layout: all face DoFs first (edge-major, k+1 each), then all cell
DoFs (cell-major, dim P_{k+1} each). Dirichlet data is assigned strongly
to boundary face DoFs and eliminated symmetrically; static condensation
removes the cell block, whose per-cell SPD sub-blocks make the interior
recovery exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.linalg import cho_factor, cho_solve

from .polymesh import PolyMesh, SubTriangulation
from .quadbasis import map_to_edge, map_to_triangle, triangle_rule, edge_rule
from .weakgrad import (CoefficientField, ElementOperator, element_operator,
                       face_projection_Qb)

__all__ = [
    "AssemblyError",
    "CondensationError",
    "DofMap",
    "BoundarySpec",
    "GlobalSystem",
    "CondensedSystem",
    "build_dof_map",
    "assemble_system",
    "static_condensation",
    "write_matrix_market",
]


class AssemblyError(Exception):
    pass


class CondensationError(Exception):
    pass


@dataclass(frozen=True)
class DofMap:
    k: int
    num_faces: int
    num_cells: int

    @property
    def face_block(self) -> int:
        return self.k + 1

    @property
    def cell_block(self) -> int:
        return (self.k + 2) * (self.k + 3) // 2

    @property
    def n_face_dofs(self) -> int:
        return self.num_faces * self.face_block

    @property
    def total(self) -> int:
        return self.n_face_dofs + self.num_cells * self.cell_block

    def face_dofs(self, e: int):
        return np.arange(e * self.face_block, (e + 1) * self.face_block)

    def cell_dofs(self, c: int):
        start = self.n_face_dofs + c * self.cell_block
        return np.arange(start, start + self.cell_block)


def build_dof_map(mesh: PolyMesh, k: int) -> DofMap:
    if k < 0:
        raise AssemblyError("polynomial degree k must be >= 0")
    return DofMap(k=k, num_faces=mesh.num_edges, num_cells=mesh.num_cells)


def boundary_face_dofs_by_marker(mesh: PolyMesh, dofmap: DofMap) -> dict:
    """Marker tag -> array of face DoF indices on that part of the boundary."""
    out: dict[int, list] = {}
    for e in mesh.boundary_edges:
        tag = int(mesh.edge_markers[e])
        out.setdefault(tag, []).extend(dofmap.face_dofs(e).tolist())
    return {tag: np.asarray(v, dtype=np.intp) for tag, v in out.items()}


class BoundarySpec:
    """Boundary conditions keyed by edge marker.

    dirichlet / neumann map marker tags to callables on (n, 2) point
    arrays; all_dirichlet / all_neumann act as catch-alls for unlisted
    tags. Every boundary face must be covered by exactly one condition.
    """

    def __init__(self, dirichlet=None, neumann=None,
                 all_dirichlet: Callable | None = None,
                 all_neumann: Callable | None = None):
        if all_dirichlet is not None and all_neumann is not None:
            raise AssemblyError("two catch-all boundary conditions")
        self.dirichlet = dict(dirichlet or {})
        self.neumann = dict(neumann or {})
        overlap = set(self.dirichlet) & set(self.neumann)
        if overlap:
            raise AssemblyError(f"markers {sorted(overlap)} listed twice")
        self.catch_all = None
        if all_dirichlet is not None:
            self.catch_all = ("dirichlet", all_dirichlet)
        elif all_neumann is not None:
            self.catch_all = ("neumann", all_neumann)

    @classmethod
    def dirichlet_everywhere(cls, g) -> "BoundarySpec":
        return cls(all_dirichlet=g)

    def condition_for(self, tag: int):
        if tag in self.dirichlet:
            return "dirichlet", self.dirichlet[tag]
        if tag in self.neumann:
            return "neumann", self.neumann[tag]
        if self.catch_all is not None:
            return self.catch_all
        raise AssemblyError(f"boundary marker {tag} has no boundary condition")


@dataclass
class GlobalSystem:
    """Assembled system, before and after Dirichlet elimination.

    A_full / b_full cover every DoF; A / b are restricted to the free set.
    fixed_dofs and fixed_values record the eliminated Dirichlet data.
    """
    mesh: PolyMesh
    subtri: SubTriangulation
    dofmap: DofMap
    k: int
    coeff: CoefficientField
    flux_sign: int
    A_full: sp.csr_matrix
    b_full: np.ndarray
    free: np.ndarray
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    elem_ops: list = field(repr=False, default_factory=list)
    rhs_degree: int = 2

    def expand(self, x_free) -> np.ndarray:
        """Full coefficient vector from a free-DoF solution."""
        out = np.empty(self.dofmap.total)
        out[self.free] = x_free
        out[self.fixed_dofs] = self.fixed_values
        return out


def _symmetric_csr(n, rows, cols, vals) -> sp.csr_matrix:
    """Exactly symmetric CSR from triplets of symmetric local blocks.

    Only the upper triangle is accumulated and then mirrored, so
    A == A.T holds bitwise regardless of summation order.
    """
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = rows <= cols
    upper = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(n, n)).tocsr()
    upper.sum_duplicates()
    diag = sp.diags(upper.diagonal())
    return (upper + upper.T - diag).tocsr()


def assemble_system(mesh: PolyMesh, subtri: SubTriangulation, k: int,
                    coeff: CoefficientField, f: Callable, bc: BoundarySpec,
                    flux_sign: int = 1, rhs_degree: int | None = None,
                    dirichlet_npoints: int | None = None) -> GlobalSystem:
    """Assemble stiffness and load for (G_w u, G_w v) = (f, v_0).

    The load integrates f against the cell basis with a fan-triangle rule
    of degree `rhs_degree` (default 2(k+1)); Neumann faces add
    flux_sign * <g_N, v_b>; Dirichlet faces are projected with
    face_projection_Qb and eliminated.  The default dirichlet_npoints of
    k+1 makes the boundary values interpolatory at the Gauss points of
    each face (the face midpoint at k = 0); pass 6 for the near-exact
    L2 projection instead.
    """
    dofmap = build_dof_map(mesh, k)
    if rhs_degree is None:
        rhs_degree = 2 * (k + 1)
    if dirichlet_npoints is None:
        dirichlet_npoints = k + 1
    rhs_rule = triangle_rule(rhs_degree)

    rows, cols, vals = [], [], []
    b = np.zeros(dofmap.total)
    elem_ops: list[ElementOperator] = []
    for c in range(mesh.num_cells):
        op = element_operator(mesh, subtri, c, k, coeff)
        elem_ops.append(op)
        gdofs = np.concatenate([dofmap.face_dofs(e) for e in op.fan.edge_ids]
                               + [dofmap.cell_dofs(c)])
        rr, cc = np.meshgrid(gdofs, gdofs, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(op.A.ravel())

        cdofs = dofmap.cell_dofs(c)
        load = np.zeros(dofmap.cell_block)
        for i in range(op.fan.n_edges):
            pts, wts = map_to_triangle(rhs_rule, op.fan.triangle(i))
            fv = np.asarray(f(pts), dtype=float).reshape(len(pts))
            load += op.cellb.eval(pts).T @ (fv * wts)
        b[cdofs] += load

    A_full = _symmetric_csr(dofmap.total, rows, cols, vals)

    fixed_dofs, fixed_vals = [], []
    erule = edge_rule(min(max(k + 1, 2), 6))
    for e in mesh.boundary_edges:
        kind, g = bc.condition_for(int(mesh.edge_markers[e]))
        c = mesh.edge_cells[e, 0]
        op = elem_ops[c]
        local = int(np.flatnonzero(op.fan.edge_ids == e)[0])
        fb = op.face_bases[local]
        if kind == "dirichlet":
            coeffs = face_projection_Qb(fb, g, npoints=dirichlet_npoints)
            fixed_dofs.extend(dofmap.face_dofs(e).tolist())
            fixed_vals.extend(coeffs.tolist())
        else:
            a = fb.midpoint - 0.5 * fb.length * fb.direction
            bpt = fb.midpoint + 0.5 * fb.length * fb.direction
            pts, wts = map_to_edge(erule, a, bpt)
            gv = np.asarray(g(pts), dtype=float).reshape(len(pts))
            b[dofmap.face_dofs(e)] += flux_sign * (fb.eval(pts).T @ (gv * wts))

    fixed_dofs = np.asarray(fixed_dofs, dtype=np.intp)
    fixed_vals = np.asarray(fixed_vals, dtype=float)
    mask = np.ones(dofmap.total, dtype=bool)
    mask[fixed_dofs] = False
    free = np.flatnonzero(mask)

    A_red = A_full[free][:, free].tocsr()
    b_red = b[free].copy()
    if len(fixed_dofs):
        b_red -= A_full[free][:, fixed_dofs] @ fixed_vals

    return GlobalSystem(mesh=mesh, subtri=subtri, dofmap=dofmap, k=k,
                        coeff=coeff, flux_sign=flux_sign, A_full=A_full,
                        b_full=b, free=free, fixed_dofs=fixed_dofs,
                        fixed_values=fixed_vals, A=A_red, b=b_red,
                        elem_ops=elem_ops, rhs_degree=rhs_degree)


@dataclass
class CondensedSystem:
    """Face-only Schur complement system with exact interior recovery."""
    system: GlobalSystem
    S: sp.csr_matrix            # reduced to free face DoFs
    b: np.ndarray
    free_faces: np.ndarray      # free face DoF ids (global numbering)
    cell_factors: list = field(repr=False, default_factory=list)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def recover(self, x_faces) -> np.ndarray:
        """Full DoF vector from the free-face solution.

        Interior DoFs solve their local equations exactly, which is what
        makes the recovered flux locally conservative independent of the
        face-solver tolerance.
        """
        sys = self.system
        dofmap = sys.dofmap
        full = np.zeros(dofmap.total)
        full[self.free_faces] = x_faces
        full[sys.fixed_dofs] = sys.fixed_values
        for c, (factor, fdofs, Afc) in enumerate(self.cell_factors):
            rhs = sys.b_full[dofmap.cell_dofs(c)] - Afc.T @ full[fdofs]
            full[dofmap.cell_dofs(c)] = cho_solve(factor, rhs)
        return full


def static_condensation(system: GlobalSystem) -> CondensedSystem:
    """Eliminate the cell block by per-cell Schur complements."""
    dofmap = system.dofmap
    nf = dofmap.n_face_dofs
    rows, cols, vals = [], [], []
    b_s = system.b_full[:nf].copy()
    cell_factors = []
    for c, op in enumerate(system.elem_ops):
        fdofs = np.concatenate([dofmap.face_dofs(e) for e in op.fan.edge_ids])
        nfl = op.n_face_dofs
        Aff = op.A[:nfl, :nfl]
        Afc = op.A[:nfl, nfl:]
        Acc = op.A[nfl:, nfl:]
        try:
            factor = cho_factor(Acc)
        except np.linalg.LinAlgError as exc:
            raise CondensationError(
                f"cell {c}: singular interior block") from exc
        X = cho_solve(factor, Afc.T)
        S_local = Aff - Afc @ X
        S_local = 0.5 * (S_local + S_local.T)
        rr, cc = np.meshgrid(fdofs, fdofs, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(S_local.ravel())
        b_s[fdofs] -= Afc @ cho_solve(factor, system.b_full[dofmap.cell_dofs(c)])
        cell_factors.append((factor, fdofs, Afc))

    S_full = _symmetric_csr(nf, rows, cols, vals)
    mask = np.ones(nf, dtype=bool)
    mask[system.fixed_dofs] = False
    free_faces = np.flatnonzero(mask)
    S_red = S_full[free_faces][:, free_faces].tocsr()
    b_red = b_s[free_faces].copy()
    if len(system.fixed_dofs):
        b_red -= S_full[free_faces][:, system.fixed_dofs] @ system.fixed_values
    return CondensedSystem(system=system, S=S_red, b=b_red,
                           free_faces=free_faces, cell_factors=cell_factors)


def write_matrix_market(system: GlobalSystem, path, reduced: bool = True) -> None:
    """Export the (reduced by default) matrix in Matrix Market format."""
    # write through a handle: mmwrite appends .mtx to bare path names
    with open(path, "wb") as fh:
        mmwrite(fh, system.A if reduced else system.A_full, symmetry="symmetric")
