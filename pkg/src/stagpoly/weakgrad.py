"""Per-element operators of the weak Galerkin discretization.

For a cell fanned into triangles, the flux space is spanned by frame
vectors (outward normal / tangent of each fan triangle's outer edge)
times scaled monomials supported on that triangle. The weak gradient of
a pair (u_0, u_b) is the flux-space field G_w u with

    (G_w u, tau)_K = (grad u_0, tau)_K + <u_b - u_0, tau . n>_dK

for every flux test field tau. In matrix form its coefficients are
M^{-1} [D_b, D_0] u and the local stiffness is
A_K = [D_b, D_0]^T M^{-1} [D_b, D_0].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .polymesh import CellFan, PolyMesh, SubTriangulation
from .quadbasis import (CellBasis, FaceBasis, FluxBasis, cell_basis, edge_rule,
                        face_basis, flux_basis, map_to_edge, map_to_triangle,
                        triangle_rule)

__all__ = [
    "CoefficientError",
    "DegenerateElementError",
    "CoefficientField",
    "identity_coefficient",
    "scalar_coefficient",
    "matrix_coefficient",
    "ElementOperator",
    "element_operator",
    "local_mass",
    "local_db_d0",
    "local_stiffness",
    "weak_gradient_coeffs",
    "weak_divergence",
    "face_projection_Qb",
    "cell_mass",
    "dump_element_operators",
]


class CoefficientError(Exception):
    """Coefficient matrix is not symmetric positive definite."""


class DegenerateElementError(Exception):
    """Element mass matrix could not be factorized."""


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric positive definite 2x2 coefficient K(x).

    `fn` maps an (n, 2) array of points to (n, 2, 2) matrices. When
    `cellwise_constant` is set, K is sampled once per cell (at the star
    point), the fast path for coefficients aligned with the mesh.
    """
    fn: Callable
    cellwise_constant: bool = False
    is_identity: bool = False

    def at(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        K = np.asarray(self.fn(pts), dtype=float)
        if K.shape != (len(pts), 2, 2):
            raise CoefficientError(f"coefficient returned shape {K.shape}")
        _check_spd(K)
        return K

    def inv_at(self, points):
        K = self.at(points)
        det = K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] * K[:, 1, 0]
        inv = np.empty_like(K)
        inv[:, 0, 0] = K[:, 1, 1] / det
        inv[:, 1, 1] = K[:, 0, 0] / det
        inv[:, 0, 1] = -K[:, 0, 1] / det
        inv[:, 1, 0] = -K[:, 1, 0] / det
        return inv


def _check_spd(K, tol=1e-12):
    sym = np.abs(K[:, 0, 1] - K[:, 1, 0])
    scale = np.maximum(1.0, np.abs(K).max(axis=(1, 2)))
    if np.any(sym > tol * scale):
        raise CoefficientError("coefficient matrix is not symmetric")
    det = K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] * K[:, 1, 0]
    if np.any(K[:, 0, 0] <= 0.0) or np.any(det <= 0.0):
        raise CoefficientError("coefficient matrix is not positive definite")


def identity_coefficient() -> CoefficientField:
    def fn(pts):
        K = np.zeros((len(pts), 2, 2))
        K[:, 0, 0] = 1.0
        K[:, 1, 1] = 1.0
        return K
    return CoefficientField(fn=fn, cellwise_constant=True, is_identity=True)


def scalar_coefficient(kappa, cellwise_constant: bool = False) -> CoefficientField:
    """kappa may be a number or a callable on (n, 2) point arrays."""
    if callable(kappa):
        def fn(pts):
            vals = np.asarray(kappa(pts), dtype=float).reshape(len(pts))
            K = np.zeros((len(pts), 2, 2))
            K[:, 0, 0] = vals
            K[:, 1, 1] = vals
            return K
        return CoefficientField(fn=fn, cellwise_constant=cellwise_constant)
    val = float(kappa)

    def fn_const(pts):
        K = np.zeros((len(pts), 2, 2))
        K[:, 0, 0] = val
        K[:, 1, 1] = val
        return K
    return CoefficientField(fn=fn_const, cellwise_constant=True,
                            is_identity=(val == 1.0))


def matrix_coefficient(fn, cellwise_constant: bool = False) -> CoefficientField:
    return CoefficientField(fn=fn, cellwise_constant=cellwise_constant)


@dataclass(frozen=True)
class ElementOperator:
    """All local matrices of one cell, over [face DoFs | cell DoFs]."""
    cell: int
    k: int
    fan: CellFan
    fluxb: FluxBasis
    cellb: CellBasis
    face_bases: list
    M: np.ndarray
    Db: np.ndarray
    D0: np.ndarray
    A: np.ndarray
    M_factor: tuple

    @property
    def n_face_dofs(self) -> int:
        return self.Db.shape[1]

    @property
    def n_cell_dofs(self) -> int:
        return self.D0.shape[1]

    def g_matrix(self):
        return np.hstack([self.Db, self.D0])


def local_mass(fluxb: FluxBasis, coeff: CoefficientField) -> np.ndarray:
    """Gram matrix of the flux basis in the K^{-1}-weighted L2 product.

    Block diagonal over fan triangles since supports are disjoint.
    """
    fan, k = fluxb.fan, fluxb.k
    nedge, nm = fan.n_edges, fluxb.n_mono
    dim = fluxb.dim
    M = np.zeros((dim, dim))
    deg = 2 * k if coeff.cellwise_constant else 2 * k + 2
    rule = triangle_rule(max(deg, 0))
    for i in range(nedge):
        pts, wts = map_to_triangle(rule, fan.triangle(i))
        mono = fluxb.mono_eval(i, pts)
        if coeff.cellwise_constant:
            Kinv = coeff.inv_at(fan.star[None, :])[0]
            gram = mono.T @ (mono * wts[:, None])
            frames = np.stack([fan.normals[i], fan.tangents[i]])
            fprod = frames @ Kinv @ frames.T
            for fa in range(2):
                ia = fluxb.index(fa, i, 0)
                for fb in range(2):
                    ib = fluxb.index(fb, i, 0)
                    M[ia:ia + nm, ib:ib + nm] += fprod[fa, fb] * gram
        else:
            Kinv = coeff.inv_at(pts)
            frames = np.stack([fan.normals[i], fan.tangents[i]])
            # cprod[q, fa, fb] = f_a . K^{-1}(x_q) f_b
            cprod = np.einsum("ai,qij,bj->qab", frames, Kinv, frames)
            for fa in range(2):
                ia = fluxb.index(fa, i, 0)
                for fb in range(2):
                    ib = fluxb.index(fb, i, 0)
                    w = wts * cprod[:, fa, fb]
                    M[ia:ia + nm, ib:ib + nm] += mono.T @ (mono * w[:, None])
    return M


def local_db_d0(fluxb: FluxBasis, cellb: CellBasis, face_bases) -> tuple:
    """Difference matrices.

    D_b columns are flux moments of the face basis functions; D_0 columns
    realize (grad phi_0, tau)_K - <phi_0, tau . n>_dK. Tangent-frame rows
    of D_b vanish because tau . n does.
    """
    fan, k = fluxb.fan, fluxb.k
    nedge, nm = fan.n_edges, fluxb.n_mono
    nfd = k + 1
    Db = np.zeros((fluxb.dim, nedge * nfd))
    D0 = np.zeros((fluxb.dim, cellb.dim))
    vol_rule = triangle_rule(max(2 * k, 0))
    erule = edge_rule(k + 1)
    for i in range(nedge):
        a, b = fan.loop[i], fan.loop[(i + 1) % nedge]
        epts, ewts = map_to_edge(erule, a, b)
        mono_e = fluxb.mono_eval(i, epts)
        psi = face_bases[i].eval(epts)
        # normal-frame rows: tau . n = mono (n_i . n_i) = mono
        ia = fluxb.index(0, i, 0)
        Db[ia:ia + nm, i * nfd:(i + 1) * nfd] = mono_e.T @ (psi * ewts[:, None])
        phi_e = cellb.eval(epts)
        D0[ia:ia + nm, :] -= mono_e.T @ (phi_e * ewts[:, None])

        pts, wts = map_to_triangle(vol_rule, fan.triangle(i))
        mono = fluxb.mono_eval(i, pts)
        gphi = cellb.grad(pts)
        for frame in range(2):
            vec = fluxb.frame_vector(frame, i)
            gdotf = gphi @ vec
            idx = fluxb.index(frame, i, 0)
            D0[idx:idx + nm, :] += mono.T @ (gdotf * wts[:, None])
    return Db, D0


def local_stiffness(fluxb, cellb, face_bases, coeff) -> ElementOperator:
    M = local_mass(fluxb, coeff)
    Db, D0 = local_db_d0(fluxb, cellb, face_bases)
    try:
        factor = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise DegenerateElementError(
            f"cell {fluxb.fan.cell}: singular flux mass matrix") from exc
    G = np.hstack([Db, D0])
    A = G.T @ cho_solve(factor, G)
    A = 0.5 * (A + A.T)
    return ElementOperator(cell=fluxb.fan.cell, k=fluxb.k, fan=fluxb.fan,
                           fluxb=fluxb, cellb=cellb, face_bases=list(face_bases),
                           M=M, Db=Db, D0=D0, A=A, M_factor=factor)


def element_operator(mesh: PolyMesh, subtri: SubTriangulation, c: int, k: int,
                     coeff: CoefficientField) -> ElementOperator:
    fan = subtri.fans[c]
    fluxb = flux_basis(fan, k)
    cellb = cell_basis(fan, k)
    fbs = [face_basis(mesh.vertices, mesh.edges[e], k) for e in fan.edge_ids]
    return local_stiffness(fluxb, cellb, fbs, coeff)


def weak_gradient_coeffs(op: ElementOperator, u_local) -> np.ndarray:
    """Flux-basis coefficients of the weak gradient of [u_b | u_0]."""
    u_local = np.asarray(u_local, dtype=float)
    return cho_solve(op.M_factor, op.g_matrix() @ u_local)


def cell_mass(cellb: CellBasis, fan: CellFan) -> np.ndarray:
    """Gram matrix of the cell basis integrated over the fan."""
    rule = triangle_rule(min(2 * cellb.degree, 10))
    G = np.zeros((cellb.dim, cellb.dim))
    for i in range(fan.n_edges):
        pts, wts = map_to_triangle(rule, fan.triangle(i))
        phi = cellb.eval(pts)
        G += phi.T @ (phi * wts[:, None])
    return G


def weak_divergence(op: ElementOperator, s) -> tuple:
    """Weak divergence of the flux field with coefficients s.

    Returns (cell part coefficients in the cell basis, list of per-face
    coefficient vectors of -h_F^{-1} (sigma . n) in each face basis).
    The cell part is defined by

        (div_w sigma, w)_K = sum_T (div sigma, w)_T - sum_spokes <[sigma . n], w>

    for w in the cell polynomial space; spoke jumps are oriented from
    triangle T_i into T_{i-1}.
    """
    s = np.asarray(s, dtype=float)
    fan, fluxb, cellb = op.fan, op.fluxb, op.cellb
    k, nm, nedge = op.k, fluxb.n_mono, fan.n_edges
    rhs = np.zeros(cellb.dim)
    vol_rule = triangle_rule(min(2 * (k + 1), 10))
    for i in range(nedge):
        pts, wts = map_to_triangle(vol_rule, fan.triangle(i))
        phi = cellb.eval(pts)
        mgrad = fluxb.mono_grad(i, pts)
        div = np.zeros(len(pts))
        for frame in range(2):
            vec = fluxb.frame_vector(frame, i)
            idx = fluxb.index(frame, i, 0)
            div += (mgrad @ vec) @ s[idx:idx + nm]
        rhs += phi.T @ (div * wts)

    erule = edge_rule(k + 2)
    for i in range(nedge):
        # spoke i runs from the star point to loop vertex i, shared by
        # triangles T_{i-1} and T_i; its normal points from T_i into T_{i-1}
        prev = (i - 1) % nedge
        a, b = fan.star, fan.loop[i]
        d = b - a
        ne = np.array([d[1], -d[0]]) / np.linalg.norm(d)
        epts, ewts = map_to_edge(erule, a, b)
        phi = cellb.eval(epts)
        sig_i = _flux_values(fluxb, s, i, epts)
        sig_prev = _flux_values(fluxb, s, prev, epts)
        jump = (sig_i - sig_prev) @ ne
        rhs -= phi.T @ (jump * ewts)

    cell_part = np.linalg.solve(cell_mass(cellb, fan), rhs)

    face_parts = []
    ferule = edge_rule(k + 1)
    for i in range(nedge):
        a, b = fan.loop[i], fan.loop[(i + 1) % nedge]
        epts, ewts = map_to_edge(ferule, a, b)
        sig_n = _flux_values(fluxb, s, i, epts) @ fan.normals[i]
        psi = op.face_bases[i].eval(epts)
        gram = psi.T @ (psi * ewts[:, None])
        mom = psi.T @ (-sig_n / fan.lengths[i] * ewts)
        face_parts.append(np.linalg.solve(gram, mom))
    return cell_part, face_parts


def _flux_values(fluxb: FluxBasis, s, tri: int, points):
    """sigma(x) on fan triangle `tri` at given points, shape (npts, 2)."""
    mono = fluxb.mono_eval(tri, points)
    nm = fluxb.n_mono
    out = np.zeros((len(mono), 2))
    for frame in range(2):
        idx = fluxb.index(frame, tri, 0)
        out += np.outer(mono @ s[idx:idx + nm], fluxb.frame_vector(frame, tri))
    return out


def face_projection_Qb(fbasis: FaceBasis, trace, npoints: int = 6) -> np.ndarray:
    """L2 projection of a trace function onto the face polynomial space.

    `trace` is a callable on (n, 2) point arrays. For degree 0 this is the
    face average.
    """
    rule = edge_rule(npoints)
    a = fbasis.midpoint - 0.5 * fbasis.length * fbasis.direction
    b = fbasis.midpoint + 0.5 * fbasis.length * fbasis.direction
    pts, wts = map_to_edge(rule, a, b)
    psi = fbasis.eval(pts)
    vals = np.asarray(trace(pts), dtype=float).reshape(len(pts))
    gram = psi.T @ (psi * wts[:, None])
    return np.linalg.solve(gram, psi.T @ (vals * wts))


def dump_element_operators(mesh, subtri, k, coeff, path) -> None:
    """Plain-text dump of per-cell M, D_b, D_0, A_K for cross-checking."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in range(mesh.num_cells):
            op = element_operator(mesh, subtri, c, k, coeff)
            fh.write(f"cell {c}\n")
            for name, mat in (("M", op.M), ("Db", op.Db), ("D0", op.D0),
                              ("A", op.A)):
                fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
                for row in mat:
                    fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
            fh.write("\n")
