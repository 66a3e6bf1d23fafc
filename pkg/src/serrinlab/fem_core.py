"""P1 finite elements for the four boundary value problems of the laboratory.

All solves share one assembly path (exact P1 stiffness, centroid rule for the
constant load, elementwise-constant conductivity) and one deterministic
Jacobi-preconditioned conjugate-gradient kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError, ValidationError
from .meshgen import Mesh


@dataclass(frozen=True)
class SolverConfig:
    """CG controls; max iterations default to 20*sqrt(unknowns) + 1000."""

    cg_rel_tolerance: float = 1e-10
    cg_max_iterations: Optional[int] = None
    diagonal_preconditioning: bool = True

    def __post_init__(self):
        if not (0.0 < self.cg_rel_tolerance <= 1e-4):
            raise ValidationError("solver.cg_rel_tolerance: must lie in (0, 1e-4]")
        if self.cg_max_iterations is not None and self.cg_max_iterations < 100:
            raise ValidationError("solver.cg_max_iterations: must be >= 100")

    def max_iters(self, n):
        if self.cg_max_iterations is not None:
            return self.cg_max_iterations
        return int(20 * math.sqrt(n)) + 1000


@dataclass
class Field:
    """Nodal scalar field tied to a mesh.

    load is the fully-assembled load vector of the variational problem the
    field solves (zero for harmonic extensions); it is what variational flux
    recovery subtracts from the stiffness action.
    """

    mesh_key: str
    values: np.ndarray
    label: str
    sigma_c: float = 1.0
    load: Optional[np.ndarray] = None


@dataclass
class BoundaryTrace:
    """Per-boundary-node values in CCW loop order with arc-length weights."""

    mesh_key: str
    node_ids: np.ndarray
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    vertex_normals: np.ndarray


def _element_geometry(mesh):
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # gradients of barycentric coordinates: grad l_i = perp(opposite edge)/(2A)
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = bx[:, 0] * (x[:, 0] - x[:, 2]) + by[:, 0] * (y[:, 0] - y[:, 2])
    area = 0.5 * area2
    grads = np.stack([bx, by], axis=-1) / area2[:, None, None]
    return area, grads


def element_sigma(mesh, sigma_c):
    return np.where(mesh.region == 1, float(sigma_c), 1.0)


def stiffness(mesh: Mesh, sigma=1.0) -> sp.csr_matrix:
    """Assemble the P1 stiffness matrix; sigma is a scalar or per-element array."""
    area, grads = _element_geometry(mesh)
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), area.shape)
    local = np.einsum("tie,tje->tij", grads, grads) * (sig * area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.vertices)
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    area = mesh.triangle_areas()
    local = (np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0)
    vals = local[None, :, :] * area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.vertices)
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def load_constant(mesh: Mesh) -> np.ndarray:
    """Load vector of the unit source: int phi_i = area/3 per adjacent element."""
    area = mesh.triangle_areas()
    b = np.zeros(len(mesh.vertices))
    np.add.at(b, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return b


def _pcg(A, b, tol, max_iter, precondition):
    """Deterministic preconditioned CG; stops on the unpreconditioned residual."""
    n = len(b)
    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        return np.zeros(n), 0, 0.0
    x = np.zeros(n)
    r = b.copy()
    if precondition:
        dinv = 1.0 / A.diagonal()
        z = dinv * r
    else:
        dinv = None
        z = r.copy()
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        resid = float(np.linalg.norm(r))
        if resid <= tol * normb:
            return x, it, resid / normb
        z = dinv * r if precondition else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG stalled after {max_iter} iterations (relative residual {resid/normb:.3e})")


def _solve_dirichlet(mesh, K, load, boundary_values, cfg):
    """Eliminate Dirichlet rows and solve the reduced SPD system by CG."""
    n = len(mesh.vertices)
    bnd = mesh.boundary_loop
    interior = np.setdiff1d(np.arange(n), bnd)
    x = np.zeros(n)
    x[bnd] = boundary_values
    rhs = load[interior] - K[interior][:, bnd] @ x[bnd]
    Kii = K[interior][:, interior].tocsr()
    xi, _, _ = _pcg(Kii, rhs, cfg.cg_rel_tolerance, cfg.max_iters(len(interior)),
                    cfg.diagonal_preconditioning)
    x[interior] = xi
    return x


def solve_two_phase(mesh: Mesh, sigma_c: float, cfg: Optional[SolverConfig] = None) -> Field:
    """Galerkin solution of -div(sigma grad u) = 1, u = 0 on the outer boundary."""
    if sigma_c <= 0:
        raise ValidationError("sigma_c: must be positive")
    cfg = cfg or SolverConfig()
    K = stiffness(mesh, element_sigma(mesh, sigma_c))
    b = load_constant(mesh)
    x = _solve_dirichlet(mesh, K, b, 0.0, cfg)
    return Field(mesh.key, x, "u", sigma_c=sigma_c, load=b)


def solve_one_phase(mesh: Mesh, cfg: Optional[SolverConfig] = None) -> Field:
    """Torsion function: -Laplace(v) = 1 with zero Dirichlet data."""
    f = solve_two_phase(mesh, 1.0, cfg)
    return Field(f.mesh_key, f.values, "v", sigma_c=1.0, load=f.load)


def solve_harmonic_dirichlet(mesh: Mesh, g: Union[Callable, np.ndarray],
                             cfg: Optional[SolverConfig] = None) -> Field:
    """Discrete harmonic field with nodal boundary trace g."""
    cfg = cfg or SolverConfig()
    pts = mesh.vertices[mesh.boundary_loop]
    gb = np.asarray(g(pts) if callable(g) else g, dtype=float)
    if gb.shape != (len(mesh.boundary_loop),) or not np.all(np.isfinite(gb)):
        raise ValidationError("harmonic data: need finite values at all boundary vertices")
    K = stiffness(mesh, 1.0)
    x = _solve_dirichlet(mesh, K, np.zeros(len(mesh.vertices)), gb, cfg)
    return Field(mesh.key, x, "h", sigma_c=1.0, load=np.zeros(len(mesh.vertices)))


def solve_linearized(mesh: Mesh, sigma_c: float, u_base: Field,
                     cfg: Optional[SolverConfig] = None) -> Field:
    """Derivative of the solution map with respect to the contrast t = sigma_c - 1.

    Differentiating the weak form gives
        int sigma(t0) grad u' . grad phi = - int_D grad u_base . grad phi,
    so the load is minus the inclusion-masked stiffness applied to u_base.
    """
    if u_base.mesh_key != mesh.key:
        raise ValidationError("solve_linearized: u_base belongs to a different mesh")
    if u_base.sigma_c != sigma_c:
        raise ValidationError("solve_linearized: u_base was solved with another sigma_c")
    cfg = cfg or SolverConfig()
    K = stiffness(mesh, element_sigma(mesh, sigma_c))
    K_d = stiffness(mesh, np.where(mesh.region == 1, 1.0, 0.0))
    b = -(K_d @ u_base.values)
    x = _solve_dirichlet(mesh, K, b, 0.0, cfg)
    return Field(mesh.key, x, "u_prime", sigma_c=sigma_c, load=b)


def boundary_weights(mesh: Mesh) -> np.ndarray:
    """Arc-length weights int phi_i over the boundary loop (sum = perimeter)."""
    p = mesh.vertices[mesh.boundary_loop]
    ell = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
    return 0.5 * (ell + np.roll(ell, 1))


def vertex_normals(mesh: Mesh) -> np.ndarray:
    en = mesh.boundary_normals
    vn = en + np.roll(en, 1, axis=0)
    return vn / np.hypot(vn[:, 0], vn[:, 1])[:, None]


def normal_derivative(mesh: Mesh, f: Field, sigma_c: Optional[float] = None) -> BoundaryTrace:
    """Variational flux recovery on the outer boundary.

    Solves the boundary mass system  int_b (dn f) phi = int sigma grad f grad phi
    - (load, phi)  over boundary test functions; superconvergent on smooth data.
    """
    if f.mesh_key != mesh.key:
        raise ValidationError("normal_derivative: field belongs to a different mesh")
    if f.load is None:
        raise ValidationError("normal_derivative: field does not carry its load vector")
    sigma_c = f.sigma_c if sigma_c is None else sigma_c
    K = stiffness(mesh, element_sigma(mesh, sigma_c))
    r = (K @ f.values - f.load)[mesh.boundary_loop]
    p = mesh.vertices[mesh.boundary_loop]
    ell = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
    nb = len(ell)
    diag = (ell + np.roll(ell, 1)) / 3.0
    upper = ell / 6.0
    M = sp.diags([diag, upper, upper, upper[-1:], upper[-1:]],
                 [0, 1, -1, nb - 1, -(nb - 1)], shape=(nb, nb), format="csc")
    lam = splu(M).solve(r)
    return BoundaryTrace(mesh.key, mesh.boundary_loop.copy(), p, lam,
                         boundary_weights(mesh), vertex_normals(mesh))


def recovered_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Superconvergent patch recovery of the gradient at each vertex.

    Least-squares linear fit of the element-centroid gradients over the
    incident elements, evaluated at the vertex.  Exact for quadratic fields on
    any patch geometry (the P1 element gradient equals the true gradient at
    the centroid there), unlike plain area-weighted averaging whose
    consistency error does not vanish on irregular patches.
    """
    n = len(mesh.vertices)
    _, grads = _element_geometry(mesh)
    ge = np.einsum("tie,ti->te", grads, values[mesh.triangles])
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)

    tri_idx = mesh.triangles.ravel()
    d = np.repeat(centroids, 3, axis=0) - mesh.vertices[tri_idx]
    rows = np.column_stack([np.ones(len(d)), d])          # (3T, 3) design rows
    gvals = np.repeat(ge, 3, axis=0)                      # (3T, 2)

    AtA = np.zeros((n, 3, 3))
    Atb = np.zeros((n, 3, 2))
    np.add.at(AtA, tri_idx, rows[:, :, None] * rows[:, None, :])
    np.add.at(Atb, tri_idx, rows[:, :, None] * gvals[:, None, :])

    counts = np.zeros(n, dtype=np.int64)
    np.add.at(counts, tri_idx, 1)
    ok = counts >= 3
    out = np.zeros((n, 2))
    out[ok] = np.linalg.solve(AtA[ok], Atb[ok])[:, 0, :]

    if not np.all(ok):
        # starved vertices (2 incident elements on the boundary): widen to the
        # elements touching any neighbor vertex
        incident = [[] for _ in range(n)]
        for t, tri in enumerate(mesh.triangles):
            for v in tri:
                incident[v].append(t)
        for v in np.where(~ok)[0]:
            tris = set(incident[v])
            for t in list(tris):
                for w in mesh.triangles[t]:
                    tris.update(incident[w])
            tris = sorted(tris)
            dd = centroids[tris] - mesh.vertices[v]
            A = np.column_stack([np.ones(len(tris)), dd])
            coef, *_ = np.linalg.lstsq(A, ge[tris], rcond=None)
            out[v] = coef[0]
    return out


def _vertex_patches(mesh, rings=2):
    n = len(mesh.vertices)
    neigh = [set() for _ in range(n)]
    for a, b, c in mesh.triangles:
        neigh[a].update((b, c))
        neigh[b].update((a, c))
        neigh[c].update((a, b))
    patches = []
    for v in range(n):
        patch = {v} | neigh[v]
        for _ in range(rings - 1):
            extra = set()
            for w in patch:
                extra |= neigh[w]
            patch |= extra
        patches.append(np.fromiter(sorted(patch), dtype=np.int64))
    return patches


def hessian_recovery(mesh: Mesh, f: Field) -> np.ndarray:
    """Per-vertex symmetric Hessian by least-squares linear fits of the
    recovered gradient over two-ring vertex patches."""
    if f.mesh_key != mesh.key:
        raise ValidationError("hessian_recovery: field belongs to a different mesh")
    g = recovered_gradient(mesh, f.values)
    patches = _vertex_patches(mesh)
    H = np.zeros((len(mesh.vertices), 2, 2))
    for v, patch in enumerate(patches):
        if len(patch) < 3:
            raise ValidationError("hessian_recovery: degenerate vertex patch")
        d = mesh.vertices[patch] - mesh.vertices[v]
        A = np.column_stack([np.ones(len(patch)), d[:, 0], d[:, 1]])
        AtA = A.T @ A
        coef = np.linalg.solve(AtA, A.T @ g[patch])  # (3, 2): rows 1, x, y
        Hv = coef[1:, :].T  # [[dgx/dx, dgx/dy], [dgy/dx, dgy/dy]]
        H[v] = 0.5 * (Hv + Hv.T)
    return H


def evaluate(mesh: Mesh, f: Field, point) -> float:
    """Barycentric interpolation of a field at an interior point."""
    p = np.asarray(point, dtype=float)
    verts = mesh.vertices[mesh.triangles]
    v0 = verts[:, 0]
    d1 = verts[:, 1] - v0
    d2 = verts[:, 2] - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rp = p - v0
    l1 = (rp[:, 0] * d2[:, 1] - rp[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * rp[:, 1] - d1[:, 1] * rp[:, 0]) / det
    l0 = 1.0 - l1 - l2
    tol = -1e-12
    hits = np.where((l0 >= tol) & (l1 >= tol) & (l2 >= tol))[0]
    if len(hits) == 0:
        raise ValidationError("evaluate: point outside the mesh")
    t = int(hits[0])
    lam = np.array([l0[t], l1[t], l2[t]])
    return float(lam @ f.values[mesh.triangles[t]])


def l2_norm(mesh: Mesh, values: np.ndarray) -> float:
    M = mass_matrix(mesh)
    return math.sqrt(max(0.0, float(values @ (M @ values))))


def rayleigh_quotient(mesh: Mesh, f: Field) -> float:
    """(grad f, grad f) / (f, f) with unit conductivity."""
    K = stiffness(mesh, 1.0)
    M = mass_matrix(mesh)
    return float(f.values @ (K @ f.values)) / float(f.values @ (M @ f.values))


def residual_norm(mesh: Mesh, f: Field) -> float:
    """Relative residual of the reduced (Dirichlet-eliminated) system."""
    K = stiffness(mesh, element_sigma(mesh, f.sigma_c))
    n = len(mesh.vertices)
    interior = np.setdiff1d(np.arange(n), mesh.boundary_loop)
    r = (K @ f.values - f.load)[interior]
    rhs = f.load[interior] - (K[interior][:, mesh.boundary_loop]
                              @ f.values[mesh.boundary_loop])
    nb = float(np.linalg.norm(rhs))
    return float(np.linalg.norm(r)) / nb if nb > 0 else float(np.linalg.norm(r))


def dump_field(mesh: Mesh, f: Field, fh):
    """Mesh dump plus a VALUES section (17 significant digits)."""
    from .meshgen import dump_mesh

    dump_mesh(mesh, fh)
    fh.write("VALUES\n")
    for v in f.values:
        fh.write(f"{v:.17g}\n")
