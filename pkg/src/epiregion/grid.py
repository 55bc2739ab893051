"""Uniform tensor grids, the Robin diffusion operator, nonlocal kernels and
control-region geometry.

Nodes are numbered in C order over the axes (``indexing="ij"``), so in 2D
node ``(i, j)`` has flat index ``i * ny + j``. Every discrete integral uses
the tensor trapezoid weights ``Domain.weights``; the diffusion operator is
symmetric with respect to that weighted inner product, which is what lets
the adjoint solver reuse it unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import (
    ComplementDisconnectedWarning,
    EmptyRegion,
    ModelValidationError,
    RegionTouchesBoundary,
)

KERNEL_FAMILIES = ("gaussian", "uniform", "separable-product", "delta")
REGION_SHAPES = ("interval", "ball", "box")


@dataclass(frozen=True, eq=False)
class Domain:
    dimension: int
    extents: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    spacing: tuple[float, ...]
    axes: tuple[np.ndarray, ...] = field(repr=False)
    coords: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    interior: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


def build_domain(dimension: int, extents, nodes_per_axis) -> Domain:
    """Uniform grid on ``(0, L_1) x ... x (0, L_d)`` including boundary nodes."""
    if dimension not in (1, 2):
        raise ModelValidationError(f"dimension must be 1 or 2, got {dimension}")
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    nodes = tuple(int(m) for m in np.atleast_1d(nodes_per_axis))
    if len(nodes) == 1 and dimension == 2:
        nodes = nodes * 2
    if len(extents) != dimension or len(nodes) != dimension:
        raise ModelValidationError("extents and nodes_per_axis must have one entry per axis")
    if any(not np.isfinite(e) or e <= 0 for e in extents):
        raise ModelValidationError(f"degenerate extents {extents}")
    if any(m < 8 for m in nodes):
        raise ModelValidationError(f"need at least 8 nodes per axis, got {nodes}")

    axes = tuple(np.linspace(0.0, e, m) for e, m in zip(extents, nodes))
    spacing = tuple(e / (m - 1) for e, m in zip(extents, nodes))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in mesh], axis=1)

    w1d = []
    for h, m in zip(spacing, nodes):
        w = np.full(m, h)
        w[0] = w[-1] = h / 2
        w1d.append(w)
    weights = w1d[0]
    for w in w1d[1:]:
        weights = np.outer(weights, w).ravel()

    on_edge = np.zeros(nodes, dtype=bool)
    for k in range(dimension):
        idx = [slice(None)] * dimension
        idx[k] = 0
        on_edge[tuple(idx)] = True
        idx[k] = -1
        on_edge[tuple(idx)] = True
    on_edge = on_edge.ravel()

    return Domain(
        dimension=dimension,
        extents=extents,
        nodes_per_axis=nodes,
        spacing=spacing,
        axes=axes,
        coords=coords,
        weights=weights,
        boundary=np.flatnonzero(on_edge),
        interior=np.flatnonzero(~on_edge),
    )


# ---------------------------------------------------------------------------
# diffusion


@dataclass(frozen=True, eq=False)
class RobinOperator:
    """Sparse ``L ~ -d1 * Laplacian`` with ``du/dnu + alpha u = 0`` on the boundary.

    ``unit`` is the same stencil for unit diffusivity, used when several
    components diffuse at different rates.
    """

    matrix: sp.csr_matrix = field(repr=False)
    unit: sp.csr_matrix = field(repr=False)
    d1: float
    alpha: float

    def __matmul__(self, v):
        return self.matrix @ v

    def scaled(self, d: float) -> sp.csr_matrix:
        return (d * self.unit).tocsr()


def _robin_1d(m: int, h: float, alpha: float) -> sp.csr_matrix:
    main = np.full(m, 2.0)
    lower = np.full(m - 1, -1.0)
    upper = np.full(m - 1, -1.0)
    # ghost node eliminated through (u_ghost - u_inner) / 2h = -alpha u_b
    main[0] = main[-1] = 2.0 + 2.0 * h * alpha
    upper[0] = -2.0
    lower[-1] = -2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def assemble_robin_laplacian(domain: Domain, d1: float, alpha: float) -> RobinOperator:
    if not d1 > 0:
        raise ModelValidationError(f"d1 must be positive, got {d1}")
    if not alpha >= 0:
        raise ModelValidationError(f"alpha must be nonnegative, got {alpha}")
    blocks = [_robin_1d(m, h, alpha) for m, h in zip(domain.nodes_per_axis, domain.spacing)]
    if domain.dimension == 1:
        unit = blocks[0]
    else:
        nx, ny = domain.nodes_per_axis
        unit = sp.kron(blocks[0], sp.identity(ny)) + sp.kron(sp.identity(nx), blocks[1])
    unit = sp.csr_matrix(unit)
    return RobinOperator(matrix=(d1 * unit).tocsr(), unit=unit, d1=float(d1), alpha=float(alpha))


# ---------------------------------------------------------------------------
# nonlocal kernel


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Quadrature-weighted kernel matrix ``K[i, j] = k(x_i, x_j) * w_j``.

    ``K @ u`` approximates ``int k(x, x') u(x') dx'`` at the nodes and
    ``apply_transpose(p)`` approximates ``int k(x', x) p(x') dx'``.
    """

    family: str
    sigma: tuple[float, ...] | None
    amplitude: float
    matrix: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __matmul__(self, v):
        return self.matrix @ v

    def apply_transpose(self, p: np.ndarray) -> np.ndarray:
        w = self.weights
        if p.ndim == 1:
            return (self.matrix.T @ (w * p)) / w
        return (self.matrix.T @ (w[:, None] * p)) / w[:, None]

    @property
    def norm_inf(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())

    def column_integrals(self) -> np.ndarray:
        """``sum_i k(x_i, x_j) w_i`` for every source node ``j``."""
        return (self.weights @ self.matrix) / self.weights


def build_kernel(domain: Domain, family: str, sigma=None, amplitude: float = 1.0) -> KernelOperator:
    """Kernel families: ``gaussian`` and ``separable-product`` (per-axis widths)
    are normalized per source column so that each column integrates to
    ``amplitude`` over the grid; ``uniform`` is ``amplitude / |Omega|``;
    ``delta`` is the local limit ``amplitude * I``.
    """
    if family not in KERNEL_FAMILIES:
        raise ModelValidationError(f"unknown kernel family {family!r}")
    if not amplitude >= 0:
        raise ModelValidationError(f"kernel nonnegativity violated: kernel amplitude must be >= 0, got {amplitude}")
    n = domain.n
    w = domain.weights

    if family == "delta":
        return KernelOperator(family, None, float(amplitude), amplitude * np.eye(n), w)
    if family == "uniform":
        k = np.full((n, n), amplitude / domain.measure)
        return KernelOperator(family, None, float(amplitude), k * w[None, :], w)

    if sigma is None:
        raise ModelValidationError(f"{family} kernel needs sigma")
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    if family == "gaussian":
        if sig.size != 1:
            raise ModelValidationError("gaussian kernel takes a single sigma")
        sig = np.repeat(sig, domain.dimension)
    elif sig.size == 1:
        sig = np.repeat(sig, domain.dimension)
    if sig.size != domain.dimension:
        raise ModelValidationError("separable-product kernel needs one sigma per axis")
    if np.any(sig <= 0):
        raise ModelValidationError(f"sigma must be positive, got {sig.tolist()}")

    x = domain.coords
    expo = np.zeros((n, n))
    for k in range(domain.dimension):
        diff = x[:, k][:, None] - x[:, k][None, :]
        expo += diff**2 / (2.0 * sig[k] ** 2)
    raw = np.exp(-expo)
    z = w @ raw  # discrete normalizer per source column
    k = amplitude * raw / z[None, :]
    return KernelOperator(family, tuple(sig.tolist()), float(amplitude), k * w[None, :], w)


# ---------------------------------------------------------------------------
# control region


@dataclass(frozen=True, eq=False)
class ControlRegion:
    """Subregion ``omega`` on a fixed grid.

    Facets sit between an inside node ``facet_inside[m]`` and an outside
    node ``facet_outside[m]``; ``facet_normals`` point into ``omega``.
    """

    domain: Domain = field(repr=False)
    shape: str
    center: np.ndarray
    size: np.ndarray
    indicator: np.ndarray = field(repr=False)
    facet_midpoints: np.ndarray = field(repr=False)
    facet_normals: np.ndarray = field(repr=False)
    facet_weights: np.ndarray = field(repr=False)
    facet_inside: np.ndarray = field(repr=False)
    facet_outside: np.ndarray = field(repr=False)

    @property
    def chi(self) -> np.ndarray:
        return self.indicator.astype(float)

    @property
    def measure(self) -> float:
        return float(self.domain.weights @ self.chi)

    def boundary_measure(self) -> float:
        if self.shape == "interval" or self.domain.dimension == 1:
            return 2.0
        if self.shape == "ball":
            return 2.0 * np.pi * float(self.size[0])
        return 4.0 * float(self.size.sum())

    def describe(self) -> dict:
        return {"shape": self.shape, "center": self.center.tolist(), "size": self.size.tolist()}


def _normalize_size(shape: str, dim: int, size) -> np.ndarray:
    size = np.atleast_1d(np.asarray(size, dtype=float))
    if shape == "ball" or shape == "interval":
        if size.size != 1:
            raise ModelValidationError(f"{shape} takes a single size (radius / half-width)")
    elif size.size == 1:
        size = np.repeat(size, dim)
    if shape == "interval" and dim != 1:
        raise ModelValidationError("interval regions are one-dimensional; use box or ball")
    if shape == "box" and size.size != dim:
        raise ModelValidationError("box needs one half-width per axis")
    if np.any(size <= 0):
        raise ModelValidationError(f"region size must be positive, got {size.tolist()}")
    return size


def _half_extents(shape: str, dim: int, size: np.ndarray) -> np.ndarray:
    return np.repeat(size, dim) if size.size == 1 else size


def _inside(shape: str, x: np.ndarray, c: np.ndarray, size: np.ndarray) -> np.ndarray:
    if shape == "ball":
        return np.linalg.norm(x - c, axis=1) <= size[0]
    half = _half_extents(shape, x.shape[1], size)
    return np.all(np.abs(x - c) <= half, axis=1)


def make_region(domain: Domain, shape: str, center, size) -> ControlRegion:
    if shape not in REGION_SHAPES:
        raise ModelValidationError(f"unknown region shape {shape!r}")
    dim = domain.dimension
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.size != dim:
        raise ModelValidationError(f"center must have {dim} coordinates")
    size = _normalize_size(shape, dim, size)
    half = _half_extents(shape, dim, size)

    h = np.asarray(domain.spacing)
    ext = np.asarray(domain.extents)
    # small slack so that centers reached by whole-cell translations are not
    # rejected by roundoff
    tol = 1e-9 * h
    lo_gap = c - half
    hi_gap = ext - (c + half)
    if np.any(lo_gap < 2 * h - tol) or np.any(hi_gap < 2 * h - tol):
        raise RegionTouchesBoundary(
            f"{shape} at {c.tolist()} size {size.tolist()} needs clearance >= 2h = {(2 * h).tolist()} "
            f"from the habitat boundary"
        )

    inside = _inside(shape, domain.coords, c, size)
    if not inside.any():
        raise EmptyRegion(f"no grid node lies inside {shape} at {c.tolist()}")

    mids, normals, wts, ins, outs = _facets(domain, shape, c, size, inside)
    return ControlRegion(
        domain=domain,
        shape=shape,
        center=c,
        size=size,
        indicator=inside,
        facet_midpoints=mids,
        facet_normals=normals,
        facet_weights=wts,
        facet_inside=ins,
        facet_outside=outs,
    )


def _facets(domain, shape, c, size, inside):
    dim = domain.dimension
    grid_in = inside.reshape(domain.shape)
    flat = np.arange(domain.n).reshape(domain.shape)
    h = np.asarray(domain.spacing)
    half = _half_extents(shape, dim, size)
    mids, normals, wts, ins, outs = [], [], [], [], []

    for k in range(dim):
        a = np.take(flat, np.arange(domain.shape[k] - 1), axis=k).ravel()
        b = np.take(flat, np.arange(1, domain.shape[k]), axis=k).ravel()
        ia = np.take(grid_in, np.arange(domain.shape[k] - 1), axis=k).ravel()
        ib = np.take(grid_in, np.arange(1, domain.shape[k]), axis=k).ravel()
        cross = ia != ib
        a, b, ia = a[cross], b[cross], ia[cross]
        node_in = np.where(ia, a, b)
        node_out = np.where(ia, b, a)
        xi = domain.coords[node_in]
        xo = domain.coords[node_out]
        mid = 0.5 * (xi + xo)

        if shape == "ball":
            # crossing point of the edge with the circle, for the analytic normal
            d = xo - xi
            f = xi - c
            aa = np.sum(d * d, axis=1)
            bb = 2 * np.sum(f * d, axis=1)
            cc = np.sum(f * f, axis=1) - size[0] ** 2
            s = (-bb + np.sqrt(np.maximum(bb**2 - 4 * aa * cc, 0.0))) / (2 * aa)
            xs = xi + s[:, None] * d
            nu = -(xs - c) / np.linalg.norm(xs - c, axis=1)[:, None]
            w = np.abs(nu[:, k])
            for j in range(dim):
                if j != k:
                    w = w * h[j]
        else:
            nu = np.zeros_like(mid)
            nu[:, k] = np.sign(xi[:, k] - xo[:, k])
            w = np.ones(len(mid))
            for j in range(dim):
                if j == k:
                    continue
                # exact length of the face inside this node's cell strip; the
                # first and last inside rows absorb the face ends
                face_lo, face_hi = c[j] - half[j], c[j] + half[j]
                lo = xi[:, j] - h[j] / 2
                hi = xi[:, j] + h[j] / 2
                lo = np.where(xi[:, j] - h[j] < face_lo, face_lo, np.maximum(lo, face_lo))
                hi = np.where(xi[:, j] + h[j] > face_hi, face_hi, np.minimum(hi, face_hi))
                w = w * np.maximum(hi - lo, 0.0)
        mids.append(mid)
        normals.append(nu)
        wts.append(w)
        ins.append(node_in)
        outs.append(node_out)

    return (
        np.concatenate(mids),
        np.concatenate(normals),
        np.concatenate(wts),
        np.concatenate(ins),
        np.concatenate(outs),
    )


def translate_region(region: ControlRegion, vector) -> ControlRegion:
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    return make_region(region.domain, region.shape, region.center + v, region.size)


def complement_is_connected(domain: Domain, indicator: np.ndarray) -> bool:
    free = ~indicator.reshape(domain.shape)
    _, count = ndimage.label(free)
    return count <= 1


# ---------------------------------------------------------------------------
# Dirichlet restriction to Omega minus closure(omega)


@dataclass(frozen=True, eq=False)
class ComplementOperator:
    """Operators on ``Omega \\ closure(omega)`` with ``phi = 0`` on the region nodes.

    ``diffusion`` and ``kernel`` are full size: Dirichlet nodes carry identity
    rows in ``diffusion`` and zero rows/columns in ``kernel``. The ``*_free``
    blocks are the same operators restricted to the unknowns.
    """

    free: np.ndarray
    diffusion: sp.csr_matrix = field(repr=False)
    kernel: np.ndarray = field(repr=False)

    @property
    def diffusion_free(self) -> sp.csr_matrix:
        idx = np.flatnonzero(self.free)
        return self.diffusion[idx][:, idx].tocsr()

    @property
    def kernel_free(self) -> np.ndarray:
        idx = np.flatnonzero(self.free)
        return self.kernel[np.ix_(idx, idx)]

    def embed(self, values_free: np.ndarray) -> np.ndarray:
        out = np.zeros(self.free.shape + values_free.shape[1:])
        out[self.free] = values_free
        return out


def restrict_to_complement(operator, kernel, region, warn: bool = True) -> ComplementOperator:
    """``operator`` is a RobinOperator or sparse matrix, ``kernel`` a KernelOperator,
    dense matrix or None, ``region`` a ControlRegion or boolean node mask."""
    mask = region.indicator if isinstance(region, ControlRegion) else np.asarray(region, dtype=bool)
    L = operator.matrix if isinstance(operator, RobinOperator) else sp.csr_matrix(operator)
    n = L.shape[0]
    if kernel is None:
        K = np.zeros((n, n))
    else:
        K = np.array(kernel.matrix if isinstance(kernel, KernelOperator) else kernel, dtype=float)
    free = ~mask
    if warn and isinstance(region, ControlRegion) and not complement_is_connected(region.domain, mask):
        warnings.warn(
            "complement of the control region is not node-connected",
            ComplementDisconnectedWarning,
            stacklevel=2,
        )
    if not mask.any():
        return ComplementOperator(free=free, diffusion=L.tocsr(), kernel=K)

    keep = sp.diags(free.astype(float))
    Lr = (keep @ L @ keep + sp.diags(mask.astype(float))).tocsr()
    Lr.eliminate_zeros()
    Kr = K * free[:, None] * free[None, :]
    return ComplementOperator(free=free, diffusion=Lr, kernel=Kr)
