"""Spatial discretization: uniform cell-center grids on a box, plus a
truncated exterior annulus used for zero-extension (Dirichlet) quadrature.

All quadrature is midpoint (cell-center): nodes never sit on the kernel
diagonal and the self-cell is excluded during assembly, so no singular
quadrature rule is needed anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Grid:
    """Uniform cell-center discretization of a box in 1 or 2 dimensions.

    ``nodes`` has shape (N, dim) and ``weights`` (N,), with
    ``sum(weights) == |box|``.  ``ext_nodes``/``ext_weights`` cover the
    exterior annulus of width ``ext_radius`` around the box and are empty
    when ``ext_radius == 0``.
    """

    dim: int
    box: tuple[tuple[float, float], ...]
    n_per_axis: int
    nodes: np.ndarray
    weights: np.ndarray
    ext_radius: float
    ext_nodes: np.ndarray
    ext_weights: np.ndarray
    h: tuple[float, ...] = field(default=())
    ext_refine: int = 16

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.box]))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((b - a) ** 2 for a, b in self.box)))

    def mean(self, u: np.ndarray) -> float:
        """Mass of a field: weighted mean over the box."""
        return float(np.dot(u, self.weights) / self.volume)

    def norm_l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.dot(u * u, self.weights)))

    def dist_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """Distance from interior points to the box boundary."""
        x = np.atleast_2d(x)
        per_axis = [np.minimum(x[:, k] - a, b - x[:, k]) for k, (a, b) in enumerate(self.box)]
        return np.min(per_axis, axis=0)

    def dist_to_box(self, y: np.ndarray) -> np.ndarray:
        """Euclidean distance from arbitrary points to the closed box."""
        return _dist_to_box(self.box, y)


def _dist_to_box(box, y):
    y = np.atleast_2d(y)
    d2 = np.zeros(y.shape[0])
    for k, (a, b) in enumerate(box):
        excess = np.maximum(a - y[:, k], 0.0) + np.maximum(y[:, k] - b, 0.0)
        d2 += excess**2
    return np.sqrt(d2)


def _normalize_box(dim, box):
    box = np.asarray(box, dtype=float)
    if dim == 1 and box.shape == (2,):
        box = box[None, :]
    if box.shape != (dim, 2):
        raise ConfigurationError(f"box must give {dim} interval(s), got shape {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ConfigurationError("degenerate box: each interval needs a < b")
    return tuple((float(a), float(b)) for a, b in box)


def _axis_centers(a, b, n):
    h = (b - a) / n
    return a + h * (np.arange(n) + 0.5), h


def _exterior_1d(box, ext_radius, m):
    (a, b) = box[0]
    he = ext_radius / m
    left = a - ext_radius + he * (np.arange(m) + 0.5)
    right = b + he * (np.arange(m) + 0.5)
    nodes = np.concatenate([left, right])[:, None]
    weights = np.full(2 * m, he)
    return nodes, weights


def _exterior_2d(box, ext_radius, m):
    he = ext_radius / m
    axes = []
    for a, b in box:
        n_cells = int(np.ceil((b - a + 2 * ext_radius) / he))
        w = (b - a + 2 * ext_radius) / n_cells
        axes.append((a - ext_radius + w * (np.arange(n_cells) + 0.5), w))
    xx, yy = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    cell_area = axes[0][1] * axes[1][1]
    # keep cells whose centers are strictly outside the closed box and
    # within the annulus; straddling cells with interior centers drop out
    dist = _dist_to_box(box, pts)
    keep = (dist > 0.0) & (dist <= ext_radius)
    return pts[keep], np.full(int(keep.sum()), cell_area)


def build_grid(dim, box, n_per_axis, ext_radius=0.0, ext_refine=16) -> Grid:
    """Build the discretization of the box and its exterior annulus.

    ``ext_refine`` is the number of quadrature cells across the annulus
    width (per side in 1D, per axis in 2D).
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if n_per_axis < 2:
        raise ConfigurationError(f"n_per_axis must be >= 2, got {n_per_axis}")
    if ext_radius < 0:
        raise ConfigurationError("ext_radius must be nonnegative")
    box = _normalize_box(dim, box)

    centers, hs = zip(*(_axis_centers(a, b, n_per_axis) for a, b in box))
    if dim == 1:
        nodes = centers[0][:, None]
    else:
        xx, yy = np.meshgrid(centers[0], centers[1], indexing="ij")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
    weights = np.full(nodes.shape[0], float(np.prod(hs)))

    if ext_radius > 0:
        m = max(1, int(ext_refine))
        if dim == 1:
            ext_nodes, ext_weights = _exterior_1d(box, ext_radius, m)
        else:
            ext_nodes, ext_weights = _exterior_2d(box, ext_radius, m)
    else:
        ext_nodes = np.empty((0, dim))
        ext_weights = np.empty(0)

    return Grid(
        dim=dim,
        box=box,
        n_per_axis=int(n_per_axis),
        nodes=nodes,
        weights=weights,
        ext_radius=float(ext_radius),
        ext_nodes=ext_nodes,
        ext_weights=ext_weights,
        h=tuple(float(h) for h in hs),
        ext_refine=max(1, int(ext_refine)),
    )


def refine(grid: Grid, factor: int = 2) -> Grid:
    """Same box, ``factor`` times more cells per axis (exterior refined too)."""
    return build_grid(
        grid.dim, grid.box, grid.n_per_axis * factor, grid.ext_radius, grid.ext_refine * factor
    )


def pairwise_distance(grid: Grid, i: int, j: int) -> float:
    """Euclidean distance between nodes i and j."""
    return float(np.linalg.norm(grid.nodes[i] - grid.nodes[j]))


def distance_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All-pairs Euclidean distances between two (N, d) point sets."""
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))
