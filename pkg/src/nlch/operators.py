"""The invertible linear operator (apply / solve / dual norm) and the
nonlinear interaction functional (energy, action, gradient).

Conventions.  A field is a vector of nodal values u in R^n with the weighted
inner product (u, v)_w = sum_i u_i v_i w_i.  A dual vector f pairs rawly,
<f, v> = f . v, so a field g enters the dual as D g with D = diag(w).  With
a symmetric bilinear form B(u, v) = v^T B_mat u this gives

    apply_L(u) = B_mat u,        solve_L(f) = B_mat^{-1} f,
    dual_norm(f) = sqrt(f . solve_L(f)),
    ||field v||_dual = dual_norm(D v),

and dual_norm(apply_L(u)) = sqrt(B(u, u)) = ||u||_B exactly.  Mass-splitting
kinds (Neumann/regional) are invertible on the zero-mean subspace only;
their solves deflate the constant mode and return zero-mean fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, NumericalError
from .grid import Grid
from .kernels import KernelMatrix

_KINDS = (
    "laplacian_dirichlet",
    "fractional_dirichlet",
    "identity_riesz",
    "laplacian_neumann",
    "regional_fractional",
    "sum",
)


# ---------------------------------------------------------------------------
# phi / Phi pairs


@dataclass(frozen=True)
class PhiSpec:
    """Odd nonlinearity phi with antiderivative Phi and two-sided q-growth.

    ``power`` is phi(r) = |r|^{q-2} r; ``half_power`` is the same halved,
    matching the regional conventions where the operator is the pointwise
    (not doubled variational) one.
    """

    form: str
    q: float = 2.0
    phi_fn: Optional[Callable] = None
    Phi_fn: Optional[Callable] = None
    Lambda: Optional[float] = None
    strongly_monotone: bool = True

    def __post_init__(self):
        if self.form not in ("power", "half_power", "custom"):
            raise ConfigurationError(f"unknown phi form {self.form!r}")
        if self.q < 2:
            raise ConfigurationError(f"q must be >= 2, got {self.q}")
        if self.form == "custom" and (self.phi_fn is None or self.Phi_fn is None):
            raise ConfigurationError("custom phi needs phi_fn and Phi_fn")
        if self.Lambda is None:
            lam = max(1.0, 2.0 ** (self.q - 2.0)) if self.form == "power" else 2.0 ** (self.q - 1.0)
            object.__setattr__(self, "Lambda", lam)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "power":
            return np.abs(r) ** (self.q - 2.0) * r
        if self.form == "half_power":
            return 0.5 * np.abs(r) ** (self.q - 2.0) * r
        return np.asarray(self.phi_fn(r), dtype=float)

    def Phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "power":
            return np.abs(r) ** self.q / self.q
        if self.form == "half_power":
            return np.abs(r) ** self.q / (2.0 * self.q)
        return np.asarray(self.Phi_fn(r), dtype=float)


def power_phi(q: float = 2.0) -> PhiSpec:
    return PhiSpec(form="power", q=q)


def half_power_phi(q: float = 2.0) -> PhiSpec:
    return PhiSpec(form="half_power", q=q)


# ---------------------------------------------------------------------------
# interaction functional


def graph_laplacian(pair_weights: np.ndarray) -> np.ndarray:
    """diag(row sums) - W."""
    return np.diag(pair_weights.sum(axis=1)) - pair_weights


@dataclass(frozen=True)
class LocalStiffness:
    """Classical (stencil) Dirichlet interaction used by the local-limit
    study: energy (coeff/2) B_loc(u, u) with B_loc the weighted form of the
    second-order zero-extension Laplacian."""

    grid: Grid
    coeff: float = 1.0

    @property
    def mode(self) -> str:
        return "dirichlet"

    def matrix(self) -> np.ndarray:
        return self.coeff * dirichlet_stiffness(self.grid)


def dirichlet_laplacian(grid: Grid) -> np.ndarray:
    """(-1, 2, -1)/h^2 stencil with zero extension just outside the box."""
    n = grid.n_per_axis

    def lap1(h):
        m = np.zeros((n, n))
        i = np.arange(n)
        m[i, i] = 2.0
        m[i[:-1], i[:-1] + 1] = -1.0
        m[i[1:], i[1:] - 1] = -1.0
        return m / h**2

    if grid.dim == 1:
        return lap1(grid.h[0])
    eye = np.eye(n)
    return np.kron(lap1(grid.h[0]), eye) + np.kron(eye, lap1(grid.h[1]))


def dirichlet_stiffness(grid: Grid) -> np.ndarray:
    """Weighted bilinear form of the stencil Laplacian: D * L (symmetric
    because the quadrature weights are uniform)."""
    return grid.weights[:, None] * dirichlet_laplacian(grid)


def _pair_terms(km_or_local, phi: PhiSpec, u: np.ndarray, func) -> np.ndarray:
    km = km_or_local
    du = u[:, None] - u[None, :]
    return func(du) * km.pair_weights


def energy_F(km, phi: PhiSpec, u: np.ndarray) -> float:
    """Interaction energy: pair part plus (in Dirichlet mode) the killing
    term (Phi(u) + Phi(-u))/2 * omega, exact for even Phi."""
    u = np.asarray(u, dtype=float)
    if isinstance(km, LocalStiffness):
        if phi.q != 2:
            raise ConfigurationError("the stencil interaction supports q = 2 only")
        return 0.5 * float(u @ (km.matrix() @ u))
    total = float(_pair_terms(km, phi, u, phi.Phi).sum())
    if km.mode == "dirichlet":
        wk = km.killing * km.grid.weights
        total += float(np.dot(0.5 * (phi.Phi(u) + phi.Phi(-u)), wk))
    return total


def grad_I(km, phi: PhiSpec, u: np.ndarray) -> np.ndarray:
    """Raw-dual gradient of energy_F; action_I(km, phi, u, v) = grad . v."""
    u = np.asarray(u, dtype=float)
    if isinstance(km, LocalStiffness):
        return km.matrix() @ u
    du = u[:, None] - u[None, :]
    w_pair = km.pair_weights
    g = (phi.phi(du) * w_pair).sum(axis=1) - (phi.phi(-du) * w_pair.T).sum(axis=1)
    if km.mode == "dirichlet":
        wk = km.killing * km.grid.weights
        g = g + 0.5 * (phi.phi(u) - phi.phi(-u)) * wk
    return g


def action_I(km, phi: PhiSpec, u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(grad_I(km, phi, u), np.asarray(v, dtype=float)))


# ---------------------------------------------------------------------------
# the linear operator


@dataclass
class OperatorL:
    """Invertible linear operator with a variational (bilinear) nature.

    ``mass_split`` kinds act on X = R (+) X_0 and annihilate constants; their
    solves live on the zero-mean subspace.  The dense matrix and its Cholesky
    factorization are built once and cached.
    """

    kind: str
    grid: Grid
    kernel: Optional[KernelMatrix] = None
    parts: Optional[Sequence["OperatorL"]] = None
    scale: float = 1.0
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _factor: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown operator kind {self.kind!r}")
        if self.kind == "fractional_dirichlet":
            if self.kernel is None or self.kernel.mode != "dirichlet":
                raise ConfigurationError("fractional_dirichlet needs a dirichlet kernel matrix")
            if self.kernel.spec.q != 2:
                raise ConfigurationError("fractional_dirichlet requires a q = 2 kernel")
        if self.kind == "regional_fractional":
            if self.kernel is None or self.kernel.mode not in ("regional", "periodic"):
                raise ConfigurationError(
                    "regional_fractional needs a regional or periodic kernel matrix"
                )
            if self.kernel.spec.q != 2:
                raise ConfigurationError("regional_fractional requires a q = 2 kernel")
        if self.kind == "sum":
            if not self.parts:
                raise ConfigurationError("sum operator needs at least one part")
            splits = {p.mass_split for p in self.parts}
            if len(splits) != 1:
                raise ConfigurationError("sum operator parts must share the mass-splitting kind")

    @property
    def mass_split(self) -> bool:
        if self.kind == "sum":
            return self.parts[0].mass_split
        return self.kind in ("laplacian_neumann", "regional_fractional")

    # -- assembly -----------------------------------------------------------

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = self._build()
        return self._matrix

    def _build(self) -> np.ndarray:
        g = self.grid
        w = g.weights
        if self.kind == "identity_riesz":
            b = np.diag(w)
        elif self.kind == "laplacian_dirichlet":
            b = dirichlet_stiffness(g)
        elif self.kind == "laplacian_neumann":
            from .kernels import neumann_laplacian

            b = w[:, None] * neumann_laplacian(g)
        elif self.kind == "fractional_dirichlet":
            km = self.kernel
            b = 2.0 * graph_laplacian(km.pair_weights) + np.diag(km.killing * w)
        elif self.kind == "regional_fractional":
            b = 2.0 * graph_laplacian(self.kernel.pair_weights)
        elif self.kind == "sum":
            b = sum(p.matrix() for p in self.parts)
            return b  # parts already carry their own scales
        else:  # pragma: no cover
            raise ConfigurationError(self.kind)
        return self.scale * b if self.kind != "sum" else b

    def _factorization(self):
        if self._factor is None:
            b = self.matrix()
            if self.mass_split:
                c = self.grid.weights  # D 1, the raw-dual of the constant field
                sigma = np.trace(b) / (b.shape[0] * np.dot(c, c))
                b = b + sigma * np.outer(c, c)
            self._factor = cho_factor(0.5 * (b + b.T), lower=True)
        return self._factor

    # -- operations ---------------------------------------------------------

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix() @ np.asarray(u, dtype=float)

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.asarray(v, dtype=float) @ self.apply(u))

    def solve(self, f: np.ndarray) -> np.ndarray:
        """B^{-1} f for a raw dual vector f.

        Mass-splitting kinds require sum(f) = 0 (the constant direction) and
        return the zero-mean solution.
        """
        f = np.asarray(f, dtype=float)
        if self.mass_split:
            total = abs(float(f.sum()))
            if total > 1e-9 * max(np.linalg.norm(f), 1.0):
                raise ConfigurationError(
                    "solve on a mass-splitting operator needs a zero-sum right-hand side"
                )
        try:
            u = cho_solve(self._factorization(), f)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalError(f"linear solve failed: {exc}") from exc
        if self.mass_split:
            u = u - self.grid.mean(u)
        return u

    def dual_norm(self, f: np.ndarray) -> float:
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            return 0.0
        return float(np.sqrt(max(np.dot(f, self.solve(f)), 0.0)))

    def dual_norm_field(self, v: np.ndarray) -> float:
        """Dual norm of a field embedded through the L2 pairing."""
        return self.dual_norm(self.grid.weights * np.asarray(v, dtype=float))


def apply_L(op: OperatorL, u) -> np.ndarray:
    return op.apply(u)

def solve_L(op: OperatorL, f) -> np.ndarray:
    return op.solve(f)

def dual_norm(op: OperatorL, f) -> float:
    return op.dual_norm(f)


def make_operator(
    kind: str,
    grid: Grid,
    kernel: Optional[KernelMatrix] = None,
    parts: Optional[Sequence[OperatorL]] = None,
    scale: float = 1.0,
) -> OperatorL:
    return OperatorL(kind=kind, grid=grid, kernel=kernel, parts=parts, scale=scale)
