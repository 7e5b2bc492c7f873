"""Verification suite: energies, energy estimates, Poincare constants,
local-limit behavior, Neumann extensions, and the relaxation-mode run.

Every check returns a Report whose failures carry the measured violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import ConfigurationError
from .grid import Grid, build_grid, distance_matrix, refine
from .kernels import KernelMatrix
from .operators import LocalStiffness, energy_F, graph_laplacian
from .scheme import SchemeConfig, Trajectory, run


@dataclass
class Report:
    """One named check: measured value(s) against a threshold."""

    name: str
    value: object
    threshold: object
    passed: bool
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "passed": bool(self.passed),
            "notes": self.notes,
        }


def total_energy(u: np.ndarray, cfg: SchemeConfig) -> float:
    """Interaction energy plus the (unregularized) potential integral;
    +infinity as soon as one nodal value leaves the domain of Gamma."""
    u = np.asarray(u, dtype=float)
    f_vals = np.asarray(cfg.potential.f_value(u), dtype=float)
    if np.any(np.isinf(f_vals)):
        return math.inf
    return energy_F(cfg.kernel, cfg.phi, u) + float(np.dot(f_vals, cfg.grid.weights))


def energy_estimate_check(traj: Trajectory, cfg: SchemeConfig, slack_tol: Optional[float] = None) -> Report:
    """Prefix energy inequality: for every n,
    (tau/2) sum_{k<=n} ||w_k||_L^2 + E_lam(u_n) <= E(u_0) + slack.

    In conserved mode the zero-mean part of w enters the sum.
    """
    tau = traj.tau
    e0 = total_energy(traj.states[0], cfg)
    if slack_tol is None:
        slack_tol = traj.n_steps * cfg.inner.tol * 10.0
    acc = 0.0
    worst = -math.inf
    w_field = traj.potentials.copy()
    if cfg.mass_mode == "conserved":
        means = (w_field @ cfg.grid.weights) / cfg.grid.volume
        w_field = w_field - means[:, None]
    for n in range(1, traj.n_steps + 1):
        wn = w_field[n]
        acc += 0.5 * tau * cfg.opL.bilinear(wn, wn)
        worst = max(worst, acc + traj.energies[n] - e0)
    passed = worst <= slack_tol
    return Report(
        name="energy_estimate",
        value=worst,
        threshold=slack_tol,
        passed=bool(passed),
        notes="max prefix slack over the trajectory" if passed else f"violation {worst:.3e}",
    )


def _zero_mean_basis(grid: Grid) -> np.ndarray:
    """Orthonormal (plain dot) basis of {v : sum v_i w_i = 0}."""
    w = grid.weights
    q, _ = np.linalg.qr(np.column_stack([w, np.eye(w.size)[:, :-1]]))
    return q[:, 1:]


def poincare_constant(km: KernelMatrix, mode: str) -> float:
    """1 / (smallest generalized eigenvalue of the kernel form against the
    weighted L2 norm) on the zero-extension (dirichlet) or zero-mean
    (regional) subspace.  Infinite when the form degenerates there."""
    if km.spec.q != 2:
        raise ConfigurationError("the eigenvalue formulation needs q = 2")
    if mode not in ("dirichlet", "regional"):
        raise ConfigurationError(f"unknown Poincare mode {mode!r}")
    grid = km.grid
    w = grid.weights
    b = 2.0 * graph_laplacian(km.pair_weights)
    if mode == "dirichlet":
        b = b + np.diag(km.killing * w)
        mass = np.diag(w)
        evals = eigh(0.5 * (b + b.T), mass, eigvals_only=True)
    else:
        basis = _zero_mean_basis(grid)
        br = basis.T @ (0.5 * (b + b.T)) @ basis
        mr = basis.T @ np.diag(w) @ basis
        evals = eigh(br, mr, eigvals_only=True)
    lam_min = float(evals[0])
    scale = max(float(evals[-1]), 1.0)
    if lam_min <= 1e-12 * scale:
        return math.inf
    return 1.0 / lam_min


def truncated_power_matrix(nodes: np.ndarray, weights: np.ndarray, s: float, q: float, rho: float) -> np.ndarray:
    """Pair weights of the range-cutoff power kernel on an explicit node set
    (used by the disconnected-domain Poincare studies)."""
    d = nodes.shape[1]
    dm = distance_matrix(nodes, nodes)
    with np.errstate(divide="ignore"):
        vals = np.where((dm > 0) & (dm < rho), dm ** -(d + s * q), 0.0)
    return vals * np.outer(weights, weights)


def disconnected_poincare_constant(gap: float, rho: float, n: int, s: float = 0.5) -> float:
    """Regional Poincare constant of two unit intervals separated by ``gap``
    under the range-cutoff power kernel."""
    g1 = build_grid(1, (0.0, 1.0), n)
    offset = 1.0 + gap
    nodes = np.vstack([g1.nodes, g1.nodes + offset])
    weights = np.concatenate([g1.weights, g1.weights])
    pair = truncated_power_matrix(nodes, weights, s, 2.0, rho)
    b = 2.0 * graph_laplacian(pair)
    q_basis, _ = np.linalg.qr(np.column_stack([weights, np.eye(weights.size)[:, :-1]]))
    basis = q_basis[:, 1:]
    br = basis.T @ (0.5 * (b + b.T)) @ basis
    mr = basis.T @ np.diag(weights) @ basis
    evals = eigh(br, mr, eigvals_only=True)
    lam_min = float(evals[0])
    if lam_min <= 1e-12 * max(float(evals[-1]), 1.0):
        return math.inf
    return 1.0 / lam_min


# ---------------------------------------------------------------------------
# local limit


def fit_local_scale(cfg_frac: SchemeConfig, n_modes: int = 3) -> float:
    """Dimensional constant relating the normalized nonlocal form to the
    stencil Laplacian, fitted from low generalized-eigenvalue ratios."""
    grid = cfg_frac.grid
    w = grid.weights
    km = cfg_frac.kernel
    b_frac = 2.0 * graph_laplacian(km.pair_weights) + np.diag(km.killing * w)
    b_loc = LocalStiffness(grid).matrix()
    mass = np.diag(w)
    ev_f = eigh(0.5 * (b_frac + b_frac.T), mass, eigvals_only=True)
    ev_l = eigh(0.5 * (b_loc + b_loc.T), mass, eigvals_only=True)
    ratios = ev_f[:n_modes] / ev_l[:n_modes]
    return float(np.mean(ratios))


def local_limit_study(u0: np.ndarray, s_list: Sequence[float], cfg_maker, scale_from_largest_s: bool = True) -> Report:
    """Distances between normalized fractional runs and a classical stencil
    run; PASS iff they decrease along increasing s.

    ``cfg_maker(s)`` must return the SchemeConfig of the fractional run for
    order s (kernel normalized by 1 - s).  The classical run reuses the
    largest-s config with the stencil interaction scaled by the fitted
    dimensional constant.
    """
    s_sorted = sorted(s_list)
    cfgs = {s: cfg_maker(s) for s in s_sorted}
    ref_cfg = cfgs[s_sorted[-1]]
    coeff = fit_local_scale(ref_cfg) if scale_from_largest_s else 1.0
    local_cfg = replace(ref_cfg, kernel=LocalStiffness(ref_cfg.grid, coeff=coeff))
    traj_local = run(u0, local_cfg)
    grid = ref_cfg.grid
    distances = {}
    for s in s_sorted:
        traj = run(u0, cfgs[s])
        d = max(
            grid.norm_l2(traj.states[k] - traj_local.states[k]) for k in range(traj.states.shape[0])
        )
        distances[s] = d
    vals = [distances[s] for s in s_sorted]
    decreasing = all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))
    return Report(
        name="local_limit",
        value={"distances": distances, "fitted_scale": coeff},
        threshold="strictly decreasing in s",
        passed=bool(decreasing),
        notes="" if decreasing else f"distances not decreasing: {vals}",
    )


# ---------------------------------------------------------------------------
# Neumann extension


def neumann_extension(u_interior: np.ndarray, s: float, grid: Grid) -> np.ndarray:
    """Kernel-weighted average extension: the unique exterior values making
    the discrete nonlocal normal derivative vanish."""
    if grid.ext_nodes.shape[0] == 0:
        raise ConfigurationError("grid has no exterior nodes; build it with ext_radius > 0")
    u = np.asarray(u_interior, dtype=float)
    d = grid.dim
    k = distance_matrix(grid.ext_nodes, grid.nodes) ** -(d + 2.0 * s)
    num = k @ (u * grid.weights)
    den = k @ grid.weights
    return num / den


def neumann_extension_residual(u_interior: np.ndarray, ext_values: np.ndarray, s: float, grid: Grid) -> np.ndarray:
    """Discrete nonlocal normal derivative of the extended field at each
    exterior node (should vanish for the computed extension)."""
    u = np.asarray(u_interior, dtype=float)
    d = grid.dim
    k = distance_matrix(grid.ext_nodes, grid.nodes) ** -(d + 2.0 * s)
    return ext_values * (k @ grid.weights) - k @ (u * grid.weights)


def allen_cahn_run(u0: np.ndarray, cfg: SchemeConfig) -> Trajectory:
    """Relaxation (non-conserved) mode: same step machinery with the L2
    Riesz map as the linear operator."""
    if cfg.opL.kind != "identity_riesz":
        raise ConfigurationError("allen_cahn_run requires the identity_riesz operator")
    return run(u0, cfg)


def zeta_l1_bound_check(trajectories: Sequence[Trajectory], cfg: SchemeConfig, ratio_cap: float = 2.0) -> Report:
    """Uniform-in-lambda boundedness of tau * sum_n ||zeta_n||_L1 across a
    lambda sweep (trajectories from the same setup at different lambdas).

    Skipped (with a note) when the conserved mass sits on the boundary of
    the domain of the convex piece.
    """
    if cfg.mass_mode != "conserved":
        raise ConfigurationError("the selection L1 bound applies to conserved-mass runs")
    lo, hi = cfg.potential.gamma_domain()
    m = cfg.mass
    if m is not None and not lo < m < hi:
        return Report(
            name="zeta_l1_bound",
            value=None,
            threshold=ratio_cap,
            passed=True,
            notes="skipped: mass not in the interior of the convex piece's domain",
        )
    sums = {}
    for traj in trajectories:
        w = cfg.grid.weights
        l1 = sum(
            float(np.dot(np.abs(traj.selections[n]), w)) for n in range(1, traj.n_steps + 1)
        )
        sums[traj.lam] = traj.tau * l1
    vals = np.array(list(sums.values()))
    spread = float(vals.max() / max(vals.min(), 1e-300)) if np.any(vals > 0) else 1.0
    passed = spread < ratio_cap
    return Report(
        name="zeta_l1_bound",
        value=sums,
        threshold=ratio_cap,
        passed=bool(passed),
        notes="" if passed else f"L1 sums spread by {spread:.2f}x across the sweep",
    )


def poincare_refinement_report(spec, grid: Grid, mode: str, tolerance: float = 0.10) -> Report:
    """Stability of the Poincare constant under one grid refinement."""
    from .kernels import assemble

    km_coarse = assemble(spec, grid, mode)
    km_fine = assemble(spec, refine(grid, 2), mode)
    c0 = poincare_constant(km_coarse, mode)
    c1 = poincare_constant(km_fine, mode)
    rel = abs(c1 - c0) / max(abs(c0), 1e-300)
    return Report(
        name="poincare_refinement",
        value={"coarse": c0, "fine": c1},
        threshold=tolerance,
        passed=bool(rel <= tolerance),
        notes=f"relative change {rel:.3f}",
    )
