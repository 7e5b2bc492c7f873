import numpy as np
import pytest

from nlch.errors import ConfigurationError, NumericalError
from nlch.operators import graph_laplacian, make_operator, power_phi
from nlch.potentials import make_potential
from nlch.scheme import (
    InnerSettings,
    SchemeConfig,
    adjust_mass,
    el_residual,
    interpolants,
    recover_w,
    recover_zeta,
    run,
    step_minimize,
)


def _dirichlet_cfg(grid, km, potential, T=0.1, n_steps=10, lam=1e-2, q=2, tol=1e-9, op=None):
    return SchemeConfig(
        T=T,
        n_steps=n_steps,
        lam=lam,
        phi=power_phi(q),
        kernel=km,
        opL=op or make_operator("laplacian_dirichlet", grid),
        potential=potential,
        inner=InnerSettings(tol=tol, max_iter=8000),
    )


def _conserved_cfg(grid, km, potential, T=0.1, n_steps=10, lam=1e-2, q=2, tol=1e-9, phi=None):
    return SchemeConfig(
        T=T,
        n_steps=n_steps,
        lam=lam,
        phi=phi or power_phi(q),
        kernel=km,
        opL=make_operator("laplacian_neumann", grid),
        potential=potential,
        mass_mode="conserved",
        inner=InnerSettings(tol=tol, max_iter=8000),
    )


def test_step_is_implicit_euler_for_linear_case(grid1d, km_dirichlet, rng):
    tau = 0.05
    cfg = _dirichlet_cfg(
        grid1d, km_dirichlet, make_potential("zero"), T=tau, n_steps=1, lam=0.5, tol=1e-12,
        op=make_operator("identity_riesz", grid1d),
    )
    u0 = rng.standard_normal(grid1d.n_nodes)
    u1, info = step_minimize(u0, cfg)
    g_mat = 2.0 * graph_laplacian(km_dirichlet.pair_weights) + np.diag(
        km_dirichlet.killing * grid1d.weights
    )
    a = np.diag(1.0 / grid1d.weights) @ g_mat
    oracle = np.linalg.solve(np.eye(grid1d.n_nodes) + tau * a, u0)
    assert np.max(np.abs(u1 - oracle)) < 1e-10
    assert el_residual(u1, u0, cfg) <= 1e-12


def test_huge_tau_returns_global_minimizer(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(
        grid1d, km_dirichlet, make_potential("zero"), T=1e12, n_steps=1, lam=0.5, tol=1e-10,
        op=make_operator("identity_riesz", grid1d),
    )
    u1, _ = step_minimize(np.sin(np.pi * grid1d.nodes[:, 0]), cfg)
    assert np.max(np.abs(u1)) < 1e-6


def test_zero_initial_datum_stays_zero(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=5)
    traj = run(np.zeros(grid1d.n_nodes), cfg)
    assert np.max(np.abs(traj.states)) == 0.0
    assert np.max(np.abs(traj.potentials)) == 0.0


def test_constant_state_is_stationary_conserved(grid1d, km_regional):
    pot = make_potential("quartic")
    cfg = _conserved_cfg(grid1d, km_regional, pot, n_steps=5)
    m = 0.3
    traj = run(np.full(grid1d.n_nodes, m), cfg)
    assert np.max(np.abs(traj.states - m)) < 1e-9
    # w = gamma_lam(m) + pi(m) at the stationary constant state
    reg = cfg.reg
    expected = float(reg.yosida(m) + pot.pi(m))
    assert np.max(np.abs(traj.potentials[1:] - expected)) < 1e-8


def test_recover_w_satisfies_first_equation(grid1d, km_dirichlet, rng):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=2)
    u0 = 0.5 * np.sin(np.pi * grid1d.nodes[:, 0])
    u1, _ = step_minimize(u0, cfg)
    w = recover_w(u1, u0, cfg)
    rate_dual = grid1d.weights * (u1 - u0) / cfg.tau
    res = cfg.opL.apply(w) + rate_dual
    assert np.max(np.abs(res)) < 1e-9
    # identical states give w = 0
    assert np.max(np.abs(recover_w(u0, u0, cfg))) == 0.0


def test_recover_w_identity_riesz_is_minus_rate(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(
        grid1d, km_dirichlet, make_potential("zero"), T=0.1, n_steps=1,
        op=make_operator("identity_riesz", grid1d),
    )
    u0 = np.sin(np.pi * grid1d.nodes[:, 0])
    u1 = 0.9 * u0
    w = recover_w(u1, u0, cfg)
    assert np.allclose(w, -(u1 - u0) / cfg.tau)


def test_dual_norm_identity_along_step(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=2)
    u0 = 0.5 * np.sin(np.pi * grid1d.nodes[:, 0])
    u1, _ = step_minimize(u0, cfg)
    w = recover_w(u1, u0, cfg)
    lhs = np.sqrt(cfg.opL.bilinear(w, w))
    rhs = cfg.opL.dual_norm_field((u1 - u0) / cfg.tau)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_recover_zeta_in_subdifferential(grid1d, km_dirichlet, rng):
    from nlch.potentials import subdiff_membership_gap

    pot = make_potential("obstacle")
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, pot, lam=1e-2)
    u = rng.uniform(-1.2, 1.2, grid1d.n_nodes)
    zeta = recover_zeta(u, cfg)
    j = cfg.reg.resolvent(u)
    for jj, zz in zip(j, zeta):
        gap = subdiff_membership_gap(pot, float(jj), float(zz))
        assert gap is None or gap <= 1e-9


def test_zeta_zero_inside_obstacle(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("obstacle"))
    u = 0.9 * np.sin(np.pi * grid1d.nodes[:, 0])
    assert np.all(recover_zeta(u, cfg) == 0.0)


def test_adjust_mass_constant_test_field(grid1d, km_regional, rng):
    pot = make_potential("quartic")
    cfg = _conserved_cfg(grid1d, km_regional, pot)
    u = rng.uniform(-0.5, 0.5, grid1d.n_nodes)
    omega = rng.standard_normal(grid1d.n_nodes)
    omega -= grid1d.mean(omega)
    w = adjust_mass(omega, u, cfg)
    shift = grid1d.mean(recover_zeta(u, cfg) + pot.pi(u))
    # tested against the constant field: integral reproduces the mass shift
    assert float(np.dot(w, grid1d.weights)) == pytest.approx(shift * grid1d.volume, abs=1e-12)
    # already-zero-mean correction term leaves omega untouched
    pot0 = make_potential("zero")
    cfg0 = _conserved_cfg(grid1d, km_regional, pot0)
    assert np.allclose(adjust_mass(omega, u - grid1d.mean(u), cfg0), omega)


def test_run_energy_monotone_and_prefix_inequality(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=8, tol=1e-8)
    u0 = 0.8 * np.sin(np.pi * grid1d.nodes[:, 0])
    traj = run(u0, cfg)
    assert np.all(np.diff(traj.energies) <= 1e-10)
    # spinodal-style relaxation reaches a plateau
    assert traj.energies[-1] < traj.energies[0]


def test_mass_conserved_structurally(grid1d, km_regional):
    cfg = _conserved_cfg(grid1d, km_regional, make_potential("quartic"))
    u0 = 0.1 + 0.5 * np.cos(np.pi * grid1d.nodes[:, 0])
    traj = run(u0, cfg)
    assert np.max(np.abs(traj.masses - traj.masses[0])) <= 1e-10


def test_interpolants_endpoints_and_midpoint(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=4)
    traj = run(0.5 * np.sin(np.pi * grid1d.nodes[:, 0]), cfg)
    tau = traj.tau
    const, lin = interpolants(traj, 2 * tau)
    assert np.allclose(const, traj.states[2]) and np.allclose(lin, traj.states[2])
    const, lin = interpolants(traj, 2.5 * tau)
    assert np.allclose(const, traj.states[3])
    assert np.allclose(lin, 0.5 * (traj.states[2] + traj.states[3]))
    with pytest.raises(ConfigurationError):
        interpolants(traj, -1.0)


def test_interpolant_gap_bound(grid1d, km_dirichlet):
    # sup-norm gap between the two interpolants is O(sqrt(tau)) with the
    # constant read off from the discrete energy inequality
    cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("quartic"), n_steps=16, T=0.16)
    u0 = 0.8 * np.sin(np.pi * grid1d.nodes[:, 0])
    traj = run(u0, cfg)
    from nlch.diagnostics import total_energy

    e0 = total_energy(u0, cfg)
    c = np.sqrt(2.0 * (e0 - traj.energies.min()) + 1e-12)
    tau = traj.tau
    for t in np.linspace(0.0, cfg.T - 1e-12, 23):
        const, lin = interpolants(traj, t)
        gap = cfg.opL.dual_norm_field(const - lin)
        assert gap <= c * np.sqrt(tau) + 1e-9


def test_mass_mode_validation(grid1d, km_regional, km_dirichlet):
    with pytest.raises(ConfigurationError):
        SchemeConfig(
            T=1.0,
            n_steps=2,
            lam=0.1,
            phi=power_phi(2),
            kernel=km_regional,
            opL=make_operator("laplacian_dirichlet", grid1d),  # not mass-splitting
            potential=make_potential("quartic"),
            mass_mode="conserved",
        )
    cfg = _conserved_cfg(grid1d, km_regional, make_potential("obstacle"))
    with pytest.raises(ConfigurationError):
        run(np.full(grid1d.n_nodes, 1.0), cfg)  # mass on the domain boundary


def test_step_failure_carries_best_iterate(grid1d, km_dirichlet):
    cfg = _dirichlet_cfg(
        grid1d, km_dirichlet, make_potential("quartic"), n_steps=3, tol=1e-14
    )
    cfg = SchemeConfig(
        **{
            **cfg.__dict__,
            "inner": InnerSettings(tol=1e-16, max_iter=3),  # impossible tolerance
        }
    )
    with pytest.raises(NumericalError) as exc:
        run(0.5 * np.sin(np.pi * grid1d.nodes[:, 0]), cfg)
    assert exc.value.best is not None
    assert exc.value.partial is not None
    assert exc.value.partial.states.shape[0] >= 1


def test_lambda_sweep_zeta_stability(grid1d, km_dirichlet):
    # dropping lambda by 10x changes zeta by a bounded amount (a-priori L2 bound)
    u0 = 0.8 * np.sin(np.pi * grid1d.nodes[:, 0])
    norms = {}
    for lam in (1e-1, 1e-2, 1e-3):
        cfg = _dirichlet_cfg(grid1d, km_dirichlet, make_potential("obstacle"), lam=lam, n_steps=5)
        traj = run(u0, cfg)
        norms[lam] = max(grid1d.norm_l2(z) for z in traj.selections[1:])
    vals = list(norms.values())
    assert max(vals) <= 10.0 * (1.0 + min(vals))


def test_tau_refinement_cauchy(grid1d, km_dirichlet):
    u0 = 0.8 * np.sin(np.pi * grid1d.nodes[:, 0])
    finals = {}
    for n_steps in (4, 8, 16):
        cfg = _dirichlet_cfg(
            grid1d, km_dirichlet, make_potential("quartic"), T=0.08, n_steps=n_steps, tol=1e-10
        )
        finals[n_steps] = run(u0, cfg).states[-1]
    d1 = grid1d.norm_l2(finals[4] - finals[8])
    d2 = grid1d.norm_l2(finals[8] - finals[16])
    assert d2 < d1
