import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlch.errors import ConfigurationError
from nlch.potentials import (
    RegularizedPotential,
    dist_to_interval,
    eval_gamma,
    gamma_liminf_check,
    make_potential,
    moreau,
    moreau_bruteforce,
    potential_certificate,
    resolvent,
    sample_points,
    subdiff_interval,
    verify_coercivity,
    yosida,
)

QUARTIC = make_potential("quartic")
OBSTACLE = make_potential("obstacle")
LOG = make_potential("logarithmic")
LINEAR = make_potential("linear_gamma")


def test_eval_gamma_values():
    assert eval_gamma(OBSTACLE, 0.5) == 0.0
    assert eval_gamma(OBSTACLE, 1.5) == math.inf
    assert eval_gamma(QUARTIC, 2.0) == pytest.approx(4.0)
    assert eval_gamma(LOG, 0.0) == 0.0
    assert eval_gamma(LOG, 1.0) == pytest.approx(math.log(2.0))  # theta = 1


def test_resolvent_linear_closed_form():
    # gamma(z) = z: J_mu(r) = r / (1 + mu)
    assert LINEAR.resolvent(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    reg = RegularizedPotential(LINEAR, 0.25)
    assert float(resolvent(reg, 1.0)) == pytest.approx(0.8, abs=1e-15)
    assert float(yosida(reg, 1.0)) == pytest.approx(0.8, abs=1e-15)


def test_resolvent_obstacle_is_projection():
    reg = RegularizedPotential(OBSTACLE, 0.3)
    assert float(resolvent(reg, 3.0)) == 1.0
    assert float(resolvent(reg, -7.0)) == -1.0
    assert float(resolvent(reg, 0.4)) == 0.4


def test_yosida_obstacle_values():
    reg = RegularizedPotential(OBSTACLE, 0.5)
    assert float(yosida(reg, 2.0)) == pytest.approx(2.0, abs=1e-15)
    assert np.all(yosida(reg, np.linspace(-1, 1, 11)) == 0.0)


def test_quartic_resolvent_vs_bisection_oracle():
    lam, r = 0.1, 1.0
    lo, hi = 0.0, 1.0
    for _ in range(100):  # bisection on z + lam z^3 - r
        mid = 0.5 * (lo + hi)
        if mid + lam * mid**3 - r > 0:
            hi = mid
        else:
            lo = mid
    oracle = 0.5 * (lo + hi)
    reg = RegularizedPotential(QUARTIC, lam)
    assert float(resolvent(reg, r)) == pytest.approx(oracle, abs=1e-12)


def test_moreau_closed_forms():
    # quadratic Gamma: envelope r^2 / (2 (1 + lam))
    reg = RegularizedPotential(LINEAR, 0.2)
    r = np.linspace(-3, 3, 7)
    assert np.allclose(moreau(reg, r), r**2 / 2.4, atol=1e-14)
    rego = RegularizedPotential(OBSTACLE, 0.5)
    assert float(moreau(rego, 2.0)) == pytest.approx(1.0, abs=1e-14)


def test_moreau_quartic_vs_dense_minimization():
    lam, r = 0.1, 1.0
    reg = RegularizedPotential(QUARTIC, lam)
    assert float(moreau(reg, r)) == pytest.approx(moreau_bruteforce(QUARTIC, r, lam), abs=1e-10)


def test_moreau_log_vs_dense_minimization():
    lam, r = 0.05, 0.7
    reg = RegularizedPotential(LOG, lam)
    assert float(moreau(reg, r)) == pytest.approx(moreau_bruteforce(LOG, r, lam), abs=1e-9)


def test_subdiff_intervals():
    assert subdiff_interval(OBSTACLE, 0.3) == (0.0, 0.0)
    assert subdiff_interval(OBSTACLE, 1.0) == (0.0, math.inf)
    assert subdiff_interval(OBSTACLE, -1.0) == (-math.inf, 0.0)
    assert subdiff_interval(OBSTACLE, 1.5) is None
    assert subdiff_interval(QUARTIC, -1.0) == (-1.0, -1.0)
    lo, hi = subdiff_interval(LOG, 0.5)
    assert lo == hi == pytest.approx(0.5 * math.log(3.0))
    assert subdiff_interval(LOG, 1.0) is None


def test_dist_to_interval():
    assert dist_to_interval(0.5, (0.0, 1.0)) == 0.0
    assert dist_to_interval(-1.0, (0.0, 1.0)) == 1.0
    assert dist_to_interval(3.0, None) == math.inf


def test_obstacle_liminf_closed_form():
    # envelope at r = 2 is 1 / (2 lam): crosses the cap at lam = 1e-4
    reg = RegularizedPotential(OBSTACLE, 1e-4)
    assert float(moreau(reg, 2.0)) == pytest.approx(0.5 / 1e-4)
    assert float(moreau(reg, 2.0)) > 1e3


def test_gamma_liminf_all_builtins():
    pts = np.array([0.0, 0.3, 1.0 - 1e-3, 2.0, -2.0])
    for pot in (QUARTIC, OBSTACLE, LOG):
        rep = gamma_liminf_check(pot, pts, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
        assert rep["passed"], rep["failures"]


def test_coercivity_nonnegative_potential():
    pot = make_potential("zero")
    rep = verify_coercivity(pot, [1e-1, 1e-2, 1e-3])
    assert rep["passed"]
    assert rep["alpha"] < 1e-8 and rep["a3"] < 1e-8 and rep["beta"] < 1e-8


def test_coercivity_double_well_split():
    rep = verify_coercivity(QUARTIC, [1e-1, 1e-2, 1e-3])
    assert rep["passed"]
    alphas = [f["alpha"] for f in rep["fits"]]
    assert max(alphas) <= 10.0 * alphas[0] + 10.0  # bounded along the sweep


def test_invalid_lambda():
    with pytest.raises(ConfigurationError):
        RegularizedPotential(QUARTIC, 1.0)
    with pytest.raises(ConfigurationError):
        RegularizedPotential(QUARTIC, 0.0)


def test_logarithmic_parameter_validation():
    with pytest.raises(ConfigurationError):
        make_potential("logarithmic", theta=2.0, theta_c=1.0)
    with pytest.raises(ConfigurationError):
        make_potential("logarithmic", theta=1.0, theta_c=2.0, c=0.4)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(min_value=-20, max_value=20),
    st.floats(min_value=-20, max_value=20),
    st.sampled_from([1e-1, 1e-2, 1e-3]),
)
def test_resolvent_nonexpansive_property(r1, r2, lam):
    for pot in (QUARTIC, OBSTACLE, LOG):
        reg = RegularizedPotential(pot, lam)
        j1, j2 = float(resolvent(reg, r1)), float(resolvent(reg, r2))
        assert abs(j1 - j2) <= abs(r1 - r2) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-10, max_value=10), st.sampled_from([1e-1, 1e-2]))
def test_envelope_below_gamma_property(r, lam):
    for pot in (QUARTIC, LOG):
        g = float(pot.gamma(r))
        if math.isfinite(g):
            assert float(moreau(RegularizedPotential(pot, lam), r)) <= g + 1e-10


def test_certificates_builtins():
    for name in ("quartic", "obstacle", "logarithmic"):
        rep = potential_certificate(make_potential(name), [1e-1, 1e-2, 1e-3])
        failures = [c["name"] for c in rep["checks"] if not c["passed"]]
        assert rep["passed"], failures


def test_sample_points_sorted_with_singular_tail():
    pts = sample_points()
    assert np.all(np.diff(pts) > 0)
    assert pts.size == 401 + 16
    assert np.any(np.abs(pts - (1.0 - 1e-8)) < 1e-12)
