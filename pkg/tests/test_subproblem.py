import numpy as np
import pytest

from irgn_banach.core import Field, add_noise, l2_norm
from irgn_banach.forward import diffusion1d_paper, reaction1d_paper
from irgn_banach.penalties import SquaredL2, make_penalty
from irgn_banach.subproblem import (InnerControls, SubproblemSpec, UnsupportedOracle, _line_search,
                                    dense_oracle, minimize, objective_and_gradient)


def _spec(seed, penalty_kind="l2", p=2.0, alpha=0.1, tol=1e-8, subdivisions=10, jac_max=2000):
    prob = reaction1d_paper(subdivisions)
    g = prob.operator.grid
    rng = np.random.default_rng(seed)
    x_n = Field(g, prob.truth.values + 0.1 * rng.random(g.node_count))
    y = add_noise(prob.exact_data(), 1e-3, seed)
    pen = make_penalty(penalty_kind, g, p=1.5)
    return SubproblemSpec(prob.operator.linearize(x_n), y, x_n, pen, alpha, p,
                          InnerControls(grad_tol_rel=tol, dense_jacobian_max=jac_max))


@pytest.mark.parametrize("kind", ["l2", "elasticnet", "tv", "sobolev"])
@pytest.mark.parametrize("p", [2.0, 1.5])
def test_gradient_matches_finite_difference(kind, p):
    spec = _spec(0, kind, p)
    x = spec.x_n + 0.3
    f, g = objective_and_gradient(spec, x)
    h = Field(x.grid, np.random.default_rng(1).standard_normal(x.grid.node_count))
    step = 1e-6
    fd = (objective_and_gradient(spec, x + h * step)[0]
          - objective_and_gradient(spec, x - h * step)[0]) / (2 * step)
    assert abs(fd - g.dot(h)) <= 1e-6 * abs(fd)


@pytest.mark.parametrize("seed", range(3))
def test_cg_matches_dense_oracle(seed):
    spec = _spec(seed, tol=1e-12)
    res = minimize(spec)
    assert res.converged
    assert l2_norm(res.x - dense_oracle(spec)) <= 1e-8


def test_matrix_free_path_agrees_with_cached_jacobian():
    a = minimize(_spec(4, "tv", tol=1e-10))
    b = minimize(_spec(4, "tv", tol=1e-10, jac_max=0))
    assert l2_norm(a.x - b.x) <= 1e-7


def test_objective_decreases_monotonically():
    res = minimize(_spec(2, "elasticnet", p=1.5))
    hist = np.array(res.objective_history)
    # each step decreases; increments below one ulp leave the running total unchanged
    assert np.all(np.diff(hist) <= 0)
    assert hist[-1] < hist[0]


def test_unpacking_and_zero_gradient_start():
    spec = _spec(0)
    x, its = minimize(spec)
    assert its > 0 and isinstance(x, Field)
    prob = reaction1d_paper(10)
    g = prob.operator.grid
    exact = prob.exact_data()
    zero = SubproblemSpec(prob.operator.linearize(prob.truth), exact, prob.truth,
                          SquaredL2(g, prob.truth, prob.truth * 2.0), 1.0)
    res = minimize(zero)
    assert res.iterations == 0 and res.converged and res.x.equals(prob.truth)


def test_iteration_cap_reports_warning():
    spec = _spec(1, "tv", alpha=1e-4)
    capped = SubproblemSpec(spec.linearization, spec.y_delta, spec.x_n, spec.penalty, spec.alpha,
                            controls=InnerControls(max_iter=3))
    res = minimize(capped)
    assert res.iterations == 3 and not res.converged and "3 iterations" in res.warning


def test_oracle_rejects_unsupported():
    with pytest.raises(UnsupportedOracle):
        dense_oracle(_spec(0, "tv"))
    with pytest.raises(UnsupportedOracle):
        dense_oracle(_spec(0, p=1.5))
    with pytest.raises(UnsupportedOracle):
        dense_oracle(_spec(0, subdivisions=250))


def test_spec_validation():
    spec = _spec(0)
    with pytest.raises(ValueError):
        SubproblemSpec(spec.linearization, spec.y_delta, spec.x_n, spec.penalty, 0.0)
    with pytest.raises(ValueError):
        SubproblemSpec(spec.linearization, spec.y_delta, spec.x_n, spec.penalty, 1.0, 0.5)
    with pytest.raises(ValueError):
        InnerControls(armijo_c1=0.2, curvature_c2=0.1)
    with pytest.raises(ValueError):
        InnerControls(max_iter=0)


def test_line_search_on_quadratic_finds_minimizer():
    # phi(s) = (s - 3)^2 - 9, minimized at s = 3
    phi = lambda s: ((s - 3) ** 2 - 9, 2 * (s - 3))
    s, df = _line_search(phi, -6.0, InnerControls())
    assert df < 0
    assert abs(2 * (s - 3)) <= 0.1 * 6.0


def test_diffusion_subproblem_nonquadratic_penalty_converges():
    prob = diffusion1d_paper(40)
    g = prob.operator.grid
    y = add_noise(prob.exact_data(), 1e-4, 0)
    pen = make_penalty("sobolev", g, p=1.6, anchor=prob.default_anchor)
    spec = SubproblemSpec(prob.operator.linearize(prob.default_anchor), y, prob.default_anchor,
                          pen, 0.5, controls=InnerControls(max_iter=5000, restart_period=g.node_count))
    res = minimize(spec)
    assert res.converged
