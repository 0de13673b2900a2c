import numpy as np
import pytest

from irgn_banach.core import Field, Grid, InvalidFieldError, l2_norm
from irgn_banach.forward import (DomainError, Reaction1D, custom_problem, diffusion1d_paper,
                                 estimate_operator_norm, get_preset, reaction1d_paper,
                                 reaction2d_paper)
from irgn_banach.linalg import SolverError, Thomas
from irgn_banach.subproblem import assemble_jacobian


def test_reaction1d_manufactured_solution():
    prob = reaction1d_paper()
    u = prob.exact_data()
    assert np.max(np.abs(u.values - (1 + 5 * prob.operator.grid.axis))) <= 1e-10


def test_reaction2d_manufactured_solution_both_solvers():
    for solver in ("lu", "gauss-seidel"):
        prob = reaction2d_paper(10, solver=solver)
        g = prob.operator.grid
        u = prob.exact_data()
        assert np.max(np.abs(u.values - g.coords.sum(axis=1))) <= 1e-8


def test_diffusion1d_manufactured_solution():
    prob = diffusion1d_paper()
    t = prob.operator.grid.axis
    assert l2_norm(prob.exact_data() - Field(prob.operator.grid, t * (t - 1))) <= 1e-4


def test_truth_values_at_jump_nodes():
    g = reaction1d_paper().operator.grid
    truth = reaction1d_paper().truth.values
    assert truth[30] == 0.5 and truth[40] == 0.5 and truth[29] == 0.0 and truth[70] == 1.0
    a = diffusion1d_paper().truth.values
    assert a[0] == 1.0 and a[200] == 2.0 and a[120] == 1.0
    assert g.node_count == 101


def test_thomas_matches_dense_and_handles_matrix_rhs():
    rng = np.random.default_rng(0)
    n = 8
    diag = 4 + rng.random(n)
    off = -rng.random(n)
    solver = Thomas(np.r_[0.0, off[1:]], diag, np.r_[off[:-1], 0.0])
    A = np.diag(diag) + np.diag(off[1:], -1) + np.diag(off[:-1], 1)
    b = rng.standard_normal((n, 3))
    assert np.allclose(solver.solve(b), np.linalg.solve(A, b), atol=1e-13)
    assert np.allclose(solver.solve(b[:, 0]), np.linalg.solve(A, b[:, 0]), atol=1e-13)


def test_thomas_zero_pivot():
    with pytest.raises(SolverError):
        Thomas([0.0, 1.0], [0.0, 1.0], [1.0, 0.0]).solve([1.0, 1.0])


@pytest.mark.parametrize("make", [reaction1d_paper, lambda: reaction2d_paper(6), diffusion1d_paper])
def test_jacobian_matches_unit_probing(make):
    prob = make()
    if prob.operator.grid.node_count > 200:
        prob = get_preset(prob.name, subdivisions=20)
    x = prob.truth + 0.05
    lin = prob.operator.linearize(x)
    assert np.allclose(lin.jacobian(), assemble_jacobian(lin), rtol=0, atol=1e-12)


def test_reaction_domain_and_projection():
    prob = reaction1d_paper(20)
    op = prob.operator
    g = op.grid
    bad = Field.constant(g, -2.0)
    with pytest.raises(DomainError):
        op.apply(bad)
    proj = op.clip(bad)
    assert l2_norm(Field(g, np.minimum(proj.values, 0))) == pytest.approx(1.0, rel=1e-12)
    op.check_admissible(proj)
    mild = Field.constant(g, -0.5)
    assert op.clip(mild).equals(mild)


def test_diffusion_domain_and_clip():
    prob = diffusion1d_paper(20)
    op = prob.operator
    with pytest.raises(DomainError):
        op.apply(Field.constant(op.grid, 0.05))
    assert np.min(op.clip(Field.constant(op.grid, -1.0)).values) == op.nu0


def test_grid_mismatch_rejected():
    op = reaction1d_paper(10).operator
    with pytest.raises(InvalidFieldError):
        op.apply(Field.zeros(Grid(1, 11)))


def test_custom_problem_and_unknown_preset():
    base = reaction1d_paper(10)
    op = base.operator
    prob = custom_problem("reaction1d", op.source, op.boundary, base.truth)
    assert isinstance(prob.operator, Reaction1D)
    assert prob.exact_data().equals(base.exact_data())
    with pytest.raises(ValueError):
        get_preset("reaction3d")
    with pytest.raises(ValueError):
        custom_problem("wave", op.source, op.boundary, base.truth)


def test_operator_norm_estimate_is_lower_bound_of_dense():
    prob = reaction1d_paper(20)
    lin = prob.operator.linearize(prob.truth)
    g = prob.operator.grid
    W = np.sqrt(g.weights)
    M = assemble_jacobian(lin)
    exact = np.linalg.norm(W[:, None] * M / W[None, :], 2)
    est = estimate_operator_norm(lin)
    assert est <= exact * (1 + 1e-9)
    assert est >= 0.99 * exact
