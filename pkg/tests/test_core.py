import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from irgn_banach.core import (Field, Grid, InvalidFieldError, RegSchedule, add_noise,
                              field_from_csv, l2_norm, schedule_alpha)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("dim,n", [(1, 1), (1, 100), (2, 1), (2, 30)])
def test_weights_sum_to_measure(dim, n):
    g = Grid(dim, n)
    assert g.node_count == (n + 1) ** dim
    assert np.all(g.weights >= 0)
    assert abs(g.weights.sum() - 1.0) <= 1e-12


def test_trapezoid_exact_on_affine():
    g = Grid(1, 7)
    assert g.weights @ g.axis == pytest.approx(0.5, abs=1e-15)
    g2 = Grid(2, 5)
    assert g2.weights @ (g2.coords[:, 0] + 2 * g2.coords[:, 1]) == pytest.approx(1.5, abs=1e-14)


def test_node_order_is_x_major():
    g = Grid(2, 2)
    assert g.coords[:4].tolist() == [[0, 0], [0, 0.5], [0, 1], [0.5, 0]]


@pytest.mark.parametrize("bad", [(3, 4), (1, 0), (1, 2.5)])
def test_grid_rejects_bad_arguments(bad):
    with pytest.raises(ValueError):
        Grid(*bad)


def test_l2_norm_examples():
    g = Grid(1, 100)
    assert abs(l2_norm(Field.constant(g, 1.0)) - 1.0) <= 1e-12
    assert l2_norm(Field.zeros(g)) == 0.0
    g400 = Grid(1, 400)
    assert abs(l2_norm(g400.sample(lambda t: np.sin(np.pi * t))) - 1 / np.sqrt(2)) <= 1e-4


@pytest.mark.parametrize("values", [[0.0, np.nan, 1.0], [np.inf, 0.0, 0.0]])
def test_field_rejects_non_finite(values):
    with pytest.raises(InvalidFieldError):
        Field(Grid(1, 2), values)


def test_field_rejects_wrong_length_and_is_read_only():
    g = Grid(1, 3)
    with pytest.raises(InvalidFieldError):
        Field(g, [1.0, 2.0])
    f = Field(g, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError):
        f.values[0] = 5.0


def test_field_arithmetic_requires_same_grid():
    with pytest.raises(InvalidFieldError):
        Field.zeros(Grid(1, 3)) + Field.zeros(Grid(1, 4))


@settings(max_examples=60, deadline=None)
@given(arrays(float, 21, elements=finite), arrays(float, 21, elements=finite), finite)
def test_norm_triangle_and_homogeneity(a, b, c):
    g = Grid(1, 20)
    f, h = Field(g, a), Field(g, b)
    scale = 1e-12 * (1 + l2_norm(f) + l2_norm(h))
    assert l2_norm(f + h) <= l2_norm(f) + l2_norm(h) + scale
    assert abs(l2_norm(f * c) - abs(c) * l2_norm(f)) <= 1e-12 * (1 + abs(c) * l2_norm(f))


def test_schedule_examples():
    s = RegSchedule(1.0, 0.5)
    assert schedule_alpha(s, 3) == 0.125
    assert schedule_alpha(s, 0) == 1.0
    assert s.alpha(2) / s.alpha(3) == 2.0 == s.theta


@pytest.mark.parametrize("alpha0,ratio", [(0.0, 0.5), (1.0, 1.0), (1.0, 0.0), (-1.0, 0.5)])
def test_schedule_rejects_invalid(alpha0, ratio):
    with pytest.raises(ValueError):
        RegSchedule(alpha0, ratio)


def test_add_noise_exact_level_and_deterministic():
    g = Grid(1, 100)
    exact = g.sample(lambda t: 1 + 5 * t)
    noisy = add_noise(exact, 1e-4, 7)
    assert abs(l2_norm(noisy - exact) - 1e-4) <= 1e-16
    assert noisy.equals(add_noise(exact, 1e-4, 7))
    assert not noisy.equals(add_noise(exact, 1e-4, 8))
    with pytest.raises(ValueError):
        add_noise(exact, 0.0, 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-8, 1e2), st.integers(0, 2**31))
def test_add_noise_level_relative(delta, seed):
    g = Grid(2, 4)
    exact = Field.zeros(g)
    assert abs(l2_norm(add_noise(exact, delta, seed)) - delta) <= 1e-12 * delta


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(1, 6), st.data())
def test_field_csv_round_trip_bit_exact(dim, n, data):
    g = Grid(dim, n)
    values = data.draw(arrays(float, g.node_count, elements=st.floats(allow_nan=False, allow_infinity=False)))
    f = Field(g, values)
    back = field_from_csv(f.to_csv())
    assert back.grid == g and back.equals(f)


def test_field_csv_header_and_order_checks(tmp_path):
    f = Grid(2, 2).sample(lambda x, y: x - y)
    text = f.to_csv()
    assert text.splitlines()[0] == "index,coord,coord2,value"
    path = tmp_path / "f.csv"
    path.write_text(text)
    assert field_from_csv(path).equals(f)
    lines = text.splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    with pytest.raises(InvalidFieldError):
        field_from_csv("\n".join(lines) + "\n")
