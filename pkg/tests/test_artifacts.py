import xml.etree.ElementTree as ET

from hypothesis import given, settings
from hypothesis import strategies as st

from irgn_banach.artifacts import (history_from_csv, history_to_csv, plot_svg, sweep_from_csv,
                                   sweep_to_csv)
from irgn_banach.core import Grid, IterationRecord

reals = st.floats(allow_nan=False, allow_infinity=False)
records = st.builds(IterationRecord, st.integers(0, 100), st.floats(1e-30, 1.0), st.floats(0, 1e3),
                    st.integers(0, 10**6), st.none() | reals)


@settings(max_examples=50, deadline=None)
@given(rs=st.lists(records, max_size=10))
def test_history_round_trip(rs, tmp_path_factory):
    path = tmp_path_factory.mktemp("h") / "history.csv"
    path.write_text(history_to_csv(rs))
    assert history_from_csv(path) == rs


sweep_rows = st.fixed_dictionaries({
    "delta": st.floats(1e-9, 1.0), "seed": st.integers(0, 1000),
    "n1": st.none() | st.integers(0, 60), "n2": st.none() | st.integers(0, 60),
    "n3": st.none() | st.integers(0, 60),
    "stop_reason": st.sampled_from(["rule-satisfied", "max_outer", "inner-failure"]),
    "error": st.none() | st.floats(0, 10),
})


@settings(max_examples=50, deadline=None)
@given(rows=st.lists(sweep_rows, max_size=8))
def test_sweep_round_trip(rows, tmp_path_factory):
    path = tmp_path_factory.mktemp("s") / "sweep.csv"
    path.write_text(sweep_to_csv(rows))
    assert sweep_from_csv(path) == rows


def test_svg_is_well_formed():
    g1 = Grid(1, 10)
    truth = g1.sample(lambda t: t)
    ET.fromstring(plot_svg(truth * 2.0, truth, "line"))
    ET.fromstring(plot_svg(truth * 0.0))
    g2 = Grid(2, 4)
    root = ET.fromstring(plot_svg(g2.sample(lambda x, y: x * y), g2.sample(lambda x, y: x), "heat"))
    assert root.tag.endswith("svg")
