import numpy as np
import pytest

from irgn_banach.core import Grid
from irgn_banach.penalties import Penalty, SquaredL2
from irgn_banach.verify import (RateReport, RateRow, RateTestSpec, derivative_suite, penalty_suite,
                                rate_test, write_rates_csv)


@pytest.mark.parametrize("preset", ["reaction1d-paper", "reaction2d-paper", "diffusion1d-paper"])
def test_derivative_suite_passes(preset):
    report = derivative_suite(preset)
    assert report.passed, report.format()


def test_derivative_suite_at_lower_bound():
    report = derivative_suite("diffusion1d-paper", at_lower_bound=True)
    assert report.passed, report.format()


def test_derivative_suite_detects_adjoint_fault():
    report = derivative_suite("reaction1d-paper", adjoint_fault=lambda q: q * (1 + 1e-6))
    failed = [c.name for c in report.checks if not c.passed]
    assert any("dot" in name for name in failed)


def test_penalty_suite_passes_and_catches_nonconvex():
    assert penalty_suite().passed
    assert penalty_suite(grid=Grid(2, 5)).passed

    class Concave(SquaredL2):
        def _value(self, v):
            return -super()._value(v)

        def _gradient(self, v):
            return -super()._gradient(v)

    g = Grid(1, 20)
    report = penalty_suite([Concave(g)], grid=g)
    assert not report.passed


def test_rate_spec_validation_and_prediction():
    assert RateTestSpec().predicted_slope == 0.5
    assert RateTestSpec(nu=0.5).predicted_slope == pytest.approx(1 / 3)
    for bad in [dict(deltas=[1e-3, 1e-2]), dict(nu=1.5), dict(rule=1), dict(p=1.5), dict(seeds=0)]:
        with pytest.raises(ValueError):
            RateTestSpec(**bad)


def test_rate_report_on_small_spec(tmp_path):
    spec = RateTestSpec(deltas=(1e-2, 1e-3), seeds=2)
    report = rate_test(spec)
    assert len(report.rows) == 4 and report.complete
    assert report.median_errors[1] < report.median_errors[0]
    write_rates_csv(report, tmp_path / "rates.csv")
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "delta,seed,n_delta,error" and len(lines) == 5


def test_rate_report_band_logic():
    spec = RateTestSpec()
    rows = [RateRow(1e-2, 0, 3, 0.1)]
    assert RateReport(spec, rows, [1e-2, 1e-3], [0.1, 0.03], 0.5, True).passed
    assert not RateReport(spec, rows, [1e-2, 1e-3], [0.1, 0.03], 0.7, True).passed
    assert not RateReport(spec, rows, [1e-2, 1e-3], [0.1, 0.03], 0.5, False).passed
    odd = RateTestSpec(nu=0.7)
    assert not RateReport(odd, rows, [1e-2], [0.1], 0.4, True).passed
