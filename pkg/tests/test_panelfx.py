"""Tests for panel transforms."""

import numpy as np
import pytest

from hdselect.dataset import Dataset, standardize
from hdselect.panelfx import (
    PanelError,
    PanelIndex,
    absorbed_parameters,
    first_difference,
    within_transform,
)


@pytest.fixture
def balanced_panel(rng):
    """Five units observed over four periods with unit effects."""
    units = np.repeat(np.arange(5), 4)
    periods = np.tile(np.arange(4), 5)
    effects = rng.normal(0, 3, 5)[units]
    x = rng.standard_normal(20) + 0.5 * effects
    y = 2.0 * x + effects + rng.standard_normal(20)
    return Dataset({"id": units, "t": periods, "x": x, "y": y})


class TestPanelIndex:
    """Panel index construction."""

    def test_groups(self, balanced_panel):
        """Test group count and membership."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        assert index.n_groups == 5
        assert absorbed_parameters(index) == 5
        assert index.groups()[0.0].tolist() == [0, 1, 2, 3]

    def test_missing_panel_id(self, balanced_panel):
        """Test that a transform without a panel identifier raises."""
        with pytest.raises(PanelError):
            PanelIndex.from_dataset(balanced_panel)

    def test_repeated_time_within_unit(self):
        """Test that duplicate periods within a unit raise."""
        ds = Dataset({"id": [1, 1, 2], "t": [1, 1, 1], "x": [0.0, 1.0, 2.0]})
        with pytest.raises(PanelError, match="repeats"):
            PanelIndex.from_dataset(ds, "id", "t")

    def test_string_panel_ids(self):
        """Test that categorical identifiers work."""
        ds = Dataset({"id": ["a", "b", "a"], "x": [1.0, 2.0, 3.0]})
        index = PanelIndex.from_dataset(ds, "id")
        assert index.n_groups == 2


class TestWithin:
    """Within transformation."""

    def test_group_means_are_zero(self, balanced_panel):
        """Test that transformed columns have zero mean within every unit."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        out = within_transform(balanced_panel, index, ["x", "y"])
        for rows in index.groups().values():
            assert abs(out.column("x")[rows].mean()) <= 1e-12

    def test_idempotent(self, balanced_panel):
        """Test that a second within transform is the identity."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        once = within_transform(balanced_panel, index, ["x", "y"])
        twice = within_transform(once, index, ["x", "y"])
        np.testing.assert_allclose(twice.column("x"), once.column("x"), atol=1e-12)

    def test_matches_dummy_regression(self, balanced_panel):
        """Test that within + OLS equals OLS with a full set of unit dummies."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        out = within_transform(balanced_panel, index, ["x", "y"])
        x_w, y_w = out.column("x"), out.column("y")
        slope_within = float(x_w @ y_w / (x_w @ x_w))

        dummies = (index.codes[:, None] == np.arange(5)[None, :]).astype(float)
        design = np.column_stack([balanced_panel.column("x"), dummies])
        coef, *_ = np.linalg.lstsq(design, balanced_panel.column("y"), rcond=None)
        assert slope_within == pytest.approx(coef[0], abs=1e-8)

    def test_untouched_columns(self, balanced_panel):
        """Test that columns not listed keep their values."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        out = within_transform(balanced_panel, index, ["x"])
        np.testing.assert_array_equal(out.column("y"), balanced_panel.column("y"))

    def test_commutes_with_standardization(self, balanced_panel):
        """Test that within-then-standardize and standardize-then-within fit the same values."""
        index = PanelIndex.from_dataset(balanced_panel, "id", "t")
        y_w = within_transform(balanced_panel, index, ["y"]).column("y")

        first_within, _ = standardize(within_transform(balanced_panel, index, ["x"]), ["x"])
        scaled, _ = standardize(balanced_panel, ["x"])
        first_scaled = within_transform(scaled, index, ["x"])

        fitted = []
        for ds in (first_within, first_scaled):
            x = ds.column("x")
            fitted.append(x * float(x @ y_w / (x @ x)))
        np.testing.assert_allclose(fitted[0], fitted[1], atol=1e-10)


class TestFirstDifference:
    """First differences."""

    def test_simple_sequence(self):
        """Test that (2, 5, 9) differences to (3, 4)."""
        ds = Dataset({"id": [1, 1, 1], "t": [1, 2, 3], "x": [2.0, 5.0, 9.0]})
        index = PanelIndex.from_dataset(ds, "id", "t")
        out = first_difference(ds, index, ["x"])
        assert out.column("x").tolist() == [3.0, 4.0]

    def test_unsorted_rows(self):
        """Test that rows are ordered by unit and time before differencing."""
        ds = Dataset({"id": [2, 1, 1, 2], "t": [2, 2, 1, 1], "x": [10.0, 4.0, 1.0, 7.0]})
        index = PanelIndex.from_dataset(ds, "id", "t")
        out = first_difference(ds, index, ["x"])
        assert out.column("x").tolist() == [3.0, 3.0]

    def test_two_periods_match_within(self, rng):
        """Test that FD and within slopes coincide on a two-period panel."""
        units = np.repeat(np.arange(30), 2)
        periods = np.tile([0, 1], 30)
        effects = rng.normal(0, 2, 30)[units]
        x = rng.standard_normal(60) + effects
        y = 1.5 * x + effects + rng.standard_normal(60)
        ds = Dataset({"id": units, "t": periods, "x": x, "y": y})
        index = PanelIndex.from_dataset(ds, "id", "t")

        fd = first_difference(ds, index, ["x", "y"])
        dx, dy = fd.column("x"), fd.column("y")
        w = within_transform(ds, index, ["x", "y"])
        wx, wy = w.column("x"), w.column("y")
        assert float(dx @ dy / (dx @ dx)) == pytest.approx(float(wx @ wy / (wx @ wx)), abs=1e-10)

    def test_gap_rejected(self):
        """Test that gaps raise unless allowed."""
        ds = Dataset({"id": [1, 1, 1], "t": [1, 2, 4], "x": [1.0, 2.0, 3.0]})
        index = PanelIndex.from_dataset(ds, "id", "t")
        with pytest.raises(PanelError, match="gaps"):
            first_difference(ds, index, ["x"])
        out = first_difference(ds, index, ["x"], allow_gaps=True)
        assert out.n_rows == 2

    def test_needs_time(self):
        """Test that FD without a time identifier raises."""
        ds = Dataset({"id": [1, 1], "x": [1.0, 2.0]})
        index = PanelIndex.from_dataset(ds, "id")
        with pytest.raises(PanelError):
            first_difference(ds, index, ["x"])
