"""Tests for the model-string parser."""

import pytest

from hdselect.model_parser import (
    ModelSyntaxError,
    ParseOptions,
    expand_token,
    parse_model,
    tokenize,
)

HEADER = ["y", "d", "e", "c1", "c2", "c3", "c10", "z1", "z2", "z3", "w", "state"]


class TestTokens:
    """Tokenizing and name expansion."""

    def test_tokenize(self):
        """Test that parentheses and '=' split without spaces."""
        tokens = tokenize("y d (c1 c2)(e=z1)")
        assert tokens == ["y", "d", "(", "c1", "c2", ")", "(", "e", "=", "z1", ")"]

    def test_glob(self):
        """Test glob expansion in header order."""
        assert expand_token("c*", HEADER) == ["c1", "c2", "c3", "c10"]

    def test_range(self):
        """Test header-order ranges."""
        assert expand_token("c2-c10", HEADER) == ["c2", "c3", "c10"]

    def test_literal_name_with_dash(self):
        """Test that an exact header name containing '-' is taken literally."""
        assert expand_token("a-b", ["a-b", "a", "b"]) == ["a-b"]

    def test_backwards_range(self):
        """Test that a range running backwards raises."""
        with pytest.raises(ModelSyntaxError, match="backwards"):
            expand_token("c3-c1", HEADER)

    def test_unknown_name(self):
        """Test that an unknown variable is named in the error."""
        with pytest.raises(ModelSyntaxError, match="'q'"):
            expand_token("q", HEADER)

    def test_glob_without_match(self):
        """Test that an unmatched glob raises."""
        with pytest.raises(ModelSyntaxError):
            expand_token("x*", HEADER)


class TestParseModel:
    """Role assignment."""

    def test_pds_model(self):
        """Test focal treatment with penalized controls."""
        spec = parse_model("y d (c*)", HEADER)
        assert spec.dependent == "y"
        assert spec.treatments == ["d"]
        assert spec.penalized_controls == ["c1", "c2", "c3", "c10"]
        assert spec.endogenous == []

    def test_iv_model(self):
        """Test an endogenous group with instruments."""
        spec = parse_model("y d (c1 c2) (e = z*)", HEADER)
        assert spec.treatments == ["d", "e"]
        assert spec.endogenous == ["e"]
        assert spec.exogenous_treatments == ["d"]
        assert spec.instruments_penalized == ["z1", "z2", "z3"]

    def test_pnotpen_moves_roles(self):
        """Test that pnotpen names become unpenalized controls or instruments."""
        options = ParseOptions(pnotpen=["c1", "z1", "w"])
        spec = parse_model("y (c1 c2) (e = z1 z2)", HEADER, options)
        assert spec.hd_controls_penalized == ["c2"]
        assert spec.controls_unpenalized == ["c1", "w"]
        assert spec.instruments_unpenalized == ["z1"]
        assert spec.instruments_penalized == ["z2"]

    def test_partial_removed_from_groups(self):
        """Test that partialled names leave the focal and control lists."""
        spec = parse_model("y d (c*)", HEADER, ParseOptions(partial=["c1", "c2"]))
        assert spec.partial_out == ["c1", "c2"]
        assert spec.penalized_controls == ["c3", "c10"]

    def test_aset(self):
        """Test the amelioration set."""
        spec = parse_model("y d (c1 c2)", HEADER, ParseOptions(aset=["w"]))
        assert spec.amelioration_set == ["w"]

    def test_aset_overlap(self):
        """Test that an amelioration variable also among the controls raises."""
        with pytest.raises(ModelSyntaxError, match="both"):
            parse_model("y d (c1 c2)", HEADER, ParseOptions(aset=["c1"]))

    def test_cluster_recorded(self):
        """Test that the cluster option is kept on the ModelSpec."""
        spec = parse_model("y d (c1)", HEADER, ParseOptions(cluster="state", robust=True))
        assert spec.options.cluster == "state"
        assert "state" in spec.used_columns()

    def test_unknown_cluster(self):
        """Test that a cluster variable missing from the data raises."""
        with pytest.raises(ModelSyntaxError, match="Cluster"):
            parse_model("y d (c1)", HEADER, ParseOptions(cluster="county"))

    @pytest.mark.parametrize(
        "model, message",
        [
            ("", "dependent"),
            ("y d (c1", "Unclosed"),
            ("y d c1)", "Unmatched"),
            ("y d ((c1))", "Nested"),
            ("y d ()", "Empty"),
            ("y d = z1", "inside parentheses"),
            ("y (= z1)", "no endogenous"),
            ("y (e = z1 = z2)", "only one"),
            ("y (c1) (c2)", "one group"),
            ("y (e = )", "no instruments"),
            ("y (d = z1) (e = z2)", "Only one"),
        ],
    )
    def test_grammar_errors(self, model, message):
        """Test that malformed models raise with a helpful message."""
        with pytest.raises(ModelSyntaxError, match=message):
            parse_model(model, HEADER)

    def test_focal_and_endogenous(self):
        """Test that a variable both focal and endogenous raises."""
        with pytest.raises(ModelSyntaxError):
            parse_model("y e (e = z1)", HEADER)
