"""Mean feature functions."""

import numpy as np
import pytest

from bayopt.errors import DimensionMismatch, ParseError
from bayopt.initdesign import latin_hypercube
from bayopt.linalg import factorize
from bayopt.means import feature_matrix, features, mean_to_string, parse_mean


class TestParse:
    @pytest.mark.parametrize("expr,dim,m", [
        ("mZero", 3, 0),
        ("mConst", 3, 1),
        ("mLinear", 3, 3),
        ("mLinearConst", 3, 4),
        ("mRadial(5)", 3, 5),
    ])
    def test_feature_counts(self, expr, dim, m):
        assert parse_mean(expr).n_features(dim) == m

    def test_unknown_name(self):
        with pytest.raises(ParseError):
            parse_mean("mBogus")

    def test_bad_radial_count(self):
        with pytest.raises(ParseError):
            parse_mean("mRadial(x)")
        with pytest.raises(ParseError):
            parse_mean("mRadial(0)")

    def test_roundtrip(self):
        for expr in ["mZero", "mConst", "mLinear", "mLinearConst", "mRadial(3)"]:
            assert mean_to_string(parse_mean(expr)) == expr


class TestFeatures:
    def test_const(self):
        spec = parse_mean("mConst")
        np.testing.assert_allclose(features(spec, [0.1, 0.9]), [1.0])

    def test_linear_const(self):
        spec = parse_mean("mLinearConst")
        np.testing.assert_allclose(features(spec, [0.5, 0.5]), [1.0, 0.5, 0.5])

    def test_zero(self):
        spec = parse_mean("mZero")
        assert features(spec, [0.3]).shape == (0,)

    def test_radial_is_one_at_center(self):
        spec = parse_mean("mRadial(2)").bind(2)
        centers = np.asarray(spec.centers)
        for j in range(2):
            phi = features(spec, centers[j])
            assert phi[j] == pytest.approx(1.0)
            assert phi.shape == (2,)

    def test_radial_deterministic_binding(self):
        a = parse_mean("mRadial(4)").bind(3)
        b = parse_mean("mRadial(4)").bind(3)
        assert a.centers == b.centers

    def test_length_always_m(self):
        rng = np.random.default_rng(0)
        for expr in ["mZero", "mConst", "mLinear", "mLinearConst", "mRadial(3)"]:
            spec = parse_mean(expr).bind(2)
            m = spec.n_features(2)
            for _ in range(5):
                assert features(spec, rng.random(2)).shape == (m,)

    def test_feature_matrix_layout(self):
        rng = np.random.default_rng(1)
        X = rng.random((7, 2))
        spec = parse_mean("mLinearConst")
        Phi = feature_matrix(spec, X)
        assert Phi.shape == (3, 7)
        for i in range(7):
            np.testing.assert_allclose(Phi[:, i], features(spec, X[i]))

    def test_full_row_rank_on_lhs_points(self):
        # Phi Phi' factorizes with and without the 1e-12 regularizer for
        # n >= m distinct design points (full row rank, not a jitter effect).
        rng = np.random.default_rng(2)
        for expr in ["mConst", "mLinear", "mLinearConst", "mRadial(4)"]:
            spec = parse_mean(expr).bind(2)
            m = spec.n_features(2)
            X = latin_hypercube(max(m + 2, 4), 2, rng)
            Phi = feature_matrix(spec, X)
            factorize(Phi @ Phi.T + 1e-12 * np.eye(m))
            factorize(Phi @ Phi.T)

    def test_dim_mismatch_for_radial(self):
        spec = parse_mean("mRadial(2)").bind(2)
        with pytest.raises(DimensionMismatch):
            feature_matrix(spec, np.zeros((3, 5)))
