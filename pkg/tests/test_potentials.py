import math

import numpy as np
import pytest

from mvsvi.errors import ConstructionError
from mvsvi.potentials import ConvexPotential, YosidaView


def grid_prox_oracle(psi_eval, n, x, lo=-5.0, hi=5.0):
    """Independent prox oracle: dense grid minimization of the objective
    (n/2)(y-x)^2 + psi(y), refined by ternary search on the bracket."""
    ys = np.linspace(lo, hi, 20001)
    obj = 0.5 * n * (ys - x) ** 2 + psi_eval(ys)
    i = int(np.argmin(obj))
    a, b = ys[max(i - 1, 0)], ys[min(i + 1, ys.size - 1)]
    f = lambda y: 0.5 * n * (y - x) ** 2 + float(psi_eval(np.asarray(y)))
    for _ in range(200):
        c, d = a + (b - a) / 3, b - (b - a) / 3
        if f(c) <= f(d):
            b = d
        else:
            a = c
    return 0.5 * (a + b)


class TestEval:
    def test_indicator_inside(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.eval(0.5) == 0.0

    def test_indicator_outside(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.eval(2.0) == math.inf

    def test_abs_power(self):
        psi = ConvexPotential.abs_power(2.0, 0.5)
        assert psi.eval(3.0) == pytest.approx(4.5, abs=1e-15)

    def test_nonnegative_and_zero_at_zero(self):
        for psi in [
            ConvexPotential.indicator_interval(-1.0, 2.0),
            ConvexPotential.abs_power(1.5, 2.0),
            ConvexPotential.max_affine([(1.0, 0.0), (-2.0, 0.0)]),
        ]:
            assert psi.eval(0.0) == 0.0
            xs = np.linspace(-3, 3, 101)
            vals = psi.eval(xs)
            assert np.all(vals >= 0.0)


class TestProx:
    def test_indicator_projection(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.prox(2.0, 4.0) == 1.0

    def test_soft_threshold_derived(self):
        # dense-grid oracle for argmin (1/2)(y-3)^2 + |y|
        psi = ConvexPotential.abs_power(1.0, 1.0)
        oracle = grid_prox_oracle(lambda y: np.abs(y), 1.0, 3.0)
        assert oracle == pytest.approx(2.0, abs=1e-6)
        assert psi.prox(3.0, 1.0) == pytest.approx(2.0, abs=1e-12)

    def test_zero_fixed_point(self):
        for psi in [
            ConvexPotential.indicator_interval(-0.5, 2.0),
            ConvexPotential.abs_power(1.0, 3.0),
            ConvexPotential.max_affine([(2.0, 0.0), (-1.0, 0.0)]),
            ConvexPotential.custom(lambda x: np.abs(x) ** 3),
        ]:
            for n in (0.5, 4.0, 100.0):
                assert psi.prox(0.0, n) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("p,scale", [(1.0, 1.0), (2.0, 0.5), (1.5, 2.0), (3.0, 0.25)])
    def test_abs_power_against_oracle(self, p, scale):
        psi = ConvexPotential.abs_power(p, scale)
        for x in (-2.7, -0.3, 0.9, 3.1):
            for n in (1.0, 16.0):
                oracle = grid_prox_oracle(lambda y: scale * np.abs(y) ** p, n, x)
                assert psi.prox(x, n) == pytest.approx(oracle, abs=1e-6)

    def test_max_affine_against_oracle(self):
        pieces = [(1.0, 0.0), (-1.0, 0.0), (3.0, -2.0)]
        psi = ConvexPotential.max_affine(pieces)

        def ev(y):
            y = np.asarray(y, dtype=float)
            return np.max(y[..., None] * np.array([a for a, _ in pieces])
                          + np.array([b for _, b in pieces]), axis=-1)

        for x in (-2.0, 0.4, 1.1, 2.5):
            for n in (1.0, 8.0):
                assert psi.prox(x, n) == pytest.approx(grid_prox_oracle(ev, n, x), abs=1e-6)

    def test_custom_matches_closed_form(self):
        psi = ConvexPotential.custom(lambda y: np.abs(y))
        ref = ConvexPotential.abs_power(1.0, 1.0)
        xs = np.array([-4.0, -0.9, 0.1, 2.3])
        assert psi.prox(xs, 2.0) == pytest.approx(ref.prox(xs, 2.0), abs=1e-6)

    def test_custom_prox_callback_used(self):
        ref = ConvexPotential.abs_power(2.0, 1.0)
        psi = ConvexPotential.custom(lambda y: np.asarray(y) ** 2,
                                     prox=lambda y, n: np.asarray(y) * n / (n + 2.0))
        assert psi.prox(1.7, 3.0) == pytest.approx(ref.prox(1.7, 3.0), abs=1e-14)

    def test_result_in_domain(self):
        psi = ConvexPotential.custom(
            lambda y: np.zeros_like(np.asarray(y, dtype=float)), domain=(0.0, 1.0)
        )
        assert 0.0 <= psi.prox(2.0, 4.0) <= 1.0
        assert psi.prox(2.0, 4.0) == pytest.approx(1.0, abs=1e-6)


class TestMoreauAndGradient:
    def test_indicator_envelope(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.moreau(2.0, 4.0) == pytest.approx(2.0, abs=1e-15)
        assert psi.moreau(0.5, 4.0) == 0.0

    def test_abs_envelope_derived(self):
        # envelope value at the oracle minimizer 2: (1/2)*1 + |2|
        psi = ConvexPotential.abs_power(1.0, 1.0)
        assert psi.moreau(3.0, 1.0) == pytest.approx(2.5, abs=1e-12)

    def test_gradient_examples(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.yosida_grad(2.0, 4.0) == pytest.approx(4.0, abs=1e-12)
        ap = ConvexPotential.abs_power(1.0, 1.0)
        assert ap.yosida_grad(3.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert ap.yosida_grad(0.0, 7.0) == 0.0

    def test_gradient_monotone_and_sign(self):
        psi = ConvexPotential.indicator_interval(-1.0, 1.0)
        xs = np.linspace(-4, 4, 201)
        g = psi.yosida_grad(xs, 8.0)
        assert np.all(np.diff(g) >= -1e-12)
        assert np.all(g[xs > 1.0] > 0)
        assert np.all(g[xs < -1.0] < 0)
        assert np.all(g[np.abs(xs) <= 1.0] == 0.0)


class TestSubdifferential:
    def test_abs_at_zero(self):
        assert ConvexPotential.abs_power(1.0, 1.0).subdifferential(0.0) == (-1.0, 1.0)

    def test_normal_cone(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.subdifferential(1.0) == (0.0, math.inf)
        assert psi.subdifferential(0.0) == (-math.inf, 0.0)
        assert psi.subdifferential(0.5) == (0.0, 0.0)

    def test_outside_domain_empty(self):
        assert ConvexPotential.indicator_interval(0.0, 1.0).subdifferential(2.0) is None

    def test_max_affine_active_slopes(self):
        psi = ConvexPotential.max_affine([(1.0, 0.0), (-1.0, 0.0)])
        assert psi.subdifferential(0.0) == (-1.0, 1.0)
        assert psi.subdifferential(2.0) == (1.0, 1.0)

    def test_subgradient_inequality_sampled(self):
        rng = np.random.default_rng(3)
        psi = ConvexPotential.max_affine([(1.0, 0.0), (-1.0, 0.0), (3.0, -2.0)])
        xs = rng.uniform(-3, 3, 25)
        for x in xs:
            zlo, zhi = psi.subdifferential(float(x))
            for z in (zlo, zhi):
                xp = rng.uniform(-3, 3, 25)
                assert np.all((xp - x) * z <= psi.eval(xp) - psi.eval(x) + 1e-10)


class TestProject:
    def test_examples(self):
        psi = ConvexPotential.indicator_interval(0.0, 1.0)
        assert psi.project(2.0) == 1.0
        assert psi.project(0.5) == 0.5
        assert ConvexPotential.abs_power(2.0, 1.0).project(7.0) == 7.0


class TestConstruction:
    def test_indicator_needs_zero(self):
        with pytest.raises(ConstructionError):
            ConvexPotential.indicator_interval(1.0, 2.0)

    def test_abs_power_validates(self):
        with pytest.raises(ConstructionError):
            ConvexPotential.abs_power(0.5, 1.0)
        with pytest.raises(ConstructionError):
            ConvexPotential.abs_power(2.0, -1.0)

    def test_max_affine_needs_zero_value(self):
        with pytest.raises(ConstructionError):
            ConvexPotential.max_affine([(1.0, 1.0)])
        with pytest.raises(ConstructionError):
            ConvexPotential.max_affine([(1.0, 0.0)])  # negative for x < 0

    def test_custom_needs_zero(self):
        with pytest.raises(ConstructionError):
            ConvexPotential.custom(lambda x: np.abs(x) + 1.0)

    def test_view_level_positive(self):
        with pytest.raises(ConstructionError):
            YosidaView(ConvexPotential.zero(), 0.0)


def test_view_delegates():
    psi = ConvexPotential.indicator_interval(0.0, 1.0)
    view = YosidaView(psi, 4.0)
    assert view.prox(2.0) == 1.0
    assert view.moreau(2.0) == pytest.approx(2.0)
    assert view.grad(2.0) == pytest.approx(4.0)
