import numpy as np
import pytest

from mlmc_sched.grids import GridHierarchy, inject, prolong, restrict


@pytest.fixture(scope="module")
def hier():
    return GridHierarchy(max_level=3, n0=4)


class TestHierarchy:
    def test_vertex_counts(self, hier):
        assert [hier.vertices(l, "D") for l in range(4)] == [5, 9, 17, 33]
        assert [hier.vertices(l, "embedded") for l in range(4)] == [13, 25, 49, 97]

    def test_unknown_growth_factor_eight(self, hier):
        interior = [(hier.vertices(l, "D") - 2) ** 3 for l in range(4)]
        ratios = [b / a for a, b in zip(interior, interior[1:])]
        # approaches 8 from above as the boundary share shrinks
        assert all(8.0 < r < 14.0 for r in ratios)
        assert ratios == sorted(ratios, reverse=True)
        assert ratios[-1] == pytest.approx(8.0, rel=0.15)

    def test_same_mesh_width_on_both_domains(self, hier):
        for l in range(4):
            d_h = 1.0 / hier.cells(l, "D")
            e_h = 3.0 / hier.cells(l, "embedded")
            assert d_h == pytest.approx(e_h)
            assert hier.h(l) == pytest.approx(d_h)

    def test_nested_vertices(self, hier):
        coarse = hier.coordinates(1, "D")
        fine = hier.coordinates(2, "D")
        assert set(np.round(coarse, 12)) <= set(np.round(fine, 12))

    def test_embed_slice_selects_unit_cube(self, hier):
        for l in range(3):
            coords = hier.coordinates(l, "embedded")
            sl = hier.embed_slice(l)[0]
            selected = coords[sl]
            assert selected[0] == pytest.approx(0.0)
            assert selected[-1] == pytest.approx(1.0)
            assert len(selected) == hier.vertices(l, "D")

    def test_ladders(self, hier):
        assert hier.ladder(3, "D") == [2, 4, 8, 16, 32]
        assert hier.ladder(2, "embedded") == [3, 6, 12, 24, 48]

    def test_validation(self):
        with pytest.raises(ValueError):
            GridHierarchy(n0=3)
        with pytest.raises(ValueError):
            GridHierarchy(max_level=-1)


class TestTransfers:
    def test_prolong_preserves_linears(self, hier):
        # P1 interpolation reproduces linear functions exactly
        x = hier.coordinates(1, "D")
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        coarse = 2.0 * X - 0.5 * Y + 3.0 * Z + 1.0
        fine = prolong(coarse)
        xf = hier.coordinates(2, "D")
        Xf, Yf, Zf = np.meshgrid(xf, xf, xf, indexing="ij")
        np.testing.assert_allclose(fine, 2.0 * Xf - 0.5 * Yf + 3.0 * Zf + 1.0, atol=1e-12)

    def test_restrict_is_transpose_of_prolong(self):
        rng = np.random.default_rng(0)
        coarse = rng.normal(size=(5, 5, 5))
        fine = rng.normal(size=(9, 9, 9))
        lhs = np.sum(prolong(coarse) * fine)
        rhs = np.sum(coarse * restrict(fine))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_inject_picks_shared_vertices(self):
        rng = np.random.default_rng(1)
        fine = rng.normal(size=(9, 9, 9))
        coarse = inject(fine)
        np.testing.assert_array_equal(coarse, fine[::2, ::2, ::2])

    def test_field_shape_validation(self, hier):
        with pytest.raises(ValueError):
            hier.field(1, "D", np.zeros((5, 5, 5)))
        field = hier.field(1, "D", np.zeros((9, 9, 9)))
        assert field.level == 1
