import json

import numpy as np
import pytest

from semhex import counters as cm
from semhex.fine import FineSchwarz
from semhex.gll import GllBasis
from semhex.mesh import build_index_maps, generate_cube_mesh
from semhex.operator import SemOperator


def test_closed_forms():
    assert cm.residual_flops(32768, 3) == 138_412_032
    assert cm.residual_words(1, 1) == 86
    assert cm.residual_words(1, 1, "on_the_fly") == 3 * 8 + 4 + 2
    assert cm.subdomain_flops(1, 1) == 6 * 4**4 + 15 * 4**3
    assert cm.geometry_flops(2, 1) == 2 * 242 * 8


def test_intensity_ratio_near_seven_at_order_four():
    ratio = cm.residual_flops(1, 4) / cm.residual_words(1, 4)
    assert ratio == pytest.approx(9750 / 1277)
    assert abs(ratio - 7) < 1


@pytest.fixture(scope="module")
def cube4():
    return generate_cube_mesh(4, "distorted_elements")


@pytest.mark.parametrize("n", range(2, 8))
def test_residual_contraction_flops_exact(cube4, n):
    b = GllBasis.build(n)
    maps = build_index_maps(cube4, n)
    op = SemOperator(cube4, b, maps)
    op(np.ones(maps.n_global))
    rep = op.counters_report()
    assert rep.flops_measured == rep.flops_model == cm.residual_flops(64, n)
    assert rep.bytes_model == 8 * cm.residual_words(64, n)


@pytest.mark.parametrize("n", range(2, 8))
def test_subdomain_flops_exact(cube4, n):
    b = GllBasis.build(n)
    maps = build_index_maps(cube4, n)
    fine = FineSchwarz(cube4, b, maps)
    fine(np.ones(maps.n_global))
    fine(np.ones(maps.n_global))
    rep = fine.counters_report()
    assert rep.calls == 2
    assert rep.flops_measured == rep.flops_model == 2 * cm.subdomain_flops(64, n)


def test_on_the_fly_reports_geometry_separately(cube4):
    b = GllBasis.build(3)
    maps = build_index_maps(cube4, 3)
    op = SemOperator(cube4, b, maps, variant="on_the_fly", word_size=4)
    op(np.ones(maps.n_global))
    rep = op.counters_report()
    assert rep.includes_geometry_flops
    assert rep.flops_measured == cm.residual_flops(64, 3)
    assert rep.geometry_flops_model == cm.geometry_flops(64, 3)
    assert rep.geometry_flops_measured > 0
    assert rep.bytes_model == 4 * cm.residual_words(64, 3, "on_the_fly")
    assert rep.intensity_model == pytest.approx((rep.flops_model + rep.geometry_flops_model) / rep.bytes_model)


def test_report_json_fields(cube4):
    b = GllBasis.build(2)
    op = SemOperator(cube4, b, build_index_maps(cube4, 2))
    d = json.loads(op.counters_report().to_json())
    for key in ("variant", "n", "N_E", "flops_model", "flops_measured", "bytes_model", "wall_seconds"):
        assert key in d


def test_tally_reset():
    t = cm.Tally()
    t.add_contraction(3, 4)
    t.add_words(5)
    t.reset()
    assert (t.madds, t.words, t.calls) == (0, 0, 0)
