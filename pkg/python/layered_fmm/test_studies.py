import math

import numpy as np
import pytest

from .errors import DomainError
from .fixtures import FIXTURES_ENV, FrozenReference, freeze_references
from .greens import (KernelFamily, ThreeLayerParams, make_dirichlet_scattered,
                     make_free_space, make_three_layer)
from .sommerfeld import Parts, Variant, integrate_segment
from .studies import (REFERENCE_PIECES, StudyKind, expansion_study, list_presets,
                      load_study_config, place_pair, quad_setup, quadrature_study)

QUAD_PRESET = "impedance-near-interface"


@pytest.fixture
def no_fixtures(tmp_path, monkeypatch):
    """Quadrature studies fall back to the oracle."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(FIXTURES_ENV, raising=False)
    return tmp_path


def write_study(path, text):
    path.write_text(text)
    return path


VALID_STUDY = """\
name: tiny
kind: quad
kernel:
  family: free
  k: 1.0
geometry:
  dx: 1.0
  h: 0.5
sweep:
  laguerre_nodes: [4, 8]
  segment_nodes: [4, 8]
"""


class TestStudyConfig:

    def test_presets_are_listed(self):
        assert {"impedance-near-interface", "impedance-multipole-ratio",
                "three-layer-local-ratio"} <= set(list_presets())

    def test_load_preset(self):
        config = load_study_config(QUAD_PRESET)
        assert config.kind is StudyKind.QUAD
        assert config.kernel_spec().family is KernelFamily.IMPEDANCE
        assert (config.dx, config.h, config.shift_c) == (1.0, 0.1, 2.0)
        assert config.laguerre_nodes[:3] == (4, 8, 12)
        assert config.tol == 1e-13

    def test_ratio_preset(self):
        config = load_study_config("three-layer-local-ratio")
        assert config.kind is StudyKind.LOCAL_RATIO
        assert config.parts is Parts.EVANESCENT
        assert config.variant is Variant.CONTOUR1
        assert config.max_order == 60

    def test_overrides_skip_unset_values(self):
        config = load_study_config(QUAD_PRESET, {"geometry": {"dx": 2.0, "h": None},
                                                 "sweep": {"laguerre_nodes": [10, 20]},
                                                 "tol": None})
        assert (config.dx, config.h) == (2.0, 0.1)
        assert config.laguerre_nodes == (10, 20)
        assert config.tol == 1e-13

    def test_load_from_file(self, tmp_path):
        config = load_study_config(write_study(tmp_path / "tiny.yaml", VALID_STUDY))
        assert config.name == "tiny"
        assert config.shift_c is None
        assert config.tol == 1e-10

    def test_schema_violation(self):
        with pytest.raises(DomainError) as exc_info:
            load_study_config(QUAD_PRESET, {"geometry": {"h": -1.0}})
        assert "geometry/h" in exc_info.value.message

    def test_sweep_must_increase(self, tmp_path):
        text = VALID_STUDY.replace("segment_nodes: [4, 8]", "segment_nodes: [8, 4]")
        with pytest.raises(DomainError):
            load_study_config(write_study(tmp_path / "tiny.yaml", text))

    def test_unknown_source_and_bad_yaml(self, tmp_path):
        with pytest.raises(DomainError):
            load_study_config("no-such-preset")
        with pytest.raises(DomainError):
            load_study_config(write_study(tmp_path / "bad.yaml", "name: [unclosed\n"))


class TestPlacePair:

    def test_free_space(self):
        assert place_pair(make_free_space(1.0), 1.0, 2.0) == ((1.0, 1.0), (0.0, -1.0))

    def test_image_kernel(self):
        target, source = place_pair(make_dirichlet_scattered(1.0), 0.5, 2.0)
        assert target == (0.5, 1.0) and source == (0.0, 1.0)

    def test_three_layer_target_in_middle_of_slab(self):
        spec = make_three_layer(ThreeLayerParams(1.0, 3.0, 1.0, 1.0), "s2t")
        target, source = place_pair(spec, 2.0, 3.0)
        assert target == (2.0, -0.5)
        assert source == (0.0, pytest.approx(2.5))
        assert spec.separation(target, source).h == pytest.approx(3.0)

    def test_unrealizable_height(self):
        spec = make_three_layer(ThreeLayerParams(1.0, 3.0, 1.0, 1.0), "s2t")
        with pytest.raises(DomainError):
            place_pair(spec, 0.0, 0.2)


def test_study_kinds_are_not_interchangeable():
    with pytest.raises(DomainError):
        quad_setup(load_study_config("impedance-multipole-ratio"))
    with pytest.raises(DomainError):
        expansion_study(load_study_config(QUAD_PRESET))


def test_quad_study_uses_frozen_references(no_fixtures):
    """With all references frozen at zero, each segment row is the size of its rule."""
    config = load_study_config(QUAD_PRESET, {"sweep": {"laguerre_nodes": [8, 16],
                                                       "segment_nodes": [4, 8, 16]}})
    path = no_fixtures / "refs.yaml"
    freeze_references({f"{config.name}/{piece}": FrozenReference(f"{config.name}/{piece}", 0j, 0.0)
                       for piece in REFERENCE_PIECES}, path)
    rows = quadrature_study(config, path)
    assert [row.representation for row in rows] == (
        ["original"] * 2 + ["contour1"] * 2 + ["contour2"] * 2
        + ["segmentIV-1"] * 3 + ["segmentIV-2"] * 3)
    setup = quad_setup(config)
    for row in rows[6:9]:
        expected = abs(integrate_segment(setup.spec, setup.geometry, setup.segments["IV1"], row.n)[0])
        assert row.abs_error == pytest.approx(expected, rel=1e-14)


def test_quad_study_near_interface(no_fixtures):
    """Deformed contours converge quickly; the real tail decays only like e^{-0.1 t}."""
    rows = quadrature_study(load_study_config(QUAD_PRESET))
    assert len(rows) == 3 * 14 + 2 * 19
    assert all(math.isfinite(row.abs_error) for row in rows)
    error = {(row.representation, row.n): row.abs_error for row in rows}
    segment_nodes = sorted(n for kind, n in error if kind == "segmentIV-1")
    # contour 1: segment IV is resolved with about 17 Gauss nodes
    assert min(error["segmentIV-1", n] for n in segment_nodes if n <= 20) <= 1e-14
    # contour 2: the same accuracy needs a couple of hundred
    assert all(error["segmentIV-2", n] > 1e-14 for n in segment_nodes if n < 150)
    assert min(error["segmentIV-2", 200], error["segmentIV-2", 240]) <= 1e-14
    # segment III of contour 1 converges algebraically, not to 1e-12 by 48 nodes
    assert error["contour1", 48] < 1e-9
    assert error["contour1", 64] < 1e-10
    assert error["contour1", 64] < error["contour1", 16]
    assert error["original", 48] > 1e-3


def ratio_at(rows, p):
    return next(row.ratio for row in rows if row.p == p)


def test_multipole_ratio_tends_to_radius_over_distance():
    """|T_{p+1}| / |T_p| ~ (r / rho) p / (p + 1) at large p."""
    config = load_study_config("impedance-multipole-ratio")
    rows = expansion_study(config)
    assert len(rows) == 2 * 60 + 1
    assert all(row.converged for row in rows)
    limit = config.radius / math.hypot(config.dx, config.h)
    assert ratio_at(rows, 59) == pytest.approx(limit * 59 / 60, rel=0.05)
    assert ratio_at(rows, -59) == pytest.approx(limit * 59 / 60, rel=0.1)
    assert math.isnan(ratio_at(rows, 60))
    far = [row for row in rows if abs(row.p) >= 30]
    assert all(row.propagating <= 1e-3 * row.evanescent for row in far)


@pytest.mark.slow
def test_three_layer_local_ratio():
    config = load_study_config("three-layer-local-ratio")
    rows = expansion_study(config)
    limit = config.radius / math.hypot(config.dx, config.h)
    assert limit == pytest.approx(0.416, abs=1e-3)
    assert all(row.converged and math.isfinite(row.magnitude) for row in rows)
    for p in range(40, 60):
        assert abs(ratio_at(rows, p) - 0.416) <= 0.01, p
    assert all(np.isnan(row.propagating) for row in rows)
