import datetime
from pathlib import Path

import pytest

from . import fixtures
from .errors import FixtureError
from .fixtures import (FIXTURE_FILE, FIXTURES_ENV, FrozenReference, available_references,
                       find_fixture_file, freeze_references, load_references)
from .studies import (REFERENCE_PIECES, freeze_study_references, load_study_config,
                      quad_setup)
from .validation import segment_reference

QUAD_PRESET = "impedance-near-interface"


@pytest.fixture
def isolated(tmp_path, monkeypatch):
    """A working directory with no fixture file and no environment override."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(FIXTURES_ENV, raising=False)
    return tmp_path


def test_freeze_then_load(isolated):
    path = isolated / "refs" / FIXTURE_FILE
    reference = FrozenReference("study/IV1", 0.25 - 1.5j, 3e-15)
    freeze_references({reference.name: reference}, path, command="cli.py validate")

    loaded = load_references(path)
    assert loaded["study/IV1"].value == 0.25 - 1.5j
    assert loaded["study/IV1"].oracle_error == 3e-15
    assert loaded["study/IV1"].command == "cli.py validate"
    assert loaded["study/IV1"].created == datetime.date.today().isoformat()


def test_freeze_merges_with_existing_entries(isolated):
    path = isolated / FIXTURE_FILE
    freeze_references({"a/IV1": FrozenReference("a/IV1", 1j, 1e-14)}, path)
    freeze_references({"b/IV1": FrozenReference("b/IV1", 2.0, 1e-14, created="2020-01-01")}, path)
    loaded = load_references(path)
    assert sorted(loaded) == ["a/IV1", "b/IV1"]
    assert loaded["b/IV1"].created == "2020-01-01"


def test_explicit_path_must_exist(isolated):
    with pytest.raises(FixtureError) as exc_info:
        find_fixture_file(isolated / "missing.yaml")
    assert exc_info.value.path.endswith("missing.yaml")
    with pytest.raises(FixtureError):
        available_references(isolated / "missing.yaml")


def test_environment_directory(isolated, monkeypatch):
    directory = isolated / "elsewhere"
    freeze_references({"x/III1": FrozenReference("x/III1", 0.5, 1e-14)}, directory / FIXTURE_FILE)
    monkeypatch.setenv(FIXTURES_ENV, str(directory))
    assert find_fixture_file() == directory / FIXTURE_FILE
    assert available_references()["x/III1"].value == 0.5


def test_working_directory_fixtures(isolated):
    freeze_references({"y/IV2": FrozenReference("y/IV2", 1.0, 1e-14)},
                      isolated / "fixtures" / FIXTURE_FILE)
    assert "y/IV2" in available_references()


def test_nothing_found(isolated):
    """Discovery without a file is an error for find, an empty mapping for available."""
    try:
        find_fixture_file()
    except FixtureError:
        assert available_references() == {}
    else:
        pytest.skip("a reference file ships with the package")


class TestMalformedFiles:

    def test_not_yaml(self, isolated):
        path = isolated / FIXTURE_FILE
        path.write_text("references: [unclosed\n")
        with pytest.raises(FixtureError):
            load_references(path)

    def test_no_mapping(self, isolated):
        path = isolated / FIXTURE_FILE
        path.write_text("references:\n  - 1\n  - 2\n")
        with pytest.raises(FixtureError):
            load_references(path)

    def test_missing_component(self, isolated):
        path = isolated / FIXTURE_FILE
        path.write_text("references:\n  s/IV1:\n    re: 1.0\n    oracle_error: 1.0e-14\n")
        with pytest.raises(FixtureError) as exc_info:
            load_references(path)
        assert "s/IV1" in exc_info.value.message


@pytest.fixture(scope="session")
def study_references(tmp_path_factory):
    """The packaged reference file, or one frozen from the oracle for this session."""
    packaged = Path(fixtures.__file__).parent / "data" / FIXTURE_FILE
    if packaged.is_file():
        return packaged
    path = tmp_path_factory.mktemp("references") / FIXTURE_FILE
    return freeze_study_references(load_study_config(QUAD_PRESET), path,
                                   "cli.py validate --freeze")


@pytest.mark.slow
def test_frozen_references_match_oracle(study_references):
    config = load_study_config(QUAD_PRESET)
    setup = quad_setup(config)
    references = load_references(study_references)
    for piece in REFERENCE_PIECES:
        frozen = references[f"{config.name}/{piece}"]
        assert frozen.command and frozen.created
        assert frozen.oracle_error <= config.tol
        oracle = segment_reference(setup.spec, setup.geometry, setup.segments[piece], config.tol)
        assert abs(frozen.value - oracle.value) <= 10 * config.tol, piece
