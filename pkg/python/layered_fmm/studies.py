"""
Convergence studies behind the quad-study and expansion-study commands.

A study is described by a YAML file (or one of the bundled presets) validated
against study.schema.json. The quadrature study measures how each
representation of the positive evanescent tail converges with the rule size;
the expansion studies tabulate |J_p(k r) Phi_p| or |J_p(k r) Psi_p| and the
ratio of consecutive terms, which should approach r / rho.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from jsonschema import ValidationError, validate

from .errors import DomainError, NumericalError
from .expansions import phi_terms, psi_terms
from .fixtures import FrozenReference, available_references, freeze_references
from .greens import KernelSpec, make_kernel
from .sommerfeld import (ContourPlan, PairGeometry, Parts, Variant, admissible_separation,
                         choose_direction, default_shift, integrate_segment, tail_segments)
from .special_functions import bessel_j
from .validation import OracleResult, segment_reference

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

PRESETS_DIR = Path(__file__).parent / 'presets'
DEFAULT_STUDY_TOL = 1e-10
REFERENCE_PIECES = ("IV1", "III1", "IV2", "III2")


class StudyKind(Enum):
    QUAD = "quad"
    MULTIPOLE_RATIO = "multipole-ratio"
    LOCAL_RATIO = "local-ratio"


@dataclass(frozen=True)
class StudyConfig:
    """A validated study description."""
    name: str
    kind: StudyKind
    kernel: Dict[str, Any]
    dx: float
    h: float
    radius: float = 0.0
    variant: Variant = Variant.CONTOUR1
    shift_c: Optional[float] = None
    parts: Parts = Parts.ALL
    laguerre_nodes: Tuple[int, ...] = ()
    segment_nodes: Tuple[int, ...] = ()
    max_order: int = 0
    tol: float = DEFAULT_STUDY_TOL

    def kernel_spec(self) -> KernelSpec:
        return make_kernel(**self.kernel)


def find_schema_file() -> Path:
    """
    Locate study.schema.json at the repository root or in the working directory.

    Raises:
        FileNotFoundError: If the schema cannot be found
    """
    potential_paths = [
        Path(__file__).parent.parent.parent / 'study.schema.json',
        Path('study.schema.json'),
    ]
    for path in potential_paths:
        if path.is_file():
            return path
    raise FileNotFoundError("Could not find study.schema.json")


def list_presets() -> List[str]:
    return sorted(path.stem for path in PRESETS_DIR.glob('*.yaml'))


def _resolve_config_path(source: Union[str, Path]) -> Path:
    path = Path(source)
    if path.is_file():
        return path
    preset = PRESETS_DIR / f"{source}.yaml"
    if preset.is_file():
        return preset
    raise DomainError(f"'{source}' is neither a study file nor a preset "
                      f"({', '.join(list_presets())})", "config", str(source))


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Nested merge that skips None values, so unset CLI flags leave the file alone."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            merged[key] = _merge(merged.get(key) or {}, value)
        else:
            merged[key] = value
    return merged


def _check_increasing(name: str, values: List[int]):
    if any(b <= a for a, b in zip(values[:-1], values[1:])):
        raise DomainError(f"sweep '{name}' must be strictly increasing", name, values)


def load_study_config(source: Union[str, Path],
                      overrides: Optional[Dict[str, Any]] = None) -> StudyConfig:
    """
    Load a study from a YAML file or a preset name and validate it.

    Args:
        source: Path to a YAML file or the name of a bundled preset
        overrides: Nested mapping laid out like the YAML file; None values are ignored

    Raises:
        DomainError: If the file is unknown, is not valid YAML, fails the schema,
            or has a sweep that is not increasing
    """
    path = _resolve_config_path(source)
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise DomainError(f"Failed to parse study file {path}: {e}", "config", str(path))
    data = _merge(data, overrides or {})

    with open(find_schema_file(), 'r') as f:
        schema = json.load(f)
    try:
        validate(data, schema)
    except ValidationError as e:
        where = "/".join(str(part) for part in e.absolute_path) or "<root>"
        raise DomainError(f"Invalid study {path.name} at {where}: {e.message}", where,
                          e.instance)

    sweep = data.get("sweep", {})
    for name in ("laguerre_nodes", "segment_nodes"):
        _check_increasing(name, sweep.get(name, []))
    geometry = data["geometry"]
    contour = data.get("contour", {})
    return StudyConfig(
        name=data["name"],
        kind=StudyKind(data["kind"]),
        kernel=dict(data["kernel"]),
        dx=float(geometry["dx"]),
        h=float(geometry["h"]),
        radius=float(geometry.get("radius", 0.0)),
        variant=Variant(contour.get("variant", Variant.CONTOUR1.value)),
        shift_c=contour.get("shift_c"),
        parts=Parts(contour.get("parts", Parts.ALL.value)),
        laguerre_nodes=tuple(sweep.get("laguerre_nodes", ())),
        segment_nodes=tuple(sweep.get("segment_nodes", ())),
        max_order=int(sweep.get("max_order", 0)),
        tol=float(data.get("tol", DEFAULT_STUDY_TOL)),
    )


def place_pair(spec: KernelSpec, dx: float, h: float) -> Tuple[Point2, Point2]:
    """
    A target and a source with canonical separation (dx, h) inside their layers.

    The target sits in the middle of a finite layer, otherwise h/2 away from
    the layer's interface (at y = h/2 for free space).

    Raises:
        DomainError: If the requested h cannot be realized for this kernel
    """
    lo, hi = spec.target_strip
    if math.isfinite(lo) and math.isfinite(hi):
        y = 0.5 * (lo + hi)
    elif math.isfinite(lo):
        y = lo + 0.5 * h
    elif math.isfinite(hi):
        y = hi - 0.5 * h
    else:
        y = 0.5 * h
    a = spec.orientation * y + spec.offset_d
    y0 = -spec.sign * (h - a)
    low0, high0 = spec.source_strip
    if not low0 <= y0 <= high0:
        raise DomainError(f"h={h:g} puts the source at y0={y0:g}, outside its layer "
                          f"{spec.source_strip} for {spec.name}", "h", h)
    return (float(dx), float(y)), (0.0, float(y0))


# ---------------------------------------------------------------------------
# Quadrature study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadRow:
    representation: str
    n: int
    abs_error: float


@dataclass
class QuadSetup:
    """Geometry and the positive-tail segments of the three representations."""
    spec: KernelSpec
    geometry: PairGeometry
    segments: Dict[str, Any] = field(default_factory=dict)


def quad_setup(config: StudyConfig) -> QuadSetup:
    """
    Build the single-pair geometry and the tail segments used by the quadrature study.

    Raises:
        DomainError: If the study is not a quadrature study or the geometry is not realizable
    """
    if config.kind is not StudyKind.QUAD:
        raise DomainError(f"study {config.name} is a {config.kind.value} study", "kind",
                          config.kind.value)
    spec = config.kernel_spec()
    target, source = place_pair(spec, config.dx, config.h)
    sep = admissible_separation(spec, spec.separation(np.asarray([target]), np.asarray([source])),
                                [target], [source])
    shift_c = config.shift_c or float(default_shift(spec, sep.rho)[0])
    geometry = PairGeometry.build(spec, sep, shift_c)
    direction = choose_direction(config.dx, config.h)

    def tail(variant: Variant):
        plan = ContourPlan(direction, variant, shift_c, graded=False)
        return tail_segments(spec, geometry, plan, tail_sign=1)

    setup = QuadSetup(spec, geometry)
    [setup.segments["original"]] = tail(Variant.ORIGINAL)
    setup.segments["IV1"], setup.segments["III1"] = tail(Variant.CONTOUR1)
    setup.segments["IV2"], setup.segments["III2"] = tail(Variant.CONTOUR2)
    return setup


def reference_values(config: StudyConfig,
                     setup: Optional[QuadSetup] = None) -> Dict[str, OracleResult]:
    """Oracle values of the four contour pieces (IV1, III1, IV2, III2) of a quadrature study."""
    setup = setup or quad_setup(config)
    references = {}
    for piece in REFERENCE_PIECES:
        references[piece] = segment_reference(setup.spec, setup.geometry,
                                              setup.segments[piece], config.tol)
        logger.info("%s/%s: %s (oracle error %.2g)", config.name, piece,
                    references[piece].value, references[piece].estimated_error)
    return references


def freeze_study_references(config: StudyConfig, path: Union[str, Path],
                            command: str = "") -> Path:
    """Compute the oracle references of a quadrature study and write them to a fixture file."""
    frozen = {}
    for piece, result in reference_values(config).items():
        name = f"{config.name}/{piece}"
        frozen[name] = FrozenReference(name, result.value, result.estimated_error, command)
    return freeze_references(frozen, path, command)


def _references(config: StudyConfig, setup: QuadSetup,
                fixture_path: Optional[Union[str, Path]]) -> Dict[str, complex]:
    frozen = available_references(fixture_path)
    values = {piece: frozen[f"{config.name}/{piece}"].value for piece in REFERENCE_PIECES
              if f"{config.name}/{piece}" in frozen}
    missing = [piece for piece in REFERENCE_PIECES if piece not in values]
    for piece in missing:
        result = segment_reference(setup.spec, setup.geometry, setup.segments[piece], config.tol)
        if result.flagged:
            raise NumericalError(f"reference for {config.name}/{piece} did not reach "
                                 f"{config.tol:g}", estimate=result.value,
                                 detail={"oracle_error": result.estimated_error})
        values[piece] = result.value
    return values


def quadrature_study(config: StudyConfig,
                     fixture_path: Optional[Union[str, Path]] = None) -> List[QuadRow]:
    """
    Absolute error of every representation of the positive evanescent tail against the reference.

    original uses Gauss-Laguerre on the real tail; contour1 and contour2 add the
    reference value of segment IV to an n-point rule on segment III; the two
    segmentIV rows measure n-point Gauss-Legendre on segment IV alone.

    Raises:
        DomainError: For a non-quadrature study or an out-of-range rule size
        NumericalError: If a reference cannot be computed to the study tolerance
    """
    setup = quad_setup(config)
    ref = _references(config, setup, fixture_path)
    total = ref["IV1"] + ref["III1"]
    logger.debug("%s: contour 1 and 2 references differ by %.3g", config.name,
                 abs(total - ref["IV2"] - ref["III2"]))

    def rule(piece: str, n: int) -> complex:
        return complex(integrate_segment(setup.spec, setup.geometry, setup.segments[piece], n)[0])

    rows: List[QuadRow] = []
    for n in config.laguerre_nodes:
        rows.append(QuadRow("original", n, abs(rule("original", n) - total)))
    for n in config.laguerre_nodes:
        rows.append(QuadRow("contour1", n, abs(ref["IV1"] + rule("III1", n) - total)))
    for n in config.laguerre_nodes:
        rows.append(QuadRow("contour2", n, abs(ref["IV2"] + rule("III2", n) - total)))
    for n in config.segment_nodes:
        rows.append(QuadRow("segmentIV-1", n, abs(rule("IV1", n) - ref["IV1"])))
    for n in config.segment_nodes:
        rows.append(QuadRow("segmentIV-2", n, abs(rule("IV2", n) - ref["IV2"])))
    return rows


# ---------------------------------------------------------------------------
# Expansion studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioRow:
    """
    One expansion order. ratio is the outward ratio |T_{p+1}|/|T_p| for p >= 0
    and |T_{p-1}|/|T_p| for p < 0; NaN where undefined or not converged.
    """
    p: int
    magnitude: float
    ratio: float
    propagating: float
    evanescent: float
    converged: bool = True


def _basis_parts(config: StudyConfig, spec: KernelSpec, orders: np.ndarray,
                 point: Point2, center: Point2, parts: Parts) -> np.ndarray:
    if config.kind is StudyKind.MULTIPOLE_RATIO:
        return phi_terms(orders, point, spec, center, config.tol, config.variant, parts)
    return psi_terms(orders, point, spec, center, config.tol, config.variant, parts)


def _basis_with_fallback(config, spec, orders, point, center, parts) -> Tuple[np.ndarray, np.ndarray]:
    """Values for all orders at once; on failure retry order by order and mark the failures."""
    try:
        return _basis_parts(config, spec, orders, point, center, parts), np.ones(len(orders), bool)
    except NumericalError as e:
        logger.warning("%s: %s part failed for the full order range (%s), retrying per order",
                       config.name, parts.value, e.message)
    values = np.full(len(orders), np.nan, dtype=complex)
    ok = np.zeros(len(orders), dtype=bool)
    for i, p in enumerate(orders):
        try:
            values[i] = _basis_parts(config, spec, np.array([p]), point, center, parts)[0]
            ok[i] = True
        except NumericalError as e:
            logger.warning("%s: order %d did not converge: %s", config.name, p, e.message)
    return values, ok


def expansion_study(config: StudyConfig) -> List[RatioRow]:
    """
    Terms J_p(k r) Phi_p (multipole-ratio) or J_p(k r) Psi_p (local-ratio) for |p| <= max_order.

    For a multipole study the target sits at the placed target point and the
    expansion center at the placed source; a local study uses the placed target
    as the expansion center. k is the wavenumber of the layer the expansion lives in.
    With parts=all the propagating and evanescent parts are reported separately.

    Raises:
        DomainError: For a quadrature study or a geometry that cannot be placed
    """
    if config.kind is StudyKind.QUAD:
        raise DomainError(f"study {config.name} is a quadrature study", "kind", config.kind.value)
    spec = config.kernel_spec()
    target, source = place_pair(spec, config.dx, config.h)
    if config.kind is StudyKind.MULTIPOLE_RATIO:
        point, center, k = target, source, spec.k_source
    else:
        point, center, k = source, target, spec.k_target
    orders = np.arange(-config.max_order, config.max_order + 1)
    bessel = np.asarray(bessel_j(orders, k * config.radius))

    nan = np.full(len(orders), np.nan, dtype=complex)
    propagating, evanescent = nan, nan
    ok = np.ones(len(orders), dtype=bool)
    if config.parts is not Parts.EVANESCENT:
        propagating, ok_prop = _basis_with_fallback(config, spec, orders, point, center,
                                                    Parts.PROPAGATING)
        ok &= ok_prop
    if config.parts is not Parts.PROPAGATING:
        evanescent, ok_evan = _basis_with_fallback(config, spec, orders, point, center,
                                                   Parts.EVANESCENT)
        ok &= ok_evan
    total = np.zeros(len(orders), dtype=complex)
    if config.parts is not Parts.EVANESCENT:
        total += propagating
    if config.parts is not Parts.PROPAGATING:
        total += evanescent
    terms = np.where(ok, np.abs(bessel * total), np.nan)

    rows = []
    for i, p in enumerate(orders):
        outward = i + 1 if p >= 0 else i - 1
        if 0 <= outward < len(orders) and terms[i] > 0:
            ratio = terms[outward] / terms[i]
        else:
            ratio = math.nan
        rows.append(RatioRow(int(p), float(terms[i]), float(ratio),
                             float(np.abs(bessel[i] * propagating[i])),
                             float(np.abs(bessel[i] * evanescent[i])),
                             bool(ok[i])))
    return rows
