"""
Adaptive fast multipole method for layered-media kernels.

One quadtree covers sources and targets together. Every box keeps the indices
of the sources and of the targets inside its cell, and expands about the center
of the points it holds (a source center for the multipole, a target center for
the local expansion) so that radii are tight and, for image kernels, centers
never leave the layer their points live in.

Interaction lists come from a dual traversal: a (target box, source box) pair
goes to M2L once the modified distance between the two centers reaches
ETA * (r_target + r_source), otherwise it is split, and leaf pairs that never
qualify go to the near list (direct Sommerfeld evaluation). For image kernels
the modified distance is measured to the image box, so neighbor and self boxes
qualify whenever they are far enough from the interface; these are counted
as promoted M2L interactions.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .expansions import (LocalExpansion, MultipoleExpansion, estimate_order, l2t,
                         s2m_arrays)
from .greens import KernelFamily, KernelSpec
from .sommerfeld import eval_batch
from .translations import M2LCache, l2l, m2l_entries, m2l_free_space, m2m

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]

ETA = 2.0
MAX_LEVEL = 40
DEFAULT_MAX_LEAF = 30
DEFAULT_TOL = 1e-6
DIRECT_SUM_LIMIT = 10 ** 7
PAIR_BLOCK = 4096
# fraction of the tolerance given to each of truncation, M2L quadrature and near field
TRUNCATION_SHARE = 0.1
QUADRATURE_SHARE = 0.01


@dataclass(frozen=True)
class Particle:
    position: Point2
    charge: complex


@dataclass(eq=False)
class BoxNode:
    """
    One quadtree cell.

    `interaction` holds (source box, promoted) pairs for M2L; promoted marks
    source boxes whose cell touches (or is) this cell. `near` holds source leaves
    evaluated directly.
    """
    level: int
    center: Point2
    half_width: float
    sources: np.ndarray
    targets: np.ndarray
    parent: Optional['BoxNode'] = None
    children: List['BoxNode'] = field(default_factory=list)
    source_center: Point2 = (0.0, 0.0)
    source_radius: float = 0.0
    target_center: Point2 = (0.0, 0.0)
    target_radius: float = 0.0
    multipole: Optional[MultipoleExpansion] = None
    local: Optional[LocalExpansion] = None
    interaction: List[Tuple['BoxNode', bool]] = field(default_factory=list)
    near: List['BoxNode'] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def touches(self, other: 'BoxNode') -> bool:
        reach = (self.half_width + other.half_width) * (1.0 + 1e-12)
        return (abs(self.center[0] - other.center[0]) <= reach
                and abs(self.center[1] - other.center[1]) <= reach)


@dataclass
class QuadTree:
    root: BoxNode
    boxes: List[BoxNode]
    source_points: np.ndarray
    target_points: np.ndarray
    max_leaf: int

    @property
    def depth(self) -> int:
        return max(box.level for box in self.boxes)

    @property
    def leaves(self) -> List[BoxNode]:
        return [box for box in self.boxes if box.is_leaf]


@dataclass(frozen=True)
class ConvolveJob:
    """phi(x_i) = sum_j q_j g(x_i, y_j) for one kernel."""
    spec: KernelSpec
    source_points: np.ndarray
    charges: np.ndarray
    targets: np.ndarray
    tol: float = DEFAULT_TOL
    max_leaf: int = DEFAULT_MAX_LEAF
    order: Optional[int] = None
    threads: int = 1
    m2l_cache_mb: float = 256.0

    def __post_init__(self):
        object.__setattr__(self, "source_points",
                           np.asarray(self.source_points, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "charges", np.asarray(self.charges, dtype=complex).reshape(-1))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float).reshape(-1, 2))
        if len(self.source_points) != len(self.charges):
            raise DomainError("every source needs one charge", "charges",
                              (len(self.source_points), len(self.charges)))
        if not len(self.source_points) or not len(self.targets):
            raise DomainError("a convolution needs at least one source and one target",
                              "size", (len(self.source_points), len(self.targets)))
        if not self.tol > 0:
            raise DomainError("tolerance must be positive", "tol", self.tol)
        if self.max_leaf < 1:
            raise DomainError("max_leaf must be at least 1", "max_leaf", self.max_leaf)
        if self.threads < 1:
            raise DomainError("threads must be at least 1", "threads", self.threads)

    @classmethod
    def from_particles(cls, spec: KernelSpec, particles: Sequence[Particle], targets,
                       **options) -> 'ConvolveJob':
        positions = np.array([p.position for p in particles], dtype=float).reshape(-1, 2)
        charges = np.array([p.charge for p in particles], dtype=complex)
        return cls(spec, positions, charges, targets, **options)


@dataclass
class FmmStats:
    """Operation counts of one FMM run."""
    boxes: int = 0
    leaves: int = 0
    depth: int = 0
    s2m: int = 0
    m2m: int = 0
    m2l: int = 0
    m2l_promoted: int = 0
    l2l: int = 0
    l2t: int = 0
    s2t_pairs: int = 0
    cache_hits: int = 0
    cache_misses: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


def _tight_ball(points: np.ndarray) -> Tuple[Point2, float]:
    if not len(points):
        return (0.0, 0.0), 0.0
    low, high = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (low + high)
    radius = float(np.max(np.hypot(points[:, 0] - center[0], points[:, 1] - center[1])))
    return (float(center[0]), float(center[1])), radius


def build_tree(points, max_leaf: int = DEFAULT_MAX_LEAF, targets=None) -> QuadTree:
    """
    Adaptive quadtree over sources (and targets, when given).

    A cell is split while it holds more than max_leaf sources or targets; empty
    children are dropped. Cells whose points all coincide stay leaves.

    Raises:
        DomainError: If there are no points or max_leaf < 1
    """
    sources = np.asarray(points, dtype=float).reshape(-1, 2)
    targets = sources if targets is None else np.asarray(targets, dtype=float).reshape(-1, 2)
    if max_leaf < 1:
        raise DomainError("max_leaf must be at least 1", "max_leaf", max_leaf)
    everything = np.vstack([sources, targets])
    if not len(everything):
        raise DomainError("cannot build a tree without points", "points", 0)
    low, high = everything.min(axis=0), everything.max(axis=0)
    center = 0.5 * (low + high)
    half = 0.5 * float(np.max(high - low)) * (1.0 + 1e-12)
    root = BoxNode(0, (float(center[0]), float(center[1])), half,
                   np.arange(len(sources)), np.arange(len(targets)))
    boxes = [root]
    pending = [root]
    while pending:
        box = pending.pop()
        box.source_center, box.source_radius = _tight_ball(sources[box.sources])
        box.target_center, box.target_radius = _tight_ball(targets[box.targets])
        if max(box.sources.size, box.targets.size) <= max_leaf:
            continue
        if box.level >= MAX_LEVEL or box.half_width == 0 or _all_coincide(
                sources[box.sources], targets[box.targets]):
            logger.warning("leaf at level %d keeps %d sources and %d targets (coincident points)",
                           box.level, box.sources.size, box.targets.size)
            continue
        for child in _split(box, sources, targets):
            box.children.append(child)
            boxes.append(child)
            pending.append(child)
    tree = QuadTree(root, boxes, sources, targets, max_leaf)
    logger.debug("quadtree: %d boxes, %d leaves, depth %d", len(boxes), len(tree.leaves),
                 tree.depth)
    return tree


def _all_coincide(sources: np.ndarray, targets: np.ndarray) -> bool:
    points = np.vstack([sources, targets])
    return bool(np.all(points == points[0]))


def _quadrant(points: np.ndarray, center: Point2) -> np.ndarray:
    return (points[:, 0] >= center[0]).astype(int) + 2 * (points[:, 1] >= center[1]).astype(int)


def _split(box: BoxNode, sources: np.ndarray, targets: np.ndarray) -> List[BoxNode]:
    quarter = 0.5 * box.half_width
    source_quadrant = _quadrant(sources[box.sources], box.center)
    target_quadrant = _quadrant(targets[box.targets], box.center)
    children = []
    for quadrant in range(4):
        child_sources = box.sources[source_quadrant == quadrant]
        child_targets = box.targets[target_quadrant == quadrant]
        if not child_sources.size and not child_targets.size:
            continue
        center = (box.center[0] + (quarter if quadrant & 1 else -quarter),
                  box.center[1] + (quarter if quadrant & 2 else -quarter))
        children.append(BoxNode(box.level + 1, center, quarter, child_sources, child_targets,
                                parent=box))
    return children


def modified_center_distance(spec: KernelSpec, target: Point2, source: Point2) -> float:
    if spec.reflectable:
        return math.hypot(target[0] - source[0], target[1] - source[1])
    return float(spec.separation(target, source).rho)


def build_interaction_lists(tree: QuadTree, spec: KernelSpec, eta: float = ETA):
    """Fill `interaction` and `near` of every box by a dual traversal from the root pair."""
    for box in tree.boxes:
        box.interaction = []
        box.near = []
    stack = [(tree.root, tree.root)]
    while stack:
        target, source = stack.pop()
        if not target.targets.size or not source.sources.size:
            continue
        rho = modified_center_distance(spec, target.target_center, source.source_center)
        if rho > 0 and rho >= eta * (target.target_radius + source.source_radius):
            target.interaction.append((source, target is source or target.touches(source)))
        elif target.is_leaf and source.is_leaf:
            target.near.append(source)
        elif source.is_leaf or (not target.is_leaf and target.half_width >= source.half_width):
            stack.extend((child, source) for child in reversed(target.children))
        else:
            stack.extend((target, child) for child in reversed(source.children))


def expansion_order(radius: float, tol: float, k: float, eta: float = ETA,
                    override: Optional[int] = None) -> int:
    """Truncation order of a box of the given radius for interactions at ratio 1/eta."""
    if override is not None:
        return override
    return estimate_order(1.0, eta, tol * TRUNCATION_SHARE, k * radius)


def upward_pass(tree: QuadTree, spec: KernelSpec, charges: np.ndarray, tol: float,
                order: Optional[int] = None, stats: Optional[FmmStats] = None):
    """S2M at the leaves, M2M toward the root; every box with sources gets a multipole."""
    stats = stats or FmmStats()
    k0 = spec.k_source
    for box in sorted(tree.boxes, key=lambda b: -b.level):
        if not box.sources.size:
            box.multipole = None
            continue
        P = expansion_order(box.source_radius, tol, k0, override=order)
        if box.is_leaf:
            coeffs = s2m_arrays(tree.source_points[box.sources], charges[box.sources],
                                box.source_center, k0, P)
            stats.s2m += 1
        else:
            coeffs = np.zeros(2 * P + 1, dtype=complex)
            for child in box.children:
                if child.multipole is not None:
                    coeffs += m2m(child.multipole, box.source_center, P).coeffs
                    stats.m2m += 1
        box.multipole = MultipoleExpansion(box.source_center, k0, coeffs)


def _m2l_contribution(spec: KernelSpec, target: BoxNode, source: BoxNode, P: int, tol: float,
                      cache: M2LCache) -> np.ndarray:
    multipole = source.multipole
    if spec.family is KernelFamily.FREE_SPACE:
        return m2l_free_space(multipole, target.target_center, P).coeffs
    sep = spec.separation(target.target_center, source.source_center)
    key = M2LCache.key(spec, P, multipole.order, sep.dx, sep.a, sep.b,
                       (target.target_radius, source.source_radius))
    entries = cache.get_or_compute(key, lambda: m2l_entries(
        spec, source.source_center, target.target_center, P, multipole.order,
        tol * QUADRATURE_SHARE, target_radius=target.target_radius,
        source_radius=source.source_radius))
    return entries @ multipole.coeffs


def downward_pass(tree: QuadTree, spec: KernelSpec, tol: float, order: Optional[int] = None,
                  threads: int = 1, cache: Optional[M2LCache] = None,
                  stats: Optional[FmmStats] = None):
    """M2L over the interaction lists (in parallel), then L2L from the root down."""
    stats = stats or FmmStats()
    cache = cache or M2LCache()
    k = spec.k_target
    orders = {id(box): expansion_order(box.target_radius, tol, k, override=order)
              for box in tree.boxes}
    tasks = [(box, source) for box in tree.boxes for source, _ in box.interaction]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        contributions = list(pool.map(
            lambda task: _m2l_contribution(spec, task[0], task[1], orders[id(task[0])], tol,
                                           cache), tasks))
    incoming: Dict[int, np.ndarray] = {}
    for (box, _), value in zip(tasks, contributions):
        incoming[id(box)] = incoming.get(id(box), 0) + value
    for box in tree.boxes:
        stats.m2l += len(box.interaction)
        stats.m2l_promoted += sum(1 for _, promoted in box.interaction if promoted)
    stats.cache_hits, stats.cache_misses = cache.hits, cache.misses

    for box in sorted(tree.boxes, key=lambda b: b.level):
        if not box.targets.size:
            box.local = None
            continue
        P = orders[id(box)]
        coeffs = np.zeros(2 * P + 1, dtype=complex)
        if box.parent is not None and box.parent.local is not None:
            coeffs += l2l(box.parent.local, box.target_center, P).coeffs
            stats.l2l += 1
        if id(box) in incoming:
            coeffs += incoming[id(box)]
        box.local = LocalExpansion(box.target_center, k, coeffs)


def _near_field(spec: KernelSpec, tree: QuadTree, charges: np.ndarray, box: BoxNode,
                tol: float) -> np.ndarray:
    source_index = np.concatenate([source.sources for source in box.near])
    targets = tree.target_points[box.targets]
    sources = tree.source_points[source_index]
    values = np.zeros(len(targets), dtype=complex)
    block = max(1, PAIR_BLOCK // len(source_index))
    for start in range(0, len(targets), block):
        chunk = targets[start:start + block]
        pairs_t = np.repeat(chunk, len(sources), axis=0)
        pairs_s = np.tile(sources, (len(chunk), 1))
        kernel = eval_batch(spec, pairs_t, pairs_s, tol).reshape(len(chunk), len(sources))
        values[start:start + block] = kernel @ charges[source_index]
    return values


def evaluate(tree: QuadTree, spec: KernelSpec, charges: np.ndarray, tol: float,
             threads: int = 1, stats: Optional[FmmStats] = None) -> np.ndarray:
    """L2T at every leaf plus direct evaluation of the near lists."""
    stats = stats or FmmStats()
    potentials = np.zeros(len(tree.target_points), dtype=complex)
    leaves = [box for box in tree.leaves if box.targets.size]
    for box in leaves:
        if box.local is not None and np.any(box.local.coeffs):
            potentials[box.targets] += l2t(box.local, tree.target_points[box.targets])
            stats.l2t += box.targets.size
    near_leaves = [box for box in leaves if box.near]
    near_tol = tol * QUADRATURE_SHARE
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(
            lambda box: _near_field(spec, tree, charges, box, near_tol), near_leaves))
    for box, values in zip(near_leaves, results):
        potentials[box.targets] += values
        stats.s2t_pairs += box.targets.size * sum(s.sources.size for s in box.near)
    return potentials


def convolve_with_stats(job: ConvolveJob) -> Tuple[np.ndarray, FmmStats]:
    """
    Run the FMM for a job.

    Raises:
        GeometryError: If a source or target lies outside its layer, or a near pair is singular
        NumericalError: If an M2L matrix or near-field integral does not converge
    """
    spec = job.spec
    spec.check_strips(job.targets, job.source_points)
    tree = build_tree(job.source_points, job.max_leaf, job.targets)
    build_interaction_lists(tree, spec)
    stats = FmmStats(boxes=len(tree.boxes), leaves=len(tree.leaves), depth=tree.depth)
    upward_pass(tree, spec, job.charges, job.tol, job.order, stats)
    cache = M2LCache(job.m2l_cache_mb)
    downward_pass(tree, spec, job.tol, job.order, job.threads, cache, stats)
    potentials = evaluate(tree, spec, job.charges, job.tol, job.threads, stats)
    logger.debug("fmm %s: %s", spec.name, stats.as_dict())
    return potentials, stats


def convolve(job: ConvolveJob) -> np.ndarray:
    """phi at every target of the job, to relative l2 accuracy job.tol."""
    return convolve_with_stats(job)[0]


def direct_sum(job: ConvolveJob, tol: Optional[float] = None) -> np.ndarray:
    """
    Termwise summation of the job with the Sommerfeld evaluator.

    Raises:
        DomainError: If sources * targets exceeds the size guard
    """
    size = len(job.source_points) * len(job.targets)
    if size > DIRECT_SUM_LIMIT:
        raise DomainError(f"direct sum over {size} pairs exceeds the {DIRECT_SUM_LIMIT} guard",
                          "size", size)
    tol = job.tol * QUADRATURE_SHARE if tol is None else tol
    job.spec.check_strips(job.targets, job.source_points)
    sources = job.source_points
    potentials = np.empty(len(job.targets), dtype=complex)
    block = max(1, PAIR_BLOCK // len(sources))
    for start in range(0, len(job.targets), block):
        chunk = job.targets[start:start + block]
        pairs_t = np.repeat(chunk, len(sources), axis=0)
        pairs_s = np.tile(sources, (len(chunk), 1))
        kernel = eval_batch(job.spec, pairs_t, pairs_s, tol).reshape(len(chunk), len(sources))
        potentials[start:start + block] = kernel @ job.charges
    return potentials
