"""Building layouts, planar ray casting and grid navigation.

Coordinates are meters in a top-down frame. Walls are zero-thickness
segments; occupants seen by the ray sensor are discs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import yaml
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

EXTERIOR = "exterior"
INTERIOR = "interior"

RAY_COUNT = 7
FAN_HALF_ANGLE = math.radians(70.0)
DEFAULT_RAY_RANGE = 20.0
TARGET_RADIUS = 0.3
NAV_CELL = 0.25
# > half a cell diagonal, so no grid edge between free cells can cross a wall
NAV_CLEARANCE = 0.18
AREA_PER_OCCUPANT_M2 = 13.94
_SNAP = 1e-6


class Tag(enum.IntEnum):
    NONE = -1
    TARGET = 0
    INTERIOR_WALL = 1
    EXTERIOR_WALL = 2


class LayoutError(ValueError):
    pass


class LayoutParseError(LayoutError):
    pass


class LayoutValidationError(LayoutError):
    pass


class UnreachableError(RuntimeError):
    pass


def vec(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite point {p!r}")
    return a


@dataclass(frozen=True)
class WallSegment:
    a: tuple[float, float]
    b: tuple[float, float]
    kind: str = INTERIOR

    def __post_init__(self):
        if self.kind not in (EXTERIOR, INTERIOR):
            raise ValueError(f"wall kind must be exterior or interior, got {self.kind!r}")
        if math.dist(self.a, self.b) <= 0:
            raise ValueError(f"degenerate wall {self.a}->{self.b}")

    @property
    def length(self) -> float:
        return math.dist(self.a, self.b)

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.a[0] + self.b[0]) / 2, (self.a[1] + self.b[1]) / 2)


@dataclass(frozen=True)
class Exit:
    id: int
    portal: WallSegment
    open: bool = True


@dataclass(frozen=True)
class HidingPlace:
    center: tuple[float, float]
    radius: float = 1.0


@dataclass(frozen=True)
class SpawnZone:
    center: tuple[float, float]
    side: float = 4.0

    def corners(self) -> np.ndarray:
        h = self.side / 2
        cx, cy = self.center
        return np.array([[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.center) + rng.uniform(-self.side / 2, self.side / 2, size=2)


@dataclass(frozen=True)
class Goal:
    """Something an occupant can walk to: the entrance, an exit or a hiding place."""

    kind: str  # "entrance" | "exit" | "hiding"
    ref: int  # exit id, hiding place index, 0 for the entrance
    point: tuple[float, float]

    @property
    def label(self) -> str:
        if self.kind == "entrance":
            return "entrance"
        return f"{self.kind}-{self.ref}"

    @property
    def evacuates(self) -> bool:
        return self.kind != "hiding"


@dataclass(frozen=True)
class RayHit:
    hit: bool
    distance: float
    tag: Tag


@dataclass(frozen=True)
class BuildingLayout:
    walls: tuple[WallSegment, ...]
    entrance: WallSegment
    exits: tuple[Exit, ...]
    hiding_places: tuple[HidingPlace, ...]
    spawn_zone: SpawnZone
    declared_area_m2: float
    name: str = "layout"
    # shared across exit-mask variants; geometry never changes between them
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    # -- derived geometry -------------------------------------------------
    @cached_property
    def perimeter(self) -> np.ndarray:
        return _trace_perimeter(self)

    @cached_property
    def area(self) -> float:
        p = self.perimeter
        x, y = p[:, 0], p[:, 1]
        return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        p = self.perimeter
        return (float(p[:, 0].min()), float(p[:, 1].min()), float(p[:, 0].max()), float(p[:, 1].max()))

    @property
    def occupancy_limit(self) -> int:
        return int(self.area // AREA_PER_OCCUPANT_M2)

    @property
    def open_exit_ids(self) -> frozenset[int]:
        return frozenset(e.id for e in self.exits if e.open)

    @property
    def exit_ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.exits)

    def exit(self, exit_id: int) -> Exit:
        for e in self.exits:
            if e.id == exit_id:
                return e
        raise KeyError(f"no exit with id {exit_id}")

    def with_open_exits(self, open_ids: Iterable[int]) -> "BuildingLayout":
        open_ids = set(open_ids)
        unknown = open_ids - set(self.exit_ids)
        if unknown:
            raise KeyError(f"unknown exit ids {sorted(unknown)}")
        exits = tuple(replace(e, open=e.id in open_ids) for e in self.exits)
        return replace(self, exits=exits)

    @cached_property
    def ray_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(a, b, tag) arrays of everything rays can hit; closed exits read as exterior wall."""
        segs = [(w.a, w.b, Tag.INTERIOR_WALL if w.kind == INTERIOR else Tag.EXTERIOR_WALL) for w in self.walls]
        segs += [(e.portal.a, e.portal.b, Tag.EXTERIOR_WALL) for e in self.exits if not e.open]
        return _seg_arrays(segs)

    @cached_property
    def collision_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Shooter collision geometry; open portals block movement but carry no wall tag."""
        a, b, tag = self.ray_segments
        portals = [self.entrance] + [e.portal for e in self.exits if e.open]
        pa = np.array([p.a for p in portals], dtype=float)
        pb = np.array([p.b for p in portals], dtype=float)
        return (np.vstack([a, pa]), np.vstack([b, pb]), np.concatenate([tag, np.full(len(portals), Tag.NONE)]))

    def goals(self, open_exits: Iterable[int] | None = None) -> list[Goal]:
        """Candidate destinations in fixed order: hiding places, open exits by id, entrance."""
        if open_exits is None:
            open_exits = self.open_exit_ids
        open_exits = set(open_exits)
        out = [Goal("hiding", i, tuple(h.center)) for i, h in enumerate(self.hiding_places)]
        for e in sorted(self.exits, key=lambda e: e.id):
            if e.id in open_exits:
                out.append(Goal("exit", e.id, self.portal_goal_point(e.portal)))
        out.append(Goal("entrance", 0, self.portal_goal_point(self.entrance)))
        return out

    def portal_goal_point(self, portal: WallSegment, inset: float = 0.5) -> tuple[float, float]:
        key = ("goal_point", portal.a, portal.b, inset)
        if key not in self.cache:
            m = np.asarray(portal.midpoint)
            d = np.subtract(portal.b, portal.a) / portal.length
            n = np.array([-d[1], d[0]])
            cand = m + inset * n
            if not points_in_polygon(cand[None], self.perimeter)[0]:
                cand = m - inset * n
            self.cache[key] = (float(cand[0]), float(cand[1]))
        return self.cache[key]

    @property
    def nav(self) -> "NavGrid":
        if "nav" not in self.cache:
            self.cache["nav"] = NavGrid(self)
        return self.cache["nav"]

    def contains(self, p) -> bool:
        return bool(points_in_polygon(np.asarray(p, float)[None], self.perimeter)[0])

    def is_walkable(self, p) -> bool:
        return self.nav.is_walkable(p)


def _seg_arrays(segs):
    if not segs:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
    a = np.array([s[0] for s in segs], dtype=float)
    b = np.array([s[1] for s in segs], dtype=float)
    tag = np.array([int(s[2]) for s in segs], dtype=int)
    return a, b, tag


# -- geometry primitives ---------------------------------------------------

def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over points."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(n):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % n]
            crosses = (y1 > y) != (y2 > y)
            xint = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            inside ^= crosses & (x < xint)
    return inside


def point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances, shape (len(pts), len(a))."""
    pts = np.atleast_2d(pts)
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("pij,ij->pi", ap, ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(pts[:, None, :] - closest, axis=-1)


def build_ray_fan(heading: float) -> np.ndarray:
    """Seven unit directions, evenly spaced across +/-70 degrees around ``heading``."""
    offsets = np.linspace(-FAN_HALF_ANGLE, FAN_HALF_ANGLE, RAY_COUNT)
    ang = heading + offsets
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def cast_rays(
    origin: np.ndarray,
    dirs: np.ndarray,
    seg_a: np.ndarray,
    seg_b: np.ndarray,
    seg_tag: np.ndarray,
    targets: np.ndarray | None = None,
    target_radius: float = TARGET_RADIUS,
    max_range: float = DEFAULT_RAY_RANGE,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit per ray. Returns (distance, tag); misses report max_range and Tag.NONE."""
    dirs = np.atleast_2d(dirs)
    k = len(dirs)
    best = np.full(k, np.inf)
    tag = np.full(k, int(Tag.NONE))
    if len(seg_a):
        e = seg_b - seg_a  # (S,2)
        w = seg_a[None, :, :] - origin  # (1,S,2)
        dx, dy = dirs[:, 0:1], dirs[:, 1:2]  # (K,1)
        denom = dx * e[None, :, 1] - dy * e[None, :, 0]  # cross(d, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / denom
            u = (w[..., 0] * dy - w[..., 1] * dx) / denom
        ok = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
        t = np.where(ok, t, np.inf)
        j = np.argmin(t, axis=1)
        tw = t[np.arange(k), j]
        has = np.isfinite(tw)
        best = np.where(has, tw, best)
        tag = np.where(has, seg_tag[j], tag)
    if targets is not None and len(targets):
        f = origin - np.asarray(targets, dtype=float)  # (M,2)
        bq = dirs @ f.T  # (K,M)
        cq = np.einsum("ij,ij->i", f, f) - target_radius**2  # (M,)
        disc = bq**2 - cq[None, :]
        with np.errstate(invalid="ignore"):
            root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        t_in = -bq - root
        t_out = -bq + root
        # origin inside a disc: the target is right on top of the sensor
        tt = np.where(t_in > 0, t_in, np.where(t_out > 0, 1e-9, np.inf))
        tt = np.where(disc >= 0, tt, np.inf)
        m = np.argmin(tt, axis=1)
        tm = tt[np.arange(k), m]
        closer = tm < best
        best = np.where(closer, tm, best)
        tag = np.where(closer, int(Tag.TARGET), tag)
    miss = ~(best <= max_range)
    best = np.where(miss, max_range, best)
    tag = np.where(miss, int(Tag.NONE), tag)
    return best, tag


def raycast(
    layout: BuildingLayout,
    origin,
    direction,
    targets: Sequence | None = None,
    max_range: float = DEFAULT_RAY_RANGE,
    target_radius: float = TARGET_RADIUS,
) -> RayHit:
    origin = vec(origin)
    d = vec(direction)
    n = np.linalg.norm(d)
    if not math.isclose(n, 1.0, rel_tol=1e-6):
        raise ValueError("direction must be a unit vector")
    tg = None if targets is None or len(targets) == 0 else np.asarray(targets, dtype=float).reshape(-1, 2)
    a, b, kind = layout.ray_segments
    dist, tag = cast_rays(origin, d[None], a, b, kind, tg, target_radius, max_range)
    t = Tag(int(tag[0]))
    return RayHit(hit=t is not Tag.NONE, distance=float(dist[0]), tag=t)


# -- perimeter & validation ------------------------------------------------

def _key(p) -> tuple[int, int]:
    return (round(p[0] / _SNAP), round(p[1] / _SNAP))


def _trace_perimeter(layout: BuildingLayout) -> np.ndarray:
    segs = [(w.a, w.b, "wall") for w in layout.walls if w.kind == EXTERIOR]
    segs.append((layout.entrance.a, layout.entrance.b, "entrance"))
    segs += [(e.portal.a, e.portal.b, f"exit {e.id}") for e in layout.exits]
    adj: dict[tuple[int, int], list[int]] = {}
    for i, (a, b, _) in enumerate(segs):
        adj.setdefault(_key(a), []).append(i)
        adj.setdefault(_key(b), []).append(i)
    for i, (a, b, name) in enumerate(segs):
        if name == "wall":
            continue
        for p in (a, b):
            if len(adj[_key(p)]) < 2:
                raise LayoutValidationError(
                    f"{name} portal is not on the exterior perimeter (endpoint {tuple(p)} joins no exterior wall)"
                )
    bad = [k for k, v in adj.items() if len(v) != 2]
    if bad:
        k = bad[0]
        raise LayoutValidationError(
            f"exterior perimeter is not a simple closed loop near ({k[0] * _SNAP:g}, {k[1] * _SNAP:g})"
        )
    used = [False] * len(segs)
    a, b, _ = segs[0]
    used[0] = True
    pts = [a]
    cur = _key(b)
    cur_pt = b
    while True:
        nxt = [i for i in adj[cur] if not used[i]]
        pts.append(cur_pt)
        if not nxt:
            break
        i = nxt[0]
        used[i] = True
        sa, sb, _ = segs[i]
        cur_pt = sb if _key(sa) == cur else sa
        cur = _key(cur_pt)
    if not all(used) or _key(pts[-1]) != _key(pts[0]):
        missing = [segs[i][2] for i in range(len(segs)) if not used[i]]
        raise LayoutValidationError(
            "exterior perimeter does not form one closed loop; disconnected: " + ", ".join(sorted(set(missing)))
        )
    return np.array(pts[:-1], dtype=float)


def validate_layout(layout: BuildingLayout, area_tolerance: float = 0.01) -> BuildingLayout:
    ids = [e.id for e in layout.exits]
    if len(set(ids)) != len(ids):
        raise LayoutValidationError(f"duplicate exit ids in {ids}")
    if any(i < 1 for i in ids):
        raise LayoutValidationError("exit ids must be positive integers")
    if len(layout.hiding_places) != 4:
        raise LayoutValidationError(f"layout needs exactly 4 hiding places, found {len(layout.hiding_places)}")
    _ = layout.perimeter  # raises on portal/perimeter problems
    area = layout.area
    if abs(area - layout.declared_area_m2) > area_tolerance * layout.declared_area_m2:
        raise LayoutValidationError(
            f"floor area {area:.2f} m2 differs from declared_area_m2 {layout.declared_area_m2:g} by more than "
            f"{area_tolerance:.0%}"
        )
    nav = layout.nav
    for i, h in enumerate(layout.hiding_places):
        if h.radius <= 0:
            raise LayoutValidationError(f"hiding place {i} has non-positive radius")
        if not nav.is_walkable(h.center):
            raise LayoutValidationError(f"hiding place {i} center {h.center} is not in walkable space")
    sz = layout.spawn_zone
    if sz.side <= 0:
        raise LayoutValidationError("spawn_zone side must be positive")
    for p in np.vstack([sz.corners(), [sz.center]]):
        if not nav.is_walkable(p):
            raise LayoutValidationError(f"spawn_zone point {tuple(p)} lies outside walkable space")
    for g in layout.goals(open_exits=layout.exit_ids):
        if nav.cell_of(g.point) is None:
            raise LayoutValidationError(f"{g.label} cannot be reached from walkable space")
    return layout


# -- file format -------------------------------------------------------------

def _pt(obj, what: str) -> tuple[float, float]:
    try:
        x, y = obj
        p = (float(x), float(y))
    except (TypeError, ValueError):
        raise LayoutParseError(f"{what}: expected a point [x, y], got {obj!r}") from None
    if not all(math.isfinite(c) for c in p):
        raise LayoutParseError(f"{what}: non-finite coordinate")
    return p


def _need(d: dict, key: str, what: str):
    if not isinstance(d, dict) or key not in d:
        raise LayoutParseError(f"{what}: missing field {key!r}")
    return d[key]


def parse_layout(text: str) -> BuildingLayout:
    """Parse layout text without validating geometry."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise LayoutParseError(f"malformed layout text: {exc}") from None
    if not isinstance(doc, dict):
        raise LayoutParseError("layout document must be a mapping")
    units = doc.get("units", "meters")
    if units != "meters":
        raise LayoutParseError(f"unsupported units {units!r}; only meters")
    try:
        walls = []
        for i, w in enumerate(_need(doc, "walls", "layout")):
            what = f"wall {i}"
            walls.append(WallSegment(_pt(_need(w, "a", what), what), _pt(_need(w, "b", what), what),
                                     str(_need(w, "kind", what))))
        ent = _need(doc, "entrance", "layout")
        entrance = WallSegment(_pt(_need(ent, "a", "entrance"), "entrance"),
                               _pt(_need(ent, "b", "entrance"), "entrance"), EXTERIOR)
        exits = []
        for i, e in enumerate(_need(doc, "exits", "layout")):
            what = f"exit entry {i}"
            eid = int(_need(e, "id", what))
            what = f"exit {eid}"
            exits.append(Exit(eid, WallSegment(_pt(_need(e, "a", what), what), _pt(_need(e, "b", what), what),
                                               EXTERIOR)))
        hiding = []
        for i, h in enumerate(doc.get("hiding_places") or []):
            what = f"hiding place {i}"
            hiding.append(HidingPlace(_pt(_need(h, "center", what), what), float(h.get("radius", 1.0))))
        sz = _need(doc, "spawn_zone", "layout")
        spawn = SpawnZone(_pt(_need(sz, "center", "spawn_zone"), "spawn_zone"), float(sz.get("side", 4.0)))
        area = float(_need(doc, "declared_area_m2", "layout"))
    except LayoutParseError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise LayoutParseError(str(exc)) from None
    return BuildingLayout(
        walls=tuple(walls),
        entrance=entrance,
        exits=tuple(exits),
        hiding_places=tuple(hiding),
        spawn_zone=spawn,
        declared_area_m2=area,
        name=str(doc.get("name", "layout")),
    )


def load_layout(text: str) -> BuildingLayout:
    """Parse and validate layout text. All exits start open."""
    return validate_layout(parse_layout(text))


def load_layout_file(path) -> BuildingLayout:
    with open(path, encoding="utf-8") as fh:
        return load_layout(fh.read())


def dump_layout(layout: BuildingLayout) -> str:
    def p(t):
        return [float(t[0]), float(t[1])]

    doc = {
        "name": layout.name,
        "units": "meters",
        "declared_area_m2": float(layout.declared_area_m2),
        "walls": [{"a": p(w.a), "b": p(w.b), "kind": w.kind} for w in layout.walls],
        "entrance": {"a": p(layout.entrance.a), "b": p(layout.entrance.b)},
        "exits": [{"id": e.id, "a": p(e.portal.a), "b": p(e.portal.b)} for e in layout.exits],
        "hiding_places": [{"center": p(h.center), "radius": float(h.radius)} for h in layout.hiding_places],
        "spawn_zone": {"center": p(layout.spawn_zone.center), "side": float(layout.spawn_zone.side)},
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def default_layout_path():
    from importlib.resources import files

    return files("asisim") / "data" / "default_office.layout"


def default_layout() -> BuildingLayout:
    return load_layout(default_layout_path().read_text(encoding="utf-8"))


# -- navigation ----------------------------------------------------------------

class NavGrid:
    """8-connected grid over the floor plan with Dijkstra distance fields.

    A cell is free when its center is inside the footprint and at least
    ``clearance`` from every wall and portal. Diagonal moves may not cut
    corners. Only the largest connected component counts as walkable.
    """

    def __init__(self, layout: BuildingLayout, cell: float = NAV_CELL, clearance: float = NAV_CLEARANCE):
        self.cell = cell
        x0, y0, x1, y1 = layout.bounds
        self.origin = np.array([x0, y0])
        self.nx = int(math.ceil((x1 - x0) / cell))
        self.ny = int(math.ceil((y1 - y0) / cell))
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        centers = self.origin + (np.stack([ix, iy], axis=-1).reshape(-1, 2) + 0.5) * cell
        self.centers = centers
        inside = points_in_polygon(centers, layout.perimeter)
        segs = [(w.a, w.b) for w in layout.walls] + [(layout.entrance.a, layout.entrance.b)]
        segs += [(e.portal.a, e.portal.b) for e in layout.exits]
        a = np.array([s[0] for s in segs], dtype=float)
        b = np.array([s[1] for s in segs], dtype=float)
        near = np.zeros(len(centers), dtype=bool)
        for lo in range(0, len(centers), 8192):
            near[lo:lo + 8192] = point_segment_distance(centers[lo:lo + 8192], a, b).min(axis=1) < clearance
        free = (inside & ~near).reshape(self.nx, self.ny)
        self.graph = self._build_graph(free)
        ncomp, labels = connected_components(self.graph, directed=False)
        labels = np.where(free.ravel(), labels, -1)
        counts = np.bincount(labels[labels >= 0], minlength=ncomp) if free.any() else np.zeros(1, int)
        main = int(np.argmax(counts))
        self.walkable = (labels == main) & free.ravel()
        self._fields: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _build_graph(self, free: np.ndarray):
        nx, ny = self.nx, self.ny
        idx = np.arange(nx * ny).reshape(nx, ny)
        rows, cols, w = [], [], []
        for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
            xs = slice(0, nx - dx)
            xd = slice(dx, nx)
            ys = slice(max(0, -dy), ny - max(0, dy))
            yd = slice(max(0, dy), ny + min(0, dy))
            ok = free[xs, ys] & free[xd, yd]
            if dx and dy:
                # corner cutting: both orthogonal neighbours must be free
                ok &= free[xd, ys] & free[xs, yd]
            rows.append(idx[xs, ys][ok])
            cols.append(idx[xd, yd][ok])
            w.append(np.full(ok.sum(), self.cell * (math.sqrt(2) if dx and dy else 1.0)))
        r, c, ww = np.concatenate(rows), np.concatenate(cols), np.concatenate(w)
        n = nx * ny
        return coo_matrix((np.concatenate([ww, ww]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                          shape=(n, n)).tocsr()

    def raw_cell(self, p) -> int | None:
        i, j = np.floor((np.asarray(p, float) - self.origin) / self.cell).astype(int)
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            return None
        return int(i * self.ny + j)

    def cells_of(self, pts: np.ndarray) -> np.ndarray:
        """Containing cell index for each point (-1 outside the grid)."""
        ij = np.floor((np.asarray(pts, float) - self.origin) / self.cell).astype(int)
        ok = (ij[:, 0] >= 0) & (ij[:, 0] < self.nx) & (ij[:, 1] >= 0) & (ij[:, 1] < self.ny)
        return np.where(ok, ij[:, 0] * self.ny + ij[:, 1], -1)

    def is_walkable(self, p) -> bool:
        c = self.raw_cell(p)
        return c is not None and bool(self.walkable[c])

    def walkable_mask(self, pts: np.ndarray) -> np.ndarray:
        c = self.cells_of(pts)
        return (c >= 0) & self.walkable[np.maximum(c, 0)]

    def cell_of(self, p, search: int = 3) -> int | None:
        """Containing walkable cell, else the nearest walkable cell within ``search`` cells."""
        c = self.raw_cell(p)
        if c is not None and self.walkable[c]:
            return c
        i, j = np.floor((np.asarray(p, float) - self.origin) / self.cell).astype(int)
        best, best_d = None, np.inf
        for di in range(-search, search + 1):
            for dj in range(-search, search + 1):
                ii, jj = i + di, j + dj
                if 0 <= ii < self.nx and 0 <= jj < self.ny and self.walkable[ii * self.ny + jj]:
                    d = np.linalg.norm(self.centers[ii * self.ny + jj] - p)
                    if d < best_d:
                        best, best_d = ii * self.ny + jj, d
        return best

    def field(self, cell: int) -> tuple[np.ndarray, np.ndarray]:
        """(distance, predecessor) arrays of the shortest-path tree rooted at ``cell``."""
        if cell not in self._fields:
            if len(self._fields) > 512:
                self._fields.pop(next(iter(self._fields)))
            d, pred = dijkstra(self.graph, directed=False, indices=cell, return_predecessors=True)
            self._fields[cell] = (d, pred)
        return self._fields[cell]

    def distance(self, a, b) -> float:
        ca, cb = self.cell_of(a), self.cell_of(b)
        if ca is None or cb is None:
            return math.inf
        d = self.field(cb)[0][ca]
        if not np.isfinite(d):
            return math.inf
        return float(np.linalg.norm(np.asarray(a) - self.centers[ca]) + d
                     + np.linalg.norm(self.centers[cb] - np.asarray(b)))

    def distances_to(self, pts: np.ndarray, goal) -> np.ndarray:
        """Path distance from many walkable points to one goal point."""
        cb = self.cell_of(goal)
        pts = np.asarray(pts, float).reshape(-1, 2)
        if cb is None:
            return np.full(len(pts), np.inf)
        cells = self.cells_of(pts)
        bad = (cells < 0) | ~self.walkable[np.maximum(cells, 0)]
        for k in np.flatnonzero(bad):
            c = self.cell_of(pts[k])
            cells[k] = -1 if c is None else c
        out = np.full(len(pts), np.inf)
        d = self.field(cb)[0]
        tail = float(np.linalg.norm(self.centers[cb] - np.asarray(goal)))
        ok = cells >= 0
        c = cells[ok]
        out[ok] = np.linalg.norm(pts[ok] - self.centers[c], axis=1) + d[c] + tail
        return out

    def path(self, a, b) -> np.ndarray:
        """Waypoints from ``a`` to ``b`` with collinear runs merged."""
        ca, cb = self.cell_of(a), self.cell_of(b)
        if ca is None or cb is None:
            raise UnreachableError(f"no walkable cell near {a} or {b}")
        dist, pred = self.field(cb)
        if not np.isfinite(dist[ca]):
            raise UnreachableError(f"{tuple(b)} unreachable from {tuple(a)}")
        cells = [ca]
        while cells[-1] != cb:
            cells.append(int(pred[cells[-1]]))
        # endpoints join the neighbouring cell centres directly; both cells are free so this stays clear
        pts = np.vstack([np.asarray(a, float)[None], self.centers[cells[1:-1]], np.asarray(b, float)[None]])
        return simplify_polyline(pts)


def simplify_polyline(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    # drop zero-length legs first
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > tol
    pts = pts[keep]
    if len(pts) < 3:
        return pts
    d1 = pts[1:-1] - pts[:-2]
    d2 = pts[2:] - pts[1:-1]
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    dot = np.einsum("ij,ij->i", d1, d2)
    turn = (np.abs(cross) > tol) | (dot < 0)
    return np.vstack([pts[:1], pts[1:-1][turn], pts[-1:]])


def shortest_path_distance(layout: BuildingLayout, start, end) -> float:
    """Obstacle-avoiding path length on the navigation grid."""
    d = layout.nav.distance(vec(start), vec(end))
    if not math.isfinite(d):
        raise UnreachableError(f"{tuple(end)} unreachable from {tuple(start)}")
    return d


def nearest_goal(layout: BuildingLayout, pos, goals: Sequence) -> int:
    """Index of the goal with the smallest path distance; ties go to the lowest index."""
    if len(goals) == 0:
        raise ValueError("goals must be non-empty")
    pts = [g.point if isinstance(g, Goal) else g for g in goals]
    d = np.array([layout.nav.distance(vec(pos), vec(p)) for p in pts])
    if not np.isfinite(d).any():
        raise UnreachableError(f"no goal reachable from {tuple(pos)}")
    return argmin_lowest(d)


def argmin_lowest(d: np.ndarray, tol: float = 1e-9) -> int:
    """argmin that treats values within ``tol`` of the minimum as tied (lowest index wins)."""
    return int(np.flatnonzero(d <= d.min() + tol)[0])
