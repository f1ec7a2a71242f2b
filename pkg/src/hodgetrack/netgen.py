"""Test domains and synthetic trajectories with known topology.

Domains are jittered structured grids cut into triangles.  Holes are
made by deleting the grid cells whose centres fall inside a hole polygon,
so every hole boundary is a clean loop of grid edges.  Every generator
returns ground truth (hole loops and one anchor point inside each hole)
next to the surface.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path as MplPath

from .oracle import winding_numbers
from .surface import CombinatorialSurface, SurfaceError, build_surface, shortest_path

__all__ = [
    "DomainSpec",
    "GroundTruth",
    "MuseumDomain",
    "MuseumSpec",
    "grid_domain",
    "museum_domain",
    "museum_trajectories",
    "format_museum",
    "format_truth",
    "multifloor_domain",
    "parse_museum",
    "parse_truth",
    "random_path_pairs",
    "sided_paths",
    "side_signature",
    "synthetic_traces",
    "torus_mesh",
]


@dataclass(frozen=True)
class DomainSpec:
    """Grid domain with holes.

    ``holes`` is either a hole count (laid out automatically on a regular
    pattern) or a list of shapes: a 4-tuple ``(x0, y0, x1, y1)`` is an
    axis-aligned rectangle, anything else a polygon vertex list.
    ``jitter`` is in grid-spacing units.
    """

    kind: str = "grid"
    width: float = 1.0
    height: float = 1.0
    holes: int | tuple = 0
    jitter: float = 0.25
    target_nodes: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.kind != "grid":
            raise ValueError(f"grid_domain needs kind='grid', got {self.kind!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if not 0 <= self.jitter < 0.5:
            raise ValueError(f"jitter must lie in [0, 0.5), got {self.jitter}")
        if self.target_nodes < 20:
            raise ValueError(f"target_nodes must be >= 20, got {self.target_nodes}")
        if not isinstance(self.holes, int):
            object.__setattr__(self, "holes", tuple(
                tuple(tuple(p) if np.ndim(p) else p for p in h) for h in self.holes))

    @property
    def n_holes(self) -> int:
        return self.holes if isinstance(self.holes, int) else len(self.holes)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Known topology of a generated domain.

    ``anchors[i]`` lies inside the hole bounded by ``hole_loops[i]``, and
    ``hole_loops`` is in the surface's own hole order.  ``polygons[i]`` is
    the hole outline (the deleted cells' union boundary is inside it).
    """

    hole_loops: tuple
    anchors: np.ndarray
    polygons: tuple
    grid_shape: tuple = ()
    cell: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def n_holes(self) -> int:
        return len(self.hole_loops)


def torus_mesh(rows: int, cols: int, seed=None) -> CombinatorialSurface:
    """Closed genus-1 mesh from a periodic ``rows x cols`` grid.

    With ``seed=None`` every square is split along the same diagonal,
    which makes the face adjacency graph bipartite (undamped Jacobi on
    faces then oscillates).  A seed picks each diagonal at random.
    """
    if rows < 3 or cols < 3:
        raise ValueError("torus grid needs at least 3 x 3 cells")
    rng = None if seed is None else np.random.default_rng(seed)
    faces = []
    for i in range(rows):
        for j in range(cols):
            a, b = i * cols + j, ((i + 1) % rows) * cols + j
            c, d = ((i + 1) % rows) * cols + (j + 1) % cols, i * cols + (j + 1) % cols
            if rng is not None and rng.random() < 0.5:
                faces += [[a, b, d], [b, c, d]]
            else:
                faces += [[a, b, c], [a, c, d]]
    return build_surface(faces)


# ----------------------------------------------------------------------
# grid rasterisation


def _split(total: int, parts: int) -> list[int]:
    return [len(a) for a in np.array_split(np.arange(total), parts)]


def _auto_layout(k: int, nx: int, ny: int, aspect: float):
    """Cell-index rectangles for ``k`` holes on a regular pattern.

    Gaps between holes and to the frame are at least two cells so that no
    interior edge joins two boundary nodes.
    """
    if k == 0:
        return []
    cols = max(1, math.ceil(math.sqrt(k * aspect)))
    rows = math.ceil(k / cols)
    cols = math.ceil(k / rows)

    def axis(n, m):
        w = max(1, int(0.5 * n / m))
        while w >= 1 and n - m * w < 2 * (m + 1):
            w -= 1
        if w < 1:
            return None
        gaps = _split(n - m * w, m + 1)
        starts, pos = [], 0
        for g in gaps[:-1]:
            pos += g
            starts.append(pos)
            pos += w
        return [(a, a + w) for a in starts]

    xs, ys = axis(nx, cols), axis(ny, rows)
    if xs is None or ys is None:
        return None
    rects = []
    for i in range(k):
        r, c = divmod(i, cols)
        # fill rows from the top so a partial last row sits at the bottom
        (x0, x1), (y0, y1) = xs[c], ys[rows - 1 - r]
        rects.append((x0, y0, x1, y1))
    return rects


def _shape_polygon(h):
    if len(h) == 4 and all(np.ndim(v) == 0 for v in h):
        x0, y0, x1, y1 = (float(v) for v in h)
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate hole rectangle {h}")
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    poly = np.asarray(h, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise ValueError(f"hole polygon needs >= 3 points, got {h}")
    return poly


def _fix_pinches(removed):
    """Delete extra cells where two removed cells touch only at a corner."""
    ny, nx = removed.shape
    while True:
        pad = np.zeros((ny + 2, nx + 2), dtype=bool)
        pad[1:-1, 1:-1] = removed
        a, b = pad[:-1, :-1], pad[:-1, 1:]
        c, d = pad[1:, :-1], pad[1:, 1:]
        pinch = (a & d & ~b & ~c) | (b & c & ~a & ~d)
        if not pinch.any():
            return removed
        j, i = np.argwhere(pinch)[0]
        # node (j, i) sits between cells (j-1..j, i-1..i); fill one kept cell
        for cj, ci in ((j - 1, i - 1), (j - 1, i), (j, i - 1), (j, i)):
            if 0 <= cj < ny and 0 <= ci < nx and not removed[cj, ci]:
                removed[cj, ci] = True
                break


def _triangulate(removed, x0, y0, hx, hy, jitter, rng):
    """Triangles and coordinates for the kept cells of a structured grid."""
    ny, nx = removed.shape
    kept = ~removed
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = kept
    # node (j, i) touches cells (j-1, i-1), (j-1, i), (j, i-1), (j, i)
    around = np.stack([pad[:-1, :-1], pad[:-1, 1:], pad[1:, :-1], pad[1:, 1:]])
    used = around.any(axis=0)
    on_bnd = used & ~around.all(axis=0)

    ids = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    ids[used] = np.arange(int(used.sum()))
    jj, ii = np.nonzero(used)
    xy = np.stack([x0 + ii * hx, y0 + jj * hy], axis=1).astype(float)

    faces = []
    flips = rng.random((ny, nx)) < 0.5
    for j in range(ny):
        for i in range(nx):
            if not kept[j, i]:
                continue
            a, b, c, d = (j, i), (j, i + 1), (j + 1, i + 1), (j + 1, i)
            ac_ok = not (on_bnd[a] and on_bnd[c])
            bd_ok = not (on_bnd[b] and on_bnd[d])
            if not (ac_ok or bd_ok):
                raise SurfaceError(
                    f"cell ({i}, {j}) has all four corners on the boundary; "
                    "holes are too close at this resolution")
            use_ac = ac_ok if not (ac_ok and bd_ok) else bool(flips[j, i])
            A, B, C, D = ids[a], ids[b], ids[c], ids[d]
            if use_ac:
                faces += [(A, B, C), (A, C, D)]
            else:
                faces += [(A, B, D), (B, C, D)]
    faces = np.array(faces, dtype=np.int64)

    if jitter > 0:
        disp = rng.uniform(-jitter, jitter, size=xy.shape) * [hx, hy]
        frame_x = (ii == 0) | (ii == nx)
        frame_y = (jj == 0) | (jj == ny)
        # frame nodes slide along the frame; other boundary nodes stay put
        disp[frame_x, 0] = 0.0
        disp[frame_y, 1] = 0.0
        inner_bnd = on_bnd[jj, ii] & ~frame_x & ~frame_y
        disp[inner_bnd] = 0.0
        disp[frame_x & frame_y] = 0.0
        for _ in range(50):
            p = xy + disp
            u, v, w = p[faces[:, 0]], p[faces[:, 1]], p[faces[:, 2]]
            area = ((v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1])
                    - (v[:, 1] - u[:, 1]) * (w[:, 0] - u[:, 0]))
            bad = area <= 0.05 * hx * hy
            if not bad.any():
                break
            disp[np.unique(faces[bad])] = 0.0
        xy = xy + disp
    return faces, xy, ids


def _raster(spec: DomainSpec, nx: int, ny: int):
    hx, hy = spec.width / nx, spec.height / ny
    if isinstance(spec.holes, int):
        rects = _auto_layout(spec.holes, nx, ny, spec.width / spec.height)
        if rects is None:
            return None
        polys = [np.array([[x0 * hx, y0 * hy], [x1 * hx, y0 * hy],
                           [x1 * hx, y1 * hy], [x0 * hx, y1 * hy]])
                 for x0, y0, x1, y1 in rects]
    else:
        polys = [_shape_polygon(h) for h in spec.holes]
    cx = (np.arange(nx) + 0.5) * hx
    cy = (np.arange(ny) + 0.5) * hy
    centers = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)
    label = -np.ones(nx * ny, dtype=np.int64)
    for k, poly in enumerate(polys):
        inside = MplPath(poly).contains_points(centers) & (label < 0)
        label[inside] = k
    label = label.reshape(ny, nx)
    return polys, label


def _count_nodes(removed):
    ny, nx = removed.shape
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = ~removed
    return int((pad[:-1, :-1] | pad[:-1, 1:] | pad[1:, :-1] | pad[1:, 1:]).sum())


def _match_loops(s: CombinatorialSurface, anchors):
    """Reorder anchors so anchors[i] lies inside s.hole_loops[i]."""
    order = []
    for loop in s.hole_loops:
        path = MplPath(s.coords[list(loop), :2])
        hits = [k for k, a in enumerate(anchors) if path.contains_point(a)]
        if len(hits) != 1:
            raise SurfaceError(
                f"hole loop starting at node {loop[0]} encloses {len(hits)} hole anchors; "
                "holes merged or touch the frame at this resolution")
        order.append(hits[0])
    if sorted(order) != list(range(len(anchors))):
        raise SurfaceError("some holes vanished at this resolution")
    return np.asarray(anchors)[order], order


def _resolution(spec: DomainSpec):
    """Cell counts whose node count is closest to the target."""
    aspect = spec.width / spec.height
    est = math.sqrt(spec.target_nodes * aspect)
    best = None
    for nx in range(max(2, int(est) - 4), int(est) + 6):
        ny = max(2, round(nx / aspect))
        r = _raster(spec, nx, ny)
        if r is None:
            continue
        _, label = r
        n = _count_nodes(_fix_pinches(label >= 0))
        err = abs(n - spec.target_nodes)
        if best is None or err < best[0]:
            best = (err, nx, ny, n)
    if best is None:
        raise SurfaceError(
            f"cannot fit {spec.n_holes} holes into a ~{spec.target_nodes}-node grid")
    return best


def grid_domain(spec: DomainSpec) -> tuple[CombinatorialSurface, GroundTruth]:
    """Jittered triangulated rectangle with holes cut out.

    The node count lands within 10% of ``spec.target_nodes``.  Raises
    :class:`SurfaceError` if a hole removes no cell, holes merge, or the
    mesh cannot be built without an interior edge joining two boundary
    nodes.
    """
    err, nx, ny, n = _resolution(spec)
    if err > 0.1 * spec.target_nodes:
        raise SurfaceError(
            f"closest grid has {n} nodes, not within 10% of {spec.target_nodes}")
    polys, label = _raster(spec, nx, ny)
    for k in range(len(polys)):
        if not (label == k).any():
            raise SurfaceError(f"hole {k} is too small to remove any grid cell")
    removed = _fix_pinches(label >= 0)
    hx, hy = spec.width / nx, spec.height / ny
    rng = np.random.default_rng(spec.seed)
    faces, xy, _ = _triangulate(removed, 0.0, 0.0, hx, hy, spec.jitter, rng)
    s = build_surface(faces, coords=xy)

    anchors = []
    for k, poly in enumerate(polys):
        jj, ii = np.nonzero(label == k)
        centers = np.stack([(ii + 0.5) * hx, (jj + 0.5) * hy], axis=1)
        mid = centers.mean(axis=0)
        anchors.append(centers[np.argmin(np.linalg.norm(centers - mid, axis=1))])
    if len(s.chord_edges):
        raise SurfaceError("holes are too close: an interior edge joins two boundary nodes")
    anchors, order = _match_loops(s, anchors) if polys else (np.zeros((0, 2)), [])
    gt = GroundTruth(
        hole_loops=s.hole_loops,
        anchors=anchors,
        polygons=tuple(polys[k] for k in order),
        grid_shape=(nx, ny),
        cell=(hx, hy),
    )
    return s, gt


# ----------------------------------------------------------------------
# trajectories on grid domains


def _nearest_node(s, p):
    return int(np.argmin(np.linalg.norm(s.coords[:, :2] - np.asarray(p), axis=1)))


def _route(s, waypoints):
    path = [waypoints[0]]
    for a, b in zip(waypoints, waypoints[1:]):
        path += shortest_path(s, a, b)[1:]
    return path


def _return_leg(s_pt, t_pt, lo):
    # canonical closing polyline: drop below the whole domain and come back
    return np.array([t_pt, [t_pt[0], lo], [s_pt[0], lo], s_pt])


def side_signature(trajectory, s: CombinatorialSurface, anchors) -> np.ndarray:
    """Winding of the path closed by a fixed detour below the domain.

    Two paths with the same endpoints are homologous in a planar domain
    exactly when these vectors agree.  The detour runs below every
    anchor, so for a path passing a single obstacle the entry is 0 when
    the path goes below it and +-1 when it goes above.
    """
    nodes = list(getattr(trajectory, "nodes", trajectory))
    pts = s.coords[nodes, :2]
    lo = float(s.coords[:, 1].min()) - 1.0 - float(np.ptp(s.coords[:, 1]))
    closed = np.concatenate([pts, _return_leg(pts[0], pts[-1], lo)[1:]])
    return winding_numbers(closed, np.asarray(anchors, dtype=float))


def sided_paths(s: CombinatorialSurface, gt: GroundTruth, patterns, per_class: int,
                seed, max_tries: int = 50) -> list[tuple[str, list[int], tuple]]:
    """Left-to-right paths passing each hole above (+1) or below (-1).

    ``patterns`` lists one +-1 tuple per class with one entry per hole,
    holes ordered by anchor x.  Every path shares the same two endpoints
    (frame nodes at mid-height on the left and right).  Each path is
    checked against its intended side pattern geometrically and redrawn
    if a shortest-path leg slipped round the wrong side.  Returns
    ``(id, nodes, pattern)`` triples.
    """
    rng = np.random.default_rng(seed)
    xy = s.coords[:, :2]
    by_x = np.argsort(gt.anchors[:, 0], kind="stable")
    polys = [gt.polygons[i] for i in by_x]
    xmin, xmax = xy[:, 0].min(), xy[:, 0].max()
    ymin, ymax = xy[:, 1].min(), xy[:, 1].max()
    ymid = float(np.mean(gt.anchors[:, 1])) if len(gt.anchors) else (ymin + ymax) / 2
    src = _nearest_node(s, (xmin, ymid))
    dst = _nearest_node(s, (xmax, ymid))
    tol = 1e-9 * (xmax - xmin)

    def waypoint(poly, side):
        px0, px1 = poly[:, 0].min(), poly[:, 0].max()
        py0, py1 = poly[:, 1].min(), poly[:, 1].max()
        m = (xy[:, 0] >= px0 - tol) & (xy[:, 0] <= px1 + tol)
        m &= (xy[:, 1] > py1) if side > 0 else (xy[:, 1] < py0)
        cand = np.flatnonzero(m)
        if not len(cand):
            y = (py1 + ymax) / 2 if side > 0 else (ymin + py0) / 2
            return _nearest_node(s, ((px0 + px1) / 2, y))
        return int(rng.choice(cand))

    out = []
    for ci, pat in enumerate(patterns):
        if len(pat) != len(polys):
            raise ValueError(f"pattern {pat} does not have one entry per hole")
        # the closing detour runs below the domain, so passing above winds -1
        want = np.zeros(len(pat), dtype=np.int64)
        want[by_x] = [-1 if side > 0 else 0 for side in pat]
        for r in range(per_class):
            for _ in range(max_tries):
                way = [src] + [waypoint(p, side) for p, side in zip(polys, pat)] + [dst]
                path = _route(s, way)
                if np.array_equal(side_signature(path, s, gt.anchors), want):
                    break
            else:
                raise SurfaceError(f"could not route a path with side pattern {pat}")
            out.append((f"c{ci}p{r}", path, tuple(pat)))
    return out


def random_path_pairs(s: CombinatorialSurface, n_pairs: int, seed, max_waypoints: int = 3):
    """Pairs of node paths sharing both endpoints, via random waypoints."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_pairs:
        a, b = (int(x) for x in rng.choice(s.n_nodes, size=2, replace=False))
        pair = []
        for _ in range(2):
            k = int(rng.integers(0, max_waypoints + 1))
            mids = [int(x) for x in rng.choice(s.n_nodes, size=k)]
            pair.append(_route(s, [a, *mids, b]))
        out.append(tuple(pair))
    return out


def synthetic_traces(s: CombinatorialSurface, gt: GroundTruth, n_traces: int, seed,
                     max_turns: int = 3, noise: float = 0.15):
    """Noisy coordinate traces sharing endpoints, with extra loops round holes.

    Each trace runs from a fixed start point to a fixed end point and, on
    the way, circles a random subset of holes a random number of times in
    either direction.  Returns ``(id, points, windings)`` with the
    number of added turns per hole (in ``gt`` hole order).
    """
    rng = np.random.default_rng(seed)
    hx, hy = gt.cell
    xy = s.coords[:, :2]
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    start = np.array([lo[0] + hx, lo[1] + hy])
    end = np.array([hi[0] - hx, hi[1] - hy])
    k = gt.n_holes
    out = []
    for n in range(n_traces):
        turns = np.zeros(k, dtype=np.int64)
        chosen = rng.permutation(k)[: int(rng.integers(0, k + 1))]
        for i in chosen:
            turns[i] = int(rng.integers(-max_turns, max_turns + 1))
        pts = [start]
        for i in range(k):
            if turns[i] == 0:
                continue
            poly = gt.polygons[i]
            half = (poly.max(axis=0) - poly.min(axis=0)) / 2
            centre = (poly.max(axis=0) + poly.min(axis=0)) / 2
            # a rectangle one cell outside the hole, traversed |turns| times
            rx, ry = half[0] + hx, half[1] + hy
            ring = np.array([[rx, -ry], [rx, ry], [-rx, ry], [-rx, -ry]]) + centre
            if turns[i] < 0:
                ring = ring[::-1]
            entry = ring[0]
            pts.append(entry)
            for _ in range(abs(turns[i])):
                pts.extend(ring[1:])
                pts.append(entry)
        pts.append(end)
        dense = _densify(np.array(pts), 0.5 * min(hx, hy))
        dense = dense + rng.uniform(-noise, noise, dense.shape) * [hx, hy]
        dense[0], dense[-1] = start, end
        out.append((f"trace{n}", dense, turns))
    return out


def _densify(pts, step):
    out = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        m = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        for t in range(1, m + 1):
            out.append(a + (b - a) * t / m)
    return np.array(out)


# ----------------------------------------------------------------------
# museum floor plans


@dataclass(frozen=True)
class MuseumSpec:
    """Grid of square rooms separated by one-cell walls.

    Every pair of neighbouring rooms gets a door (a gap of ``door_cells``
    in the middle of their shared wall) except those listed in
    ``closed_walls``.  Wall pieces that do not touch the outer frame
    become holes.  With ``levels > 1`` identical floors are stacked and
    each consecutive pair is joined by ``ladders`` tubes.  Rooms are
    ``(row, col)`` with row 0 at the top.
    """

    rows: int = 3
    cols: int = 5
    room_cells: int = 6
    door_cells: int = 2
    closed_walls: tuple = (((0, 0), (0, 1)), ((0, 3), (0, 4)), ((2, 2), (2, 3)))
    entrance: tuple = (2, 0)
    exit: tuple = (0, 4)
    jitter: float = 0.25
    seed: int = 0
    levels: int = 1
    ladders: int = 2
    floor_gap: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "closed_walls", tuple(
            tuple(sorted((tuple(a), tuple(b)))) for a, b in self.closed_walls))
        object.__setattr__(self, "entrance", tuple(self.entrance))
        object.__setattr__(self, "exit", tuple(self.exit))
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise ValueError("a museum needs at least two rooms")
        if self.door_cells < 2:
            raise ValueError("doors must be at least two cells wide")
        if self.room_cells < self.door_cells + 2:
            raise ValueError("rooms must be wider than their doors by two cells")
        if self.entrance == self.exit:
            raise ValueError("entrance and exit must be different rooms")
        for r in (self.entrance, self.exit):
            if not (0 <= r[0] < self.rows and 0 <= r[1] < self.cols):
                raise ValueError(f"room {r} is outside the {self.rows}x{self.cols} grid")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.levels > 1 and self.ladders < 1:
            raise ValueError("stacked floors need at least one ladder per pair")
        for a, b in self.closed_walls:
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"rooms {a} and {b} are not neighbours")

    @property
    def rooms(self):
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def doors(self):
        out = []
        for r, c in self.rooms:
            for nb in ((r, c + 1), (r + 1, c)):
                if nb[0] < self.rows and nb[1] < self.cols:
                    pair = tuple(sorted(((r, c), nb)))
                    if pair not in self.closed_walls:
                        out.append(pair)
        return out


@dataclass(frozen=True, eq=False)
class MuseumDomain:
    surface: CombinatorialSurface
    truth: GroundTruth
    room_graph: object
    rooms: dict
    entrance: int
    exit: int
    entrance_room: tuple
    exit_room: tuple


def _museum_cells(spec: MuseumSpec):
    """Removed-cell mask, room boxes and wall-crossing cells for one floor."""
    import networkx as nx_

    rc = spec.room_cells
    nx = spec.cols * rc + spec.cols - 1
    ny = spec.rows * rc + spec.rows - 1
    removed = np.zeros((ny, nx), dtype=bool)
    for c in range(spec.cols - 1):
        removed[:, c * (rc + 1) + rc] = True
    for r in range(spec.rows - 1):
        removed[r * (rc + 1) + rc, :] = True

    def box(room):
        r, c = room
        x0 = c * (rc + 1)
        y0 = (spec.rows - 1 - r) * (rc + 1)
        return x0, y0

    lo = (rc - spec.door_cells) // 2
    g = nx_.Graph()
    g.add_nodes_from(spec.rooms)
    for a, b in spec.doors():
        (x0, y0), (x1, y1) = box(a), box(b)
        if a[0] == b[0]:
            wall_x = min(x0, x1) + rc
            removed[y0 + lo: y0 + lo + spec.door_cells, wall_x] = False
        else:
            wall_y = min(y0, y1) + rc
            removed[wall_y, x0 + lo: x0 + lo + spec.door_cells] = False
        g.add_edge(a, b)
    if not nx_.is_connected(g):
        lonely = [r for r in g.nodes if g.degree(r) == 0]
        raise SurfaceError(f"rooms without a door: {lonely}" if lonely
                           else "room graph is disconnected")
    crossings = [(r * (rc + 1) + rc, c * (rc + 1) + rc)
                 for r in range(spec.rows - 1) for c in range(spec.cols - 1)]
    boxes = {room: box(room) for room in spec.rooms}
    return removed, boxes, crossings, g


def _wall_holes(removed, crossings):
    """Crossing cells whose wall piece does not reach the frame."""
    from scipy.ndimage import label as cc_label

    lab, _ = cc_label(removed)
    frame = set(np.unique(np.concatenate(
        [lab[0], lab[-1], lab[:, 0], lab[:, -1]])).tolist()) - {0}
    holes, seen = [], set()
    for j, i in crossings:
        k = lab[j, i]
        if k and k not in frame and k not in seen:
            seen.add(k)
            holes.append((j, i))
    return holes


def _room_nodes(ids, boxes, rc):
    out = {}
    for room, (x0, y0) in boxes.items():
        block = ids[y0 + 1: y0 + rc, x0 + 1: x0 + rc]
        out[room] = np.sort(block[block >= 0])
    return out


def museum_domain(spec: MuseumSpec) -> MuseumDomain:
    """Single-floor museum; wall pieces that float free become holes.

    Trajectories start at the entrance room's centre node and end at the
    exit room's centre node.
    """
    if spec.levels != 1:
        return multifloor_domain(spec)
    removed, boxes, crossings, g = _museum_cells(spec)
    rng = np.random.default_rng(spec.seed)
    faces, xy, ids = _triangulate(removed, 0.0, 0.0, 1.0, 1.0, spec.jitter, rng)
    s = build_surface(faces, coords=xy)
    if len(s.chord_edges):
        raise SurfaceError("museum layout produces an edge joining two boundary nodes")
    holes = _wall_holes(removed, crossings)
    anchors = np.array([[i + 0.5, j + 0.5] for j, i in holes]).reshape(-1, 2)
    anchors, order = _match_loops(s, anchors) if len(anchors) else (anchors, [])
    polys = tuple(np.array([[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]], dtype=float)
                  for j, i in (holes[k] for k in order))
    rooms = _room_nodes(ids, boxes, spec.room_cells)
    for room in g.nodes:
        x0, y0 = boxes[room]
        h = spec.room_cells / 2
        g.nodes[room]["centre"] = _interior_near(s, rooms[room], (x0 + h, y0 + h))
    gt = GroundTruth(hole_loops=s.hole_loops, anchors=anchors, polygons=polys,
                     grid_shape=removed.shape[::-1], cell=(1.0, 1.0))
    return MuseumDomain(
        surface=s, truth=gt, room_graph=g, rooms=rooms,
        entrance=g.nodes[spec.entrance]["centre"], exit=g.nodes[spec.exit]["centre"],
        entrance_room=spec.entrance, exit_room=spec.exit)


def _ladder_cells(spec: MuseumSpec, pair: int):
    """2x2 cell blocks for the ladders between floor ``pair`` and ``pair+1``.

    Even pairs use the lower-left corner of the first rooms, odd pairs the
    upper-right corner of the last rooms, so the two ladder sets reaching
    the same floor never touch.
    """
    rc = spec.room_cells
    off = 2 if pair % 2 == 0 else rc - 4
    spots = [(c * (rc + 1) + off, (spec.rows - 1 - r) * (rc + 1) + off)
             for r, c in spec.rooms]
    if len(spots) < spec.ladders:
        raise SurfaceError("more ladders than rooms")
    return spots[: spec.ladders] if pair % 2 == 0 else spots[::-1][: spec.ladders]


def _interior_near(s, nodes, point):
    nodes = np.asarray(nodes)
    nodes = nodes[~s.boundary_nodes[nodes]]
    d = np.linalg.norm(s.coords[nodes] - np.asarray(point), axis=1)
    return int(nodes[np.argmin(d)])


def multifloor_domain(spec: MuseumSpec) -> MuseumDomain:
    """Stacked floors joined by ladder tubes; a bounded surface of genus
    ``ladder_tubes - levels + 1``.

    Odd floors carry reversed orientation so that the tubes glue
    consistently.  Each ladder is a 2x2-cell opening in both floors joined
    by a triangulated cylinder with one intermediate ring.  Hole loops are
    the free-standing wall pieces of every floor.
    """
    if spec.room_cells < 7:
        raise ValueError("stacked floors need room_cells >= 7 to fit ladders")
    base, boxes, crossings, g = _museum_cells(spec)
    wall_holes = _wall_holes(base, crossings)
    L = spec.levels
    ladders = [_ladder_cells(spec, p) for p in range(L - 1)]
    rng = np.random.default_rng(spec.seed)

    all_faces, all_xyz, id_grids, offset = [], [], [], 0
    for lv in range(L):
        removed = base.copy()
        for p in (lv - 1, lv):
            if 0 <= p < L - 1:
                for x, y in ladders[p]:
                    removed[y: y + 2, x: x + 2] = True
        faces, xy, ids = _triangulate(removed, 0.0, 0.0, 1.0, 1.0, spec.jitter, rng)
        if lv % 2:
            faces = faces[:, [0, 2, 1]]
        all_faces.append(faces + offset)
        all_xyz.append(np.column_stack([xy, np.full(len(xy), lv * spec.floor_gap)]))
        id_grids.append(np.where(ids >= 0, ids + offset, -1))
        offset += len(xy)

    def ring(ids, x, y):
        # 8 boundary nodes round the 2x2 block, counterclockwise in the plane
        pts = [(x, y), (x + 1, y), (x + 2, y), (x + 2, y + 1), (x + 2, y + 2),
               (x + 1, y + 2), (x, y + 2), (x, y + 1)]
        return [int(ids[j, i]) for i, j in pts]

    xyz = np.concatenate(all_xyz)
    extra_xyz, tube_faces = [], []
    for p in range(L - 1):
        lo_lv, hi_lv = (p, p + 1) if p % 2 == 0 else (p + 1, p)
        for x, y in ladders[p]:
            a = ring(id_grids[lo_lv], x, y)
            b = ring(id_grids[hi_lv], x, y)
            mid = list(range(offset, offset + 8))
            offset += 8
            extra_xyz.append((xyz[a] + xyz[b]) / 2)
            for r0, r1 in ((a, mid), (mid, b)):
                for i in range(8):
                    j = (i + 1) % 8
                    tube_faces += [(r0[i], r0[j], r1[j]), (r0[i], r1[j], r1[i])]
    faces = np.concatenate(all_faces + [np.array(tube_faces, dtype=np.int64)])
    coords = np.concatenate([xyz] + extra_xyz) if extra_xyz else xyz

    marks = []
    for lv in range(L):
        for j, i in wall_holes:
            marks.append([int(id_grids[lv][j, i]), int(id_grids[lv][j + 1, i + 1])])
    s = build_surface(faces, coords=coords, hole_marks=marks or None)
    if len(s.chord_edges):
        raise SurfaceError("multi-floor layout produces an edge joining two boundary nodes")

    anchors, polys = [], []
    for loop in s.hole_loops:
        lv = int(round(coords[loop[0], 2] / spec.floor_gap))
        for j, i in wall_holes:
            if int(id_grids[lv][j, i]) in loop:
                anchors.append([i + 0.5, j + 0.5, lv * spec.floor_gap])
                polys.append(np.array([[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]], float))
                break
    rooms = {}
    for lv in range(L):
        for room, nodes in _room_nodes(id_grids[lv], boxes, spec.room_cells).items():
            rooms[(lv, *room)] = nodes
    tubes = (L - 1) * spec.ladders
    gt = GroundTruth(
        hole_loops=s.hole_loops, anchors=np.array(anchors).reshape(-1, 3),
        polygons=tuple(polys), grid_shape=base.shape[::-1], cell=(1.0, 1.0),
        extra={"levels": L, "tubes": tubes, "wall_holes": len(wall_holes) * L,
               "expected_genus": tubes - L + 1,
               "expected_betti": 2 * (tubes - L + 1) + L + len(wall_holes) * L - 1})
    def centre(lv, room):
        x0, y0 = boxes[room]
        h = spec.room_cells / 2
        return _interior_near(s, rooms[(lv, *room)], (x0 + h, y0 + h, lv * spec.floor_gap))

    ent, ext = centre(0, spec.entrance), centre(L - 1, spec.exit)
    return MuseumDomain(surface=s, truth=gt, room_graph=g, rooms=rooms,
                        entrance=ent, exit=ext, entrance_room=spec.entrance,
                        exit_room=spec.exit)


def _room_walk(g, start, goal, rng, simple: bool, cap: int):
    """Random room sequence from start to goal, never stepping straight back."""
    import networkx as nx_

    for _ in range(1000):
        seq = [start]
        visited = {start}
        while seq[-1] != goal and len(seq) <= cap:
            cur = seq[-1]
            prev = seq[-2] if len(seq) > 1 else None
            opts = sorted(n for n in g.neighbors(cur) if n != prev)
            if simple:
                opts = [n for n in opts if n not in visited]
            if not opts:
                if simple:
                    break
                opts = [prev]
            nxt = opts[int(rng.integers(len(opts)))]
            seq.append(nxt)
            visited.add(nxt)
        if seq[-1] == goal:
            return seq
        if not simple:
            return seq + nx_.shortest_path(g, seq[-1], goal)[1:]
    raise SurfaceError(f"no simple room walk from {start} to {goal}")


def museum_trajectories(md: MuseumDomain, n: int, seed, simple: bool = False):
    """Two-level random walks: a room sequence, then node paths through it.

    The room sequence is a random walk on the room graph from the
    entrance room to the exit room that never steps straight back
    (``simple=True``: never revisits a room), capped at four times the
    room count before finishing by the shortest room route.  Every room
    strictly between the ends contributes one random waypoint node; legs
    are fewest-hop paths.  Returns ``(id, nodes, rooms)`` triples.
    """
    import networkx as nx_

    if not nx_.has_path(md.room_graph, md.entrance_room, md.exit_room):
        raise SurfaceError("no room path from entrance to exit")
    rng = np.random.default_rng(seed)
    cap = 4 * md.room_graph.number_of_nodes()
    out = []
    for k in range(n):
        seq = _room_walk(md.room_graph, md.entrance_room, md.exit_room, rng, simple, cap)
        way = [md.entrance]
        for room in seq[1:-1]:
            way.append(int(rng.choice(md.rooms[room])))
        way.append(md.exit)
        out.append((f"m{k}", _route(md.surface, way), tuple(seq)))
    return out


# ----------------------------------------------------------------------
# ground-truth files


def _truth_doc(gt: GroundTruth) -> dict:
    return {
        "hole_loops": [[int(v) for v in lp] for lp in gt.hole_loops],
        "anchors": np.asarray(gt.anchors, dtype=float).reshape(-1, 2).tolist(),
        "polygons": [np.asarray(p, dtype=float).tolist() for p in gt.polygons],
        "grid_shape": [int(x) for x in gt.grid_shape],
        "cell": [float(x) for x in gt.cell],
        "extra": gt.extra,
    }


def _truth_from(doc: dict) -> GroundTruth:
    return GroundTruth(
        hole_loops=tuple(tuple(lp) for lp in doc["hole_loops"]),
        anchors=np.array(doc["anchors"], dtype=float).reshape(-1, 2),
        polygons=tuple(np.array(p, dtype=float) for p in doc["polygons"]),
        grid_shape=tuple(doc.get("grid_shape", ())),
        cell=tuple(doc.get("cell", ())),
        extra=dict(doc.get("extra", {})))


def format_truth(gt: GroundTruth, s: CombinatorialSurface) -> str:
    doc = {"surface_hash": s.digest, **_truth_doc(gt)}
    return json.dumps(doc, indent=1) + "\n"


def parse_truth(text: str, s: CombinatorialSurface) -> GroundTruth:
    doc = json.loads(text)
    if doc.get("surface_hash") != s.digest:
        raise ValueError(f"ground truth belongs to surface {doc.get('surface_hash')}, "
                         f"not {s.digest}")
    return _truth_from(doc)


def format_museum(md: MuseumDomain) -> str:
    """Room layout, doors, entrance/exit and ground truth as JSON."""
    g = md.room_graph
    doc = {
        "surface_hash": md.surface.digest,
        "rooms": [{"room": list(r), "nodes": [int(v) for v in md.rooms[r]],
                   "centre": int(g.nodes[r]["centre"])} for r in sorted(md.rooms)],
        "doors": sorted([sorted([list(a), list(b)]) for a, b in g.edges]),
        "entrance": int(md.entrance),
        "exit": int(md.exit),
        "entrance_room": list(md.entrance_room),
        "exit_room": list(md.exit_room),
        "truth": _truth_doc(md.truth),
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_museum(text: str, s: CombinatorialSurface) -> MuseumDomain:
    import networkx as nx_

    doc = json.loads(text)
    if doc.get("surface_hash") != s.digest:
        raise ValueError(f"museum file belongs to surface {doc.get('surface_hash')}, "
                         f"not {s.digest}")
    g = nx_.Graph()
    rooms = {}
    for rec in doc["rooms"]:
        r = tuple(rec["room"])
        rooms[r] = np.array(rec["nodes"], dtype=np.int64)
        g.add_node(r, centre=int(rec["centre"]))
    g.add_edges_from((tuple(a), tuple(b)) for a, b in doc["doors"])
    return MuseumDomain(
        surface=s, truth=_truth_from(doc["truth"]), room_graph=g, rooms=rooms,
        entrance=int(doc["entrance"]), exit=int(doc["exit"]),
        entrance_room=tuple(doc["entrance_room"]), exit_room=tuple(doc["exit_room"]))
