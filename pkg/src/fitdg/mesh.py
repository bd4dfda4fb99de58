"""Adaptive quadrilateral meshes on a rectangle, organised as a quadtree.

Cells are identified by keys (level, i, j) with 0 <= i, j < 2**level; the
active cells of the quadtree tile the domain exactly.  Meshes are kept
2:1 balanced across faces: adjacent active cells differ by at most one
level.  Faces between cells of different levels are split into subfaces
owned by the finer side.
"""

import numpy as np
from dataclasses import dataclass, field


# sides of a cell: 0 = -x, 1 = +x, 2 = -y, 3 = +y
_SIDE_AXIS = (0, 0, 1, 1)
_SIDE_DIR = (-1, 1, -1, 1)
_OPPOSITE = (1, 0, 3, 2)


def parent(key):
    l, i, j = key
    return (l - 1, i // 2, j // 2)


def children(key):
    l, i, j = key
    return [(l + 1, 2 * i + di, 2 * j + dj) for dj in (0, 1) for di in (0, 1)]


def side_neighbor(key, side):
    """Same-level neighbor key across a side, or None outside the domain."""
    l, i, j = key
    n = 1 << l
    if side == 0:
        return (l, i - 1, j) if i > 0 else None
    if side == 1:
        return (l, i + 1, j) if i + 1 < n else None
    if side == 2:
        return (l, i, j - 1) if j > 0 else None
    if side == 3:
        return (l, i, j + 1) if j + 1 < n else None
    raise ValueError(side)


@dataclass(frozen=True)
class Face:
    """One integration face (a full face or a hanging subface).

    For interior faces `minus` is the cell on the smaller-coordinate side of
    the normal axis and the unit normal points from `minus` to `plus`
    (+axis direction).  For boundary faces `plus` is -1 and the normal is
    the outward normal of `minus`.  `span` is the physical interval in the
    tangential coordinate armed and `coord` the position on the normal axis.
    """

    axis: int            # normal axis: 0 -> x, 1 -> y
    minus: int           # cell index
    plus: int            # cell index, or -1 for boundary
    coord: float
    span: tuple          # (lo, hi) physical tangential interval
    sign: int = 1        # outward normal direction of `minus` (+1/-1); boundary only
    bc: str = ""         # boundary tag: "dirichlet" | "neumann" | "" (interior)

    @property
    def h(self):
        return self.span[1] - self.span[0]

    @property
    def interior(self):
        return self.plus >= 0


@dataclass
class MarkFlags:
    """Per-cell refine/coarsen flags aligned with mesh.cells ordering."""

    refine: np.ndarray
    coarsen: np.ndarray = None

    def __post_init__(self):
        self.refine = np.asarray(self.refine, dtype=bool)
        if self.coarsen is None:
            self.coarsen = np.zeros_like(self.refine)
        else:
            self.coarsen = np.asarray(self.coarsen, dtype=bool)


class Mesh:
    """An active-cell quadtree mesh over an axis-aligned rectangle."""

    def __init__(self, domain, keys, boundary_tags=None):
        self.domain = tuple(float(v) for v in domain)  # (x0, y0, x1, y1)
        self.cells = sorted(keys)
        self.index = {k: n for n, k in enumerate(self.cells)}
        self.boundary_tags = dict(boundary_tags or {})
        for s in range(4):
            self.boundary_tags.setdefault(s, "dirichlet")
        x0, y0, x1, y1 = self.domain
        lvl = np.array([k[0] for k in self.cells])
        ii = np.array([k[1] for k in self.cells])
        jj = np.array([k[2] for k in self.cells])
        self.level = lvl
        self.hx = (x1 - x0) / (2.0 ** lvl)
        self.hy = (y1 - y0) / (2.0 ** lvl)
        self.x0 = x0 + ii * self.hx
        self.y0 = y0 + jj * self.hy
        self.diam = np.hypot(self.hx, self.hy)
        self._faces = None

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_rect(self, n):
        return (self.x0[n], self.y0[n], self.x0[n] + self.hx[n], self.y0[n] + self.hy[n])

    def map_to_physical(self, n, ref_pts):
        """Map reference points (m,2) of cell n to physical coordinates."""
        p = np.asarray(ref_pts, dtype=float)
        return np.column_stack([self.x0[n] + p[:, 0] * self.hx[n],
                                self.y0[n] + p[:, 1] * self.hy[n]])

    def map_to_reference(self, n, phys_pts):
        p = np.asarray(phys_pts, dtype=float)
        return np.column_stack([(p[:, 0] - self.x0[n]) / self.hx[n],
                                (p[:, 1] - self.y0[n]) / self.hy[n]])

    @property
    def areas(self):
        return self.hx * self.hy

    def locate(self, x, y):
        """Active-cell index containing each point (upper cell on edges)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x0, y0, x1, y1 = self.domain
        out = -np.ones(x.shape, dtype=np.int64)
        fx = np.clip((x - x0) / (x1 - x0), 0.0, np.nextafter(1.0, 0.0))
        fy = np.clip((y - y0) / (y1 - y0), 0.0, np.nextafter(1.0, 0.0))
        todo = np.ones(x.shape, dtype=bool)
        for lvl in range(int(self.level.max()) + 1):
            if not todo.any():
                break
            n = 1 << lvl
            ii = np.minimum((fx * n).astype(np.int64), n - 1)
            jj = np.minimum((fy * n).astype(np.int64), n - 1)
            for flat in np.flatnonzero(todo.ravel()):
                key = (lvl, int(ii.ravel()[flat]), int(jj.ravel()[flat]))
                c = self.index.get(key)
                if c is not None:
                    out.ravel()[flat] = c
                    todo.ravel()[flat] = False
        if todo.any():
            raise ValueError("points outside the mesh")
        return out

    @property
    def faces(self):
        if self._faces is None:
            self._faces = self._build_faces()
        return self._faces

    def _build_faces(self):
        faces = []
        x0, y0, x1, y1 = self.domain
        scale = {0: (x1 - x0, y1 - y0), 1: (y1 - y0, x1 - x0)}
        for n, key in enumerate(self.cells):
            l, i, j = key
            for side in range(4):
                axis = _SIDE_AXIS[side]
                nk = side_neighbor(key, side)
                # tangential physical interval of this cell's side
                if axis == 0:
                    lo, hi = self.y0[n], self.y0[n] + self.hy[n]
                    coord = self.x0[n] if side == 0 else self.x0[n] + self.hx[n]
                else:
                    lo, hi = self.x0[n], self.x0[n] + self.hx[n]
                    coord = self.y0[n] if side == 2 else self.y0[n] + self.hy[n]
                if nk is None:
                    faces.append(Face(axis=axis, minus=n, plus=-1, coord=coord,
                                      span=(lo, hi), sign=_SIDE_DIR[side],
                                      bc=self.boundary_tags[side]))
                    continue
                if nk in self.index:
                    if key < nk:  # emit equal-level faces once
                        m = self.index[nk]
                        lo_cell, hi_cell = (n, m) if _SIDE_DIR[side] > 0 else (m, n)
                        faces.append(Face(axis=axis, minus=lo_cell, plus=hi_cell,
                                          coord=coord, span=(lo, hi)))
                    continue
                pk = parent(nk)
                if pk in self.index:
                    # this cell is the finer side; it owns the subface
                    m = self.index[pk]
                    lo_cell, hi_cell = (n, m) if _SIDE_DIR[side] > 0 else (m, n)
                    faces.append(Face(axis=axis, minus=lo_cell, plus=hi_cell,
                                      coord=coord, span=(lo, hi)))
                    continue
                if not all(c in self.index
                           for c in children(nk) if _touches(c, key, side)):
                    raise RuntimeError("mesh is not 2:1 balanced near %s" % (key,))
                # neighbor is refined: finer cells own the subfaces
        return faces

    def check_tiling(self, tol=1e-12):
        x0, y0, x1, y1 = self.domain
        return abs(self.areas.sum() - (x1 - x0) * (y1 - y0)) <= tol * (x1 - x0) * (y1 - y0)

    def check_balanced(self):
        for key in self.cells:
            for side in range(4):
                nk = side_neighbor(key, side)
                if nk is None or nk in self.index or parent(nk) in self.index:
                    continue
                for c in children(nk):
                    if not _touches(c, key, side):
                        continue
                    if c not in self.index:
                        return False
        return True


def _touches(child_key, key, side):
    """Does child_key (one level below key) touch key across `side` of key?"""
    axis = _SIDE_AXIS[side]
    l, i, j = key
    cl, ci, cj = child_key
    if axis == 0:
        return (ci == (2 * i - 1) if side == 0 else ci == 2 * i + 2) and cj in (2 * j, 2 * j + 1)
    return (cj == (2 * j - 1) if side == 2 else cj == 2 * j + 2) and ci in (2 * i, 2 * i + 1)


def create_uniform(domain, levels, boundary_tags=None):
    """Uniform mesh of 4**levels congruent cells."""
    n = 1 << levels
    keys = [(levels, i, j) for j in range(n) for i in range(n)]
    return Mesh(domain, keys, boundary_tags)


def _refine_closure(active, refine_keys):
    """Split each key in refine_keys, cascading refinements to keep balance."""
    active = set(active)
    queue = sorted(refine_keys)
    while queue:
        key = queue.pop()
        if key not in active:
            continue
        active.discard(key)
        for c in children(key):
            active.add(c)
        # neighbors a level coarser than key are now two levels from the children
        for side in range(4):
            nk = side_neighbor(key, side)
            if nk is None or nk in active:
                continue
            pk = parent(nk)
            if pk in active:
                queue.append(pk)
    return active


def execute_adaptation(mesh, flags):
    """Apply refine/coarsen flags; returns (new_mesh, transfer_map).

    Refinements always happen (plus any cascade needed for 2:1 balance).
    A coarsening happens only when all four siblings are flagged and the
    merge keeps the mesh balanced; infeasible requests are dropped.
    """
    refine_keys = {mesh.cells[n] for n in np.flatnonzero(flags.refine)}
    coarsen_keys = {mesh.cells[n] for n in np.flatnonzero(flags.coarsen)}
    active = _refine_closure(mesh.cells, refine_keys)

    groups = {}
    for key in sorted(coarsen_keys - refine_keys):
        if key[0] == 0:
            continue
        groups.setdefault(parent(key), []).append(key)
    # deeper groups first so that nested coarsening works inside-out
    for pk in sorted(groups, key=lambda k: (-k[0], k)):
        ch = children(pk)
        if len(groups[pk]) < 4 or any(c not in active for c in ch):
            continue
        if not _merge_keeps_balance(active, pk):
            continue
        for c in ch:
            active.discard(c)
        active.add(pk)

    new_mesh = Mesh(mesh.domain, active, mesh.boundary_tags)
    return new_mesh, build_transfer_map(mesh, new_mesh)


def _merge_keeps_balance(active, pk):
    """Would replacing pk's children by pk keep 2:1 balance?"""
    for side in range(4):
        nk = side_neighbor(pk, side)
        if nk is None or nk in active or parent(nk) in active:
            continue
        for c in children(nk):
            if not _touches(c, pk, side):
                continue
            if c not in active:  # c itself refined -> level pk+2 next to pk
                return False
    return True


def advance_auxiliary(mesh, flags):
    """Refine-only advance: applies the refine flags (with balance cascade)
    and ignores coarsening, so the result is at least as fine as both the
    input mesh and the adapted mesh."""
    refine_keys = {mesh.cells[n] for n in np.flatnonzero(flags.refine)}
    active = _refine_closure(mesh.cells, refine_keys)
    return Mesh(mesh.domain, active, mesh.boundary_tags)


@dataclass
class TransferMap:
    """Cell-wise relation between a source and a target mesh.

    entries[t] is ("copy", s) | ("refine", s) | ("coarsen", [s...]) where
    s indexes source cells; "refine" means target cell t is a descendant of
    source cell s, "coarsen" that t is an ancestor of the listed cells.
    """

    source: object
    target: object
    entries: list


def build_transfer_map(source, target):
    entries = [None] * target.n_cells
    for t, key in enumerate(target.cells):
        if key in source.index:
            entries[t] = ("copy", source.index[key])
            continue
        anc = key
        while anc[0] > 0:
            anc = parent(anc)
            if anc in source.index:
                entries[t] = ("refine", source.index[anc])
                break
    for s, key in enumerate(source.cells):
        if key in target.index:
            continue
        anc = key
        while anc[0] > 0:
            anc = parent(anc)
            if anc in target.index:
                t = target.index[anc]
                if entries[t] is None:
                    entries[t] = ("coarsen", [])
                entries[t][1].append(s)
                break
    if any(e is None for e in entries):
        raise ValueError("meshes are not from a common quadtree")
    return TransferMap(source, target, entries)


def common_refinement(a, b):
    """The coarsest mesh finer than both a and b (cell-wise intersection)."""
    keys = set()
    bk = set(b.cells)
    ancestors_b = {}
    for key in b.cells:
        anc = key
        while anc[0] > 0:
            anc = parent(anc)
            ancestors_b.setdefault(anc, []).append(key)
    for key in a.cells:
        if key in bk or key not in ancestors_b:
            keys.add(key)  # b is coarser or equal here
        else:
            keys.update(ancestors_b[key])  # b is finer: take b's cells
    return Mesh(a.domain, keys, a.boundary_tags)


def refines(fine, coarse):
    """Is every cell of `coarse` a cell (or union of cells) of `fine`?"""
    for key in fine.cells:
        anc = key
        while anc[0] >= 0:
            if anc in coarse.index:
                break
            if anc[0] == 0:
                return False
            anc = parent(anc)
        else:
            return False
    return True


def write_vtu(path, mesh, cell_data=None, corner_data=None):
    """Write an ASCII .vtu snapshot of the mesh.

    cell_data: dict name -> (n_cells,) array.
    corner_data: dict name -> (n_cells, 4) array of values at cell corners
    ordered (x0,y0), (x1,y0), (x0,y1), (x1,y1); points are duplicated per
    cell so discontinuous fields render faithfully.
    """
    n = mesh.n_cells
    pts = np.empty((4 * n, 3))
    for c in range(n):
        x0, y0, x1, y1 = mesh.cell_rect(c)
        pts[4 * c:4 * c + 4] = [(x0, y0, 0), (x1, y0, 0), (x1, y1, 0), (x0, y1, 0)]
    lines = ['<?xml version="1.0"?>',
             '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">',
             '<UnstructuredGrid>',
             '<Piece NumberOfPoints="%d" NumberOfCells="%d">' % (4 * n, n),
             '<Points><DataArray type="Float64" NumberOfComponents="3" format="ascii">']
    lines += [" ".join("%.12g" % v for v in p) for p in pts]
    lines += ['</DataArray></Points>', '<Cells>',
              '<DataArray type="Int32" Name="connectivity" format="ascii">']
    lines += ["%d %d %d %d" % (4 * c, 4 * c + 1, 4 * c + 2, 4 * c + 3) for c in range(n)]
    lines += ['</DataArray>', '<DataArray type="Int32" Name="offsets" format="ascii">',
              " ".join(str(4 * (c + 1)) for c in range(n)),
              '</DataArray>', '<DataArray type="UInt8" Name="types" format="ascii">',
              " ".join("9" for _ in range(n)), '</DataArray>', '</Cells>']
    if corner_data:
        lines.append('<PointData>')
        for name, vals in corner_data.items():
            vals = np.asarray(vals)
            reordered = vals[:, [0, 1, 3, 2]]  # corner order matches points above
            lines.append('<DataArray type="Float64" Name="%s" format="ascii">' % name)
            lines.append(" ".join("%.12g" % v for v in reordered.ravel()))
            lines.append('</DataArray>')
        lines.append('</PointData>')
    if cell_data:
        lines.append('<CellData>')
        for name, vals in cell_data.items():
            lines.append('<DataArray type="Float64" Name="%s" format="ascii">' % name)
            lines.append(" ".join("%.12g" % v for v in np.asarray(vals, dtype=float)))
            lines.append('</DataArray>')
        lines.append('</CellData>')
    lines += ['</Piece>', '</UnstructuredGrid>', '</VTKFile>']
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
