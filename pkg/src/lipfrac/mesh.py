"""Triangular meshes, boundary tagging, and the centroid dual graph.

The dual graph (one vertex per triangle, an edge between triangles sharing an
interior facet) carries the damage field and every non-local computation:
Lipschitz constraints live on its edges and distances are shortest paths
along them. Facets tagged as boundary never produce a dual edge, so meshed
cracks are not crossed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _dijkstra


class MeshError(Exception):
    """Base class for mesh loading and validation failures."""


class MeshParseError(MeshError):
    """Malformed mesh file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeshValidationError(MeshError):
    """Topologically or geometrically invalid mesh."""


class Mesh:
    """Immutable 2D linear-triangle mesh with tagged boundary facets.

    Construction normalizes the input: triangles are reoriented
    counter-clockwise, unreferenced nodes are dropped, per-element areas and
    minimum edge lengths are precomputed, and the boundary facets are checked
    to lie on exactly one triangle each.

    Parameters
    ----------
    nodes : (n_nodes, 2) float array
        Coordinates in meters.
    triangles : (n_elements, 3) int array
        Node indices per triangle.
    facets : (n_facets, 2) int array, optional
        Node-index pairs of tagged boundary facets.
    facet_tags : sequence of str, optional
        One tag per facet row.
    """

    def __init__(self, nodes, triangles, facets=None, facet_tags=None):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshValidationError(f"nodes must be (n, 2), got {nodes.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshValidationError(f"triangles must be (m, 3), got {triangles.shape}")
        if facets is None:
            facets = np.empty((0, 2), dtype=np.int64)
            facet_tags = []
        facets = np.ascontiguousarray(facets, dtype=np.int64)
        facet_tags = list(facet_tags or [])
        if facets.shape != (len(facet_tags), 2):
            raise MeshValidationError(
                f"facets {facets.shape} and tags ({len(facet_tags)}) do not match"
            )

        n_nodes = len(nodes)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= n_nodes):
            raise MeshValidationError("triangle node index out of range")
        if facets.size and (facets.min() < 0 or facets.max() >= n_nodes):
            raise MeshValidationError("facet node index out of range")

        # Drop unreferenced nodes and remap indices.
        used = np.unique(triangles)
        if len(used) < n_nodes:
            remap = np.full(n_nodes, -1, dtype=np.int64)
            remap[used] = np.arange(len(used))
            nodes = nodes[used]
            triangles = remap[triangles]
            if facets.size:
                facets = remap[facets]
                if facets.min() < 0:
                    raise MeshValidationError(
                        "boundary facet references a node used by no triangle"
                    )

        # Reorient to counter-clockwise; reject degenerate triangles.
        p0 = nodes[triangles[:, 0]]
        p1 = nodes[triangles[:, 1]]
        p2 = nodes[triangles[:, 2]]
        d1 = p1 - p0
        d2 = p2 - p0
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        flip = signed < 0.0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip, 1], triangles[flip, 2] = (
                triangles[flip, 2].copy(),
                triangles[flip, 1].copy(),
            )
            signed = np.abs(signed)
        degenerate = np.nonzero(signed <= 0.0)[0]
        if degenerate.size:
            raise MeshValidationError(
                f"triangle {degenerate[0]} has zero area (nodes {triangles[degenerate[0]]})"
            )

        p0 = nodes[triangles[:, 0]]
        p1 = nodes[triangles[:, 1]]
        p2 = nodes[triangles[:, 2]]
        edge_len = np.stack(
            [
                np.linalg.norm(p1 - p0, axis=1),
                np.linalg.norm(p2 - p1, axis=1),
                np.linalg.norm(p0 - p2, axis=1),
            ]
        )

        self.nodes = nodes
        self.triangles = triangles
        self.facets = facets
        self.facet_tags = facet_tags
        self.element_area = signed
        self.element_min_edge = edge_len.min(axis=0)

        self._facet_use = self._count_facet_use()
        self._validate_facets()
        self.nodes.setflags(write=False)
        self.triangles.setflags(write=False)
        self.facets.setflags(write=False)
        self.element_area.setflags(write=False)
        self.element_min_edge.setflags(write=False)

    # -- topology helpers -------------------------------------------------

    def _count_facet_use(self) -> dict:
        """Map each unordered node pair occurring as a triangle edge to its triangles."""
        use: dict[tuple[int, int], list[int]] = {}
        tri = self.triangles
        for e in range(len(tri)):
            a, b, c = int(tri[e, 0]), int(tri[e, 1]), int(tri[e, 2])
            for i, j in ((a, b), (b, c), (c, a)):
                key = (i, j) if i < j else (j, i)
                use.setdefault(key, []).append(e)
        for key, elems in use.items():
            if len(elems) > 2:
                raise MeshValidationError(
                    f"non-manifold facet {key} shared by {len(elems)} triangles"
                )
        return use

    def _validate_facets(self) -> None:
        seen = set()
        for k in range(len(self.facets)):
            i, j = int(self.facets[k, 0]), int(self.facets[k, 1])
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise MeshValidationError(f"duplicate boundary facet {key}")
            seen.add(key)
            owners = self._facet_use.get(key)
            if owners is None:
                raise MeshValidationError(f"boundary facet {key} is not a triangle edge")
            if len(owners) != 1:
                raise MeshValidationError(
                    f"boundary facet {key} is interior (shared by triangles {owners})"
                )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def facets_with_tag(self, tag: str) -> np.ndarray:
        """Node pairs of all boundary facets carrying ``tag`` (may be empty)."""
        idx = [k for k, t in enumerate(self.facet_tags) if t == tag]
        return self.facets[idx].reshape(-1, 2)

    def nodes_with_tag(self, tag: str) -> np.ndarray:
        """Sorted unique node indices on facets carrying ``tag``."""
        return np.unique(self.facets_with_tag(tag))

    def tags(self) -> list[str]:
        return sorted(set(self.facet_tags))


def min_element_size(mesh: Mesh) -> float:
    """Smallest element edge in the mesh; drives the stable time step."""
    return float(mesh.element_min_edge.min())


@dataclass(frozen=True)
class LipMesh:
    """Dual graph over element centroids carrying the Lipschitz constraints.

    ``vertices[i]`` is the centroid of triangle ``i``; an edge joins two
    triangles iff they share a facet that is not a tagged boundary facet.
    """

    vertices: np.ndarray  # (n_elements, 2)
    edges: np.ndarray  # (n_edges, 2) vertex index pairs, i < j
    edge_length: np.ndarray  # (n_edges,)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency with edge lengths as weights (cached)."""
        cached = self.__dict__.get("_adjacency")
        if cached is None:
            n = self.n_vertices
            if self.n_edges:
                i, j = self.edges[:, 0], self.edges[:, 1]
                w = self.edge_length
                cached = sp.coo_matrix(
                    (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                    shape=(n, n),
                ).tocsr()
            else:
                cached = sp.csr_matrix((n, n))
            object.__setattr__(self, "_adjacency", cached)
        return cached

    def neighbors(self) -> list[np.ndarray]:
        """Per-vertex arrays of adjacent vertex indices (cached)."""
        cached = self.__dict__.get("_neighbors")
        if cached is None:
            adj = self.adjacency()
            cached = [adj.indices[adj.indptr[v] : adj.indptr[v + 1]] for v in range(self.n_vertices)]
            object.__setattr__(self, "_neighbors", cached)
        return cached


def build_lipmesh(mesh: Mesh) -> LipMesh:
    """Construct the centroid dual graph of a valid mesh."""
    centroids = mesh.centroids()
    boundary = {
        (int(i), int(j)) if i < j else (int(j), int(i)) for i, j in mesh.facets
    }
    pairs = []
    for key, elems in mesh._facet_use.items():
        if len(elems) == 2 and key not in boundary:
            a, b = elems
            pairs.append((a, b) if a < b else (b, a))
    pairs.sort()
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    lengths = np.linalg.norm(centroids[edges[:, 0]] - centroids[edges[:, 1]], axis=1)
    if np.any(lengths <= 0.0):
        k = int(np.argmin(lengths))
        raise MeshValidationError(
            f"coincident centroids for adjacent triangles {tuple(edges[k])}"
        )
    lengths.setflags(write=False)
    edges.setflags(write=False)
    return LipMesh(vertices=centroids, edges=edges, edge_length=lengths)


def graph_distance(lip: LipMesh, sources) -> np.ndarray:
    """Shortest-path distance from a set of vertices to every vertex.

    Distances are measured along dual-graph edges; unreachable vertices get
    ``inf``. Raises ``ValueError`` on an empty source set.
    """
    sources = np.atleast_1d(np.asarray(list(sources) if isinstance(sources, set) else sources))
    if sources.size == 0:
        raise ValueError("source set must be nonempty")
    if sources.min() < 0 or sources.max() >= lip.n_vertices:
        raise ValueError("source vertex index out of range")
    dist = _dijkstra(lip.adjacency(), directed=False, indices=sources, min_only=True)
    return np.asarray(dist, dtype=float)


# -- file formats ---------------------------------------------------------

_NATIVE_HEADER = "lipfrac-mesh 1"


def load_mesh(path, fmt: str = "native_text", tag_names: dict[int, str] | None = None) -> Mesh:
    """Load a mesh file.

    ``fmt`` is ``"native_text"`` or ``"msh_ascii_v2"``. For MSH files,
    ``tag_names`` maps physical-group ids to facet tag strings; unmapped
    groups keep their numeric id as the tag.
    """
    try:
        if fmt == "native_text":
            return _load_native(path)
        if fmt == "msh_ascii_v2":
            return _load_msh(path, tag_names or {})
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path!r}: {exc}") from exc
    raise ValueError(f"unknown mesh format {fmt!r}")


def _load_native(path) -> Mesh:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            pos += 1
            stripped = lines[pos - 1].strip()
            if stripped:
                return stripped, pos
        raise MeshParseError("unexpected end of file", len(lines))

    header, ln = next_line()
    if header != _NATIVE_HEADER:
        raise MeshParseError(f"expected header {_NATIVE_HEADER!r}, got {header!r}", ln)

    def read_count(keyword):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshParseError(f"expected '{keyword} <count>', got {text!r}", ln)
        try:
            return int(parts[1])
        except ValueError:
            raise MeshParseError(f"bad count in {text!r}", ln) from None

    n_nodes = read_count("nodes")
    nodes = np.empty((n_nodes, 2))
    for k in range(n_nodes):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2:
            raise MeshParseError(f"expected 'x y', got {text!r}", ln)
        try:
            nodes[k] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshParseError(f"bad coordinate in {text!r}", ln) from None

    n_tri = read_count("triangles")
    triangles = np.empty((n_tri, 3), dtype=np.int64)
    for k in range(n_tri):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 3:
            raise MeshParseError(f"expected 'i j k', got {text!r}", ln)
        try:
            triangles[k] = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(f"bad node index in {text!r}", ln) from None

    n_fac = read_count("facets")
    facets = np.empty((n_fac, 2), dtype=np.int64)
    tags = []
    for k in range(n_fac):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 3:
            raise MeshParseError(f"expected 'i j tag', got {text!r}", ln)
        try:
            facets[k] = [int(parts[0]), int(parts[1])]
        except ValueError:
            raise MeshParseError(f"bad node index in {text!r}", ln) from None
        tags.append(parts[2])
    return Mesh(nodes, triangles, facets, tags)


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the native text format."""
    with open(path, "w") as fh:
        fh.write(_NATIVE_HEADER + "\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_elements}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"facets {len(mesh.facets)}\n")
        for (i, j), tag in zip(mesh.facets, mesh.facet_tags):
            fh.write(f"{i} {j} {tag}\n")


def _load_msh(path, tag_names: dict[int, str]) -> Mesh:
    """Parse the ASCII MSH v2 subset: $Nodes plus $Elements with types 1 and 2.

    Point elements (type 15) are skipped; any other element type is an error.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()

    node_ids: dict[int, int] = {}
    coords: list[tuple[float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    facets: list[tuple[int, int]] = []
    tags: list[str] = []

    pos = 0
    n = len(lines)
    while pos < n:
        line = lines[pos].strip()
        pos += 1
        if line == "$Nodes":
            if pos >= n:
                raise MeshParseError("truncated $Nodes block", pos)
            try:
                count = int(lines[pos].strip())
            except ValueError:
                raise MeshParseError(f"bad node count {lines[pos]!r}", pos + 1) from None
            pos += 1
            for _ in range(count):
                if pos >= n:
                    raise MeshParseError("truncated $Nodes block", pos)
                parts = lines[pos].split()
                if len(parts) < 3:
                    raise MeshParseError(f"bad node line {lines[pos]!r}", pos + 1)
                try:
                    nid = int(parts[0])
                    x, y = float(parts[1]), float(parts[2])
                except ValueError:
                    raise MeshParseError(f"bad node line {lines[pos]!r}", pos + 1) from None
                node_ids[nid] = len(coords)
                coords.append((x, y))
                pos += 1
            if pos >= n or lines[pos].strip() != "$EndNodes":
                raise MeshParseError("missing $EndNodes", pos + 1)
            pos += 1
        elif line == "$Elements":
            if pos >= n:
                raise MeshParseError("truncated $Elements block", pos)
            try:
                count = int(lines[pos].strip())
            except ValueError:
                raise MeshParseError(f"bad element count {lines[pos]!r}", pos + 1) from None
            pos += 1
            for _ in range(count):
                if pos >= n:
                    raise MeshParseError("truncated $Elements block", pos)
                parts = lines[pos].split()
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    phys = int(parts[3]) if ntags >= 1 else 0
                    conn = [int(p) for p in parts[3 + ntags :]]
                except (IndexError, ValueError):
                    raise MeshParseError(f"bad element line {lines[pos]!r}", pos + 1) from None
                if etype == 2:
                    if len(conn) != 3:
                        raise MeshParseError(f"triangle needs 3 nodes, got {len(conn)}", pos + 1)
                    triangles.append(tuple(node_ids[c] for c in conn))
                elif etype == 1:
                    if len(conn) != 2:
                        raise MeshParseError(f"line needs 2 nodes, got {len(conn)}", pos + 1)
                    facets.append(tuple(node_ids[c] for c in conn))
                    tags.append(tag_names.get(phys, str(phys)))
                elif etype != 15:
                    raise MeshParseError(f"unsupported element type {etype}", pos + 1)
                pos += 1
            if pos >= n or lines[pos].strip() != "$EndElements":
                raise MeshParseError("missing $EndElements", pos + 1)
            pos += 1

    if not triangles:
        raise MeshParseError("no triangles found", None)
    return Mesh(
        np.array(coords),
        np.array(triangles, dtype=np.int64),
        np.array(facets, dtype=np.int64).reshape(-1, 2),
        tags,
    )
