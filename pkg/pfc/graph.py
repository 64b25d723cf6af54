import numpy as np

from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse import csgraph

from .exceptions import GraphError

# max. allowed distance of a formation vector from Im(E^T)
EDGE_SPACE_TOL = 1e-8

GRAPH_FAMILIES = ("path", "cycle", "complete", "star")


class UndirectedGraph:
    """An undirected graph with a fixed edge orientation. Edge `k` is stored
    as the pair ``(i, j)`` and oriented from ``i`` (head, +1) to ``j`` (tail,
    -1) in the incidence matrix.

    Parameters
    ----------
    num_vertices : int
    edges : iterable of (int, int)

    """

    def __init__(self, num_vertices, edges):
        if int(num_vertices) != num_vertices or num_vertices < 1:
            raise GraphError(f"num_vertices must be a positive integer, "
                             f"got {num_vertices!r}")

        num_vertices = int(num_vertices)
        edges = tuple((int(i), int(j)) for i, j in edges)
        seen = set()

        for k, (i, j) in enumerate(edges):
            if i == j:
                raise GraphError(f"edge {k} is a self-loop on vertex {i}")
            if not (0 <= i < num_vertices and 0 <= j < num_vertices):
                raise GraphError(f"edge {k} = ({i}, {j}) references a vertex "
                                 f"outside [0, {num_vertices})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"edge {k} = ({i}, {j}) duplicates an "
                                 f"earlier edge")
            seen.add(key)

        self._num_vertices = num_vertices
        self._edges = edges

    @property
    def num_vertices(self):
        return self._num_vertices

    @property
    def edges(self):
        return self._edges

    @property
    def num_edges(self):
        return len(self._edges)

    def adjacency(self):
        n = self.num_vertices
        if not self.edges:
            return csr_matrix((n, n))
        i, j = np.array(self.edges).T
        data = np.ones(2 * len(i))
        return csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def is_connected(self):
        n_components, _ = csgraph.connected_components(self.adjacency(),
                                                       directed=False)
        return n_components == 1

    def __eq__(self, other):
        return isinstance(other, UndirectedGraph) and \
            self.num_vertices == other.num_vertices and \
            self.edges == other.edges

    def __hash__(self):
        return hash((self.num_vertices, self.edges))

    def __repr__(self):
        return f"UndirectedGraph(num_vertices={self.num_vertices}, " \
               f"num_edges={self.num_edges})"


#
# Graph builders
#
def path_graph(n):
    return UndirectedGraph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n):
    if n < 3:
        raise GraphError(f"a cycle needs at least 3 vertices, got {n}")
    return UndirectedGraph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n):
    return UndirectedGraph(n, [(i, j) for i in range(n)
                               for j in range(i + 1, n)])


def star_graph(n):
    """Star on `n` vertices with vertex 0 at the centre."""
    return UndirectedGraph(n, [(0, j) for j in range(1, n)])


def graph_from_edges(num_vertices, edges):
    return UndirectedGraph(num_vertices, edges)


def make_graph(family=None, size=None, edges=None, num_vertices=None):
    """Build a graph from a named family or an explicit edge list.

    Parameters
    ----------
    family : str, optional
        One of "path", "cycle", "complete", "star".
    size : int, optional
        Number of vertices of the family graph.
    edges : list of (int, int), optional
        Explicit edge list, used when `family` is None.
    num_vertices : int, optional
        Vertex count for an explicit edge list (inferred if omitted).

    Returns
    -------
    UndirectedGraph

    """
    if family is None:
        if edges is None:
            raise GraphError("either a graph family or an edge list is "
                             "required")
        if num_vertices is None:
            num_vertices = 1 + max(max(e) for e in edges) if edges else 1
        return graph_from_edges(num_vertices, edges)

    builders = {"path": path_graph, "cycle": cycle_graph,
                "complete": complete_graph, "star": star_graph}

    if family not in builders:
        raise GraphError(f"unknown graph family {family!r}, expected one of "
                         f"{', '.join(GRAPH_FAMILIES)}")
    if size is None or size < 1:
        raise GraphError(f"graph family {family!r} needs a positive size")

    return builders[family](int(size))


#
# Matrices
#
def incidence_matrix(g):
    """Return the dense |V| x |E| incidence matrix of `g`; column `k` has +1
    at the head and -1 at the tail of edge `k` (stored orientation).

    """
    E = np.zeros((g.num_vertices, g.num_edges))

    for k, (i, j) in enumerate(g.edges):
        E[i, k] = 1.0
        E[j, k] = -1.0

    return E


def laplacian(E, a=None):
    """Graph Laplacian E E^T, or E diag(a) E^T with edge weights `a`."""
    E = np.asarray(E, dtype=float)
    if a is None:
        return E @ E.T
    a = np.broadcast_to(np.asarray(a, dtype=float), (E.shape[1],))
    return (E * a) @ E.T


def laplacian_spectrum(E, a=None):
    """Eigenvalues (ascending) and unit eigenvectors (columns) of the
    (weighted) Laplacian."""
    return linalg.eigh(laplacian(E, a))


def diameter(g):
    """Unweighted graph diameter; ``inf`` for a disconnected graph."""
    if g.num_vertices == 1:
        return 0
    dist = csgraph.shortest_path(g.adjacency(), directed=False,
                                 unweighted=True)
    d = dist.max()
    return int(d) if np.isfinite(d) else np.inf


#
# Edge space
#
def min_norm_potential(E, zeta):
    """Minimum-norm node vector y with E^T y closest to `zeta` (least
    squares)."""
    E = np.asarray(E, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    assert zeta.shape == (E.shape[1],)

    if E.shape[1] == 0:
        return np.zeros(E.shape[0])

    y, *_ = np.linalg.lstsq(E.T, zeta, rcond=None)

    return y


def project_edge_space(E, zeta):
    """Orthogonal projection of an edge vector onto Im(E^T)."""
    E = np.asarray(E, dtype=float)
    zeta = np.asarray(zeta, dtype=float)

    if zeta.shape != (E.shape[1],):
        raise GraphError(f"edge vector has {zeta.size} entries, the graph "
                         f"has {E.shape[1]} edges")

    return E.T @ min_norm_potential(E, zeta)


def check_edge_vector(E, zeta, tol=EDGE_SPACE_TOL, name="zeta_star"):
    """Validate that `zeta` lies in Im(E^T); vectors off the edge space are
    rejected, never silently projected.

    Returns
    -------
    np.ndarray
        `zeta` as a float array.

    """
    zeta = np.asarray(zeta, dtype=float)
    resid = np.linalg.norm(zeta - project_edge_space(E, zeta))

    if resid > tol:
        raise GraphError(f"{name} is not in Im(E^T) (projection residual "
                         f"{resid:.3e} > {tol:.0e})", field=name)

    return zeta
