"""Content catalogs: score matrices, direct-demand vectors, cache sets.

A catalog is a sparse matrix of pairwise recommendation scores plus a
distribution of direct (non-recommended) requests. Catalogs are either
ingested from edge-list CSV files produced by an external recommender or
synthesized for desk-scale experiments.
"""

import warnings
from collections import deque

import numpy as np

__all__ = [
    "ScoreMatrix",
    "EdgeListError",
    "load_score_matrix",
    "write_score_matrix",
    "threshold_binarize",
    "largest_connected_component",
    "zipf_direct_demand",
    "synthetic_catalog",
    "validate_demand",
    "validate_cache",
    "read_demand_csv",
    "write_demand_csv",
]

#: absolute tolerance for "this vector sums to one" checks
DEMAND_SUM_TOL = 1e-9


class EdgeListError(ValueError):
    """Raised when an edge-list file cannot be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class ScoreMatrix:
    """Sparse matrix of pairwise recommendation scores.

    Stored entries lie in (0, 1]; absent entries mean a zero score.
    Diagonal entries are rejected at construction time: recommending a
    content after itself is never allowed, so no consumer ever reads them.

    Parameters
    ----------
    size : int
        Catalog size (number of contents).
    entries : iterable of (int, int, float)
        Sparse (i, j, score) triples. Duplicate (i, j) pairs are an error.
    """

    def __init__(self, size, entries):
        size = int(size)
        if size < 1:
            raise ValueError("catalog size must be >= 1, got %d" % size)
        rows = [dict() for _ in range(size)]
        for i, j, score in entries:
            i, j = int(i), int(j)
            if not (0 <= i < size and 0 <= j < size):
                raise ValueError("index (%d, %d) outside catalog of size %d" % (i, j, size))
            if i == j:
                raise ValueError("diagonal entry (%d, %d) is not allowed" % (i, j))
            score = float(score)
            if not 0.0 < score <= 1.0:
                raise ValueError("score %r for (%d, %d) outside (0, 1]" % (score, i, j))
            if j in rows[i]:
                raise ValueError("duplicate entry (%d, %d)" % (i, j))
            rows[i][j] = score
        self.size = size
        self._rows = tuple(rows)

    @property
    def nnz(self):
        """Number of stored (nonzero) entries."""
        return sum(len(r) for r in self._rows)

    def row(self, i):
        """Sparse row ``i`` as a mapping j -> score. Treat as read-only."""
        return self._rows[i]

    def get(self, i, j):
        """Score of the pair (i, j); 0.0 when the entry is absent."""
        return self._rows[i].get(j, 0.0)

    def entries(self):
        """Iterate (i, j, score) triples in (row, column) order."""
        for i, row in enumerate(self._rows):
            for j in sorted(row):
                yield i, j, row[j]

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return self.size == other.size and self._rows == other._rows

    def __repr__(self):
        return "ScoreMatrix(size=%d, nnz=%d)" % (self.size, self.nnz)


def load_score_matrix(path):
    """Load a :class:`ScoreMatrix` from an edge-list CSV file.

    The format is one header line ``K=<int>`` followed by ``i,j,score``
    rows with zero-based indices. Self-loop rows are dropped (a summary
    warning reports how many); duplicate pairs and out-of-range values
    are errors.

    Parameters
    ----------
    path : str or pathlib.Path
        File to read.

    Returns
    -------
    ScoreMatrix
    """
    entries = []
    self_loops = 0
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EdgeListError("empty file, expected a K=<int> header", line=1)
    header = lines[0].strip()
    if not header.startswith("K="):
        raise EdgeListError("expected header 'K=<int>', got %r" % header, line=1)
    try:
        size = int(header[2:])
    except ValueError:
        raise EdgeListError("malformed catalog size in header %r" % header, line=1) from None
    seen = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text:
            continue
        parts = text.split(",")
        if len(parts) != 3:
            raise EdgeListError("expected 'i,j,score', got %r" % raw, line=lineno)
        try:
            i, j, score = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise EdgeListError("malformed row %r" % raw, line=lineno) from None
        if not (0 <= i < size and 0 <= j < size):
            raise EdgeListError("index (%d, %d) outside catalog of size %d" % (i, j, size), line=lineno)
        if i == j:
            self_loops += 1
            continue
        if not 0.0 < score <= 1.0:
            raise EdgeListError("score %r outside (0, 1]" % score, line=lineno)
        if (i, j) in seen:
            raise EdgeListError("duplicate entry (%d, %d)" % (i, j), line=lineno)
        seen.add((i, j))
        entries.append((i, j, score))
    if self_loops:
        warnings.warn("dropped %d self-loop entr%s" % (self_loops, "y" if self_loops == 1 else "ies"),
                      stacklevel=2)
    return ScoreMatrix(size, entries)


def write_score_matrix(matrix, path):
    """Write a :class:`ScoreMatrix` in the edge-list CSV format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("K=%d\n" % matrix.size)
        for i, j, score in matrix.entries():
            fh.write("%d,%d,%s\n" % (i, j, repr(score)))


def threshold_binarize(matrix, threshold):
    """Binarize a score matrix: entries strictly above ``threshold`` become 1.

    Entries less than or equal to the threshold are removed. The strictly-
    above rule means values equal to the threshold are dropped.

    Parameters
    ----------
    matrix : ScoreMatrix
    threshold : float
        Must lie in [0, 1).

    Returns
    -------
    ScoreMatrix
        New matrix of the same size whose stored entries all equal 1.0.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1), got %r" % threshold)
    entries = [(i, j, 1.0) for i, j, score in matrix.entries() if score > threshold]
    return ScoreMatrix(matrix.size, entries)


def largest_connected_component(matrix):
    """Restrict a score matrix to the largest component of its support graph.

    The support graph is undirected: i and j are adjacent when either
    u_ij > 0 or u_ji > 0. Ties in component size are broken in favor of
    the component containing the smallest original index.

    Returns
    -------
    (ScoreMatrix, dict)
        The submatrix with indices remapped to 0..K'-1 (preserving the
        original order) and the old -> new index mapping.
    """
    size = matrix.size
    neighbors = [set() for _ in range(size)]
    for i, j, _ in matrix.entries():
        neighbors[i].add(j)
        neighbors[j].add(i)
    label = [-1] * size
    components = []
    for start in range(size):
        if label[start] >= 0:
            continue
        comp = []
        queue = deque([start])
        label[start] = len(components)
        while queue:
            node = queue.popleft()
            comp.append(node)
            for other in neighbors[node]:
                if label[other] < 0:
                    label[other] = len(components)
                    queue.append(other)
        components.append(comp)
    # components are discovered in increasing order of their smallest
    # member, so the first maximal one wins ties
    best = max(components, key=len)
    keep = sorted(best)
    mapping = {old: new for new, old in enumerate(keep)}
    entries = [(mapping[i], mapping[j], score)
               for i, j, score in matrix.entries()
               if i in mapping and j in mapping]
    return ScoreMatrix(len(keep), entries), mapping


def zipf_direct_demand(size, exponent):
    """Zipf-distributed direct demand over a catalog.

    Content index order is rank order: index 0 is the most popular
    direct content. ``exponent = 0`` gives the uniform distribution.

    Parameters
    ----------
    size : int
        Catalog size.
    exponent : float
        Zipf exponent, >= 0.

    Returns
    -------
    numpy.ndarray
        Probability vector of length ``size``.
    """
    if size < 1:
        raise ValueError("size must be >= 1, got %d" % size)
    if exponent < 0:
        raise ValueError("exponent must be >= 0, got %r" % exponent)
    ranks = np.arange(1, size + 1, dtype=float)
    weights = ranks ** (-float(exponent))
    return weights / weights.sum()


def synthetic_catalog(size, avg_out_degree, seed):
    """Random sparse score matrix with a connected support graph.

    Each row receives ``avg_out_degree`` uniformly random targets with
    scores uniform in (0, 1]; a random spanning cycle is then added so
    the support graph is connected. Deterministic for a given seed.
    """
    if not 0 < avg_out_degree < size:
        raise ValueError("need 0 < avg_out_degree < size, got %d vs %d" % (avg_out_degree, size))
    rng = np.random.default_rng(seed)
    rows = [dict() for _ in range(size)]
    for i in range(size):
        picks = rng.choice(size - 1, size=avg_out_degree, replace=False)
        scores = 1.0 - rng.random(avg_out_degree)
        for k, pick in enumerate(picks):
            j = int(pick) + (1 if pick >= i else 0)
            rows[i][j] = float(scores[k])
    cycle = rng.permutation(size)
    for k in range(size):
        i = int(cycle[k])
        j = int(cycle[(k + 1) % size])
        if i != j and j not in rows[i]:
            rows[i][j] = float(1.0 - rng.random())
    entries = [(i, j, s) for i, row in enumerate(rows) for j, s in row.items()]
    return ScoreMatrix(size, entries)


def validate_demand(vector, size=None):
    """Validate a demand distribution and return it as a float array.

    Checks nonnegativity and that the entries sum to one within
    ``DEMAND_SUM_TOL``.
    """
    p = np.asarray(vector, dtype=float)
    if p.ndim != 1:
        raise ValueError("demand distribution must be a vector")
    if size is not None and p.shape[0] != size:
        raise ValueError("demand distribution has length %d, expected %d" % (p.shape[0], size))
    if not np.all(np.isfinite(p)):
        raise ValueError("demand distribution has non-finite entries")
    if p.min(initial=0.0) < 0.0:
        raise ValueError("demand distribution has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > DEMAND_SUM_TOL:
        raise ValueError("demand distribution sums to %r, expected 1" % total)
    return p


def validate_cache(cache, size):
    """Validate a cache set against a catalog size; returns a frozenset."""
    items = frozenset(int(c) for c in cache)
    if len(items) != len(list(cache)):
        raise ValueError("cache contains duplicate indices")
    for c in items:
        if not 0 <= c < size:
            raise ValueError("cached index %d outside catalog of size %d" % (c, size))
    return items


def write_demand_csv(vector, path):
    """Serialize a demand vector as ``index,probability`` CSV."""
    p = validate_demand(vector)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,probability\n")
        for i, value in enumerate(p):
            fh.write("%d,%s\n" % (i, repr(float(value))))


def read_demand_csv(path):
    """Read a demand vector written by :func:`write_demand_csv`."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "index,probability":
            raise ValueError("expected 'index,probability' header, got %r" % header)
        for raw in fh:
            text = raw.strip()
            if not text:
                continue
            idx, prob = text.split(",")
            values[int(idx)] = float(prob)
    if sorted(values) != list(range(len(values))):
        raise ValueError("demand CSV indices are not contiguous from 0")
    return validate_demand([values[i] for i in range(len(values))])
