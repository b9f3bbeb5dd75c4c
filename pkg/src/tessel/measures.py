"""Point sets, target measures and the point sequences built from them.

Covers the unscrambled Sobol sequence (Joe-Kuo direction numbers, d <= 100),
the candidate sets used by the selection algorithms, the coordinatewise
inverse-CDF ("isoprobabilistic") transform, and a maximin Latin hypercube.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special

from .errors import (
    CSVParseError,
    DimensionMismatchError,
    DomainError,
    SizeError,
    UnsupportedDimensionError,
    UnsupportedMeasureError,
    ValidationError,
)
from .rng import LHS, make_rng

SOBOL_BITS = 32
SOBOL_MAX_DIM = 100
MAX_CANDIDATES = 50_000_000


class PointSet:
    """Ordered, immutable ``n x d`` matrix of points.

    Row order matters: incremental constructions return their points in
    selection order.
    """

    __slots__ = ("_points",)

    def __init__(self, points, dim=None):
        arr = np.array(points, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            if dim is None:
                raise ValidationError("a 1-d array is ambiguous; pass dim or a 2-d array")
            arr = arr.reshape(-1, dim)
        if arr.ndim != 2:
            raise ValidationError(f"points must be a 2-d array, got shape {arr.shape}")
        if dim is not None and arr.shape[1] != dim:
            raise DimensionMismatchError(f"expected dimension {dim}, got {arr.shape[1]}")
        if arr.shape[1] < 1:
            raise ValidationError("dimension must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("point coordinates must be finite")
        arr.setflags(write=False)
        self._points = arr

    @classmethod
    def empty(cls, dim):
        return cls(np.empty((0, dim)))

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def size(self) -> int:
        return self._points.shape[0]

    def __len__(self):
        return self.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._points
        return self._points.astype(dtype)

    def __getitem__(self, idx):
        return self._points[idx]

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return self._points.shape == other._points.shape and np.array_equal(
            self._points, other._points
        )

    def __hash__(self):
        return hash((self._points.shape, self._points.tobytes()))

    def __repr__(self):
        return f"PointSet(size={self.size}, dim={self.dim})"

    def take(self, indices) -> "PointSet":
        return PointSet(self._points[np.asarray(indices, dtype=np.intp)], dim=self.dim)

    def concat(self, other) -> "PointSet":
        other = as_points(other, self.dim)
        return PointSet(np.vstack([self._points, other.points]), dim=self.dim)

    def to_csv(self, path=None) -> str:
        text = format_csv(self._points, [f"x{i + 1}" for i in range(self.dim)])
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path) -> "PointSet":
        header, rows = read_csv(path)
        return cls(rows.reshape(-1, len(header)))


def as_points(x, dim=None) -> PointSet:
    """Coerce arrays (or PointSets) to a PointSet, checking ``dim`` if given."""
    if isinstance(x, PointSet):
        if dim is not None and x.dim != dim:
            raise DimensionMismatchError(f"expected dimension {dim}, got {x.dim}")
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if dim is None:
            arr = arr.reshape(1, -1)
        else:
            arr = arr.reshape(-1, dim)
    return PointSet(arr, dim=dim)


# ---------------------------------------------------------------- CSV

def format_csv(values, header) -> str:
    """Render a 2-d float array as CSV; ``repr`` floats round-trip exactly."""
    values = np.asarray(values, dtype=np.float64)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in values:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def read_csv(path):
    """Read a headered, comma-delimited numeric CSV.

    Returns ``(header, values)`` where ``values`` has one row per data line.
    Raises :class:`CSVParseError` with the offending line number.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CSVParseError(f"not UTF-8: {exc}", path) from None
    reader = csv.reader(io.StringIO(text))
    header = None
    rows = []
    for lineno, record in enumerate(reader, start=1):
        if not record or all(not c.strip() for c in record):
            continue
        if header is None:
            header = [c.strip() for c in record]
            if any(not c for c in header):
                raise CSVParseError("empty column name in header", path, lineno)
            try:
                [float(c) for c in header]
            except ValueError:
                pass
            else:
                raise CSVParseError("header row required", path, lineno)
            continue
        if len(record) != len(header):
            raise CSVParseError(
                f"expected {len(header)} columns, found {len(record)}", path, lineno
            )
        try:
            vals = [float(c) for c in record]
        except ValueError:
            raise CSVParseError("non-numeric value", path, lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise CSVParseError("non-finite value", path, lineno)
        rows.append(vals)
    if header is None:
        raise CSVParseError("empty file", path)
    return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValidationError(f"uniform marginal needs a < b, got ({self.a}, {self.b})")

    def ppf(self, u):
        return self.a + (self.b - self.a) * u

    def cdf(self, x):
        return np.clip((np.asarray(x) - self.a) / (self.b - self.a), 0.0, 1.0)

    def spec(self):
        return f"uniform({self.a!r},{self.b!r})"


@dataclass(frozen=True)
class Normal:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"normal marginal needs sigma > 0, got {self.sigma}")

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(u)

    def cdf(self, x):
        return special.ndtr((np.asarray(x) - self.mu) / self.sigma)

    def spec(self):
        return f"normal({self.mu!r},{self.sigma!r})"


@dataclass(frozen=True)
class LogNormal:
    """``exp`` of a normal(mu, sigma) variable."""

    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"lognormal marginal needs sigma > 0, got {self.sigma}")

    def ppf(self, u):
        return np.exp(self.mu + self.sigma * special.ndtri(u))

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, np.nan)) - self.mu) / self.sigma
        return np.where(x > 0, special.ndtr(np.nan_to_num(z, nan=-np.inf)), 0.0)

    def spec(self):
        return f"lognormal({self.mu!r},{self.sigma!r})"


@dataclass(frozen=True)
class UnitCubeUniform:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be at least 1")

    @property
    def marginals(self):
        return (Uniform(0.0, 1.0),) * self.dim

    def sample(self, size, rng) -> np.ndarray:
        return rng.random((size, self.dim))

    def spec(self):
        return f"uniform:d={self.dim}"


@dataclass(frozen=True)
class ProductMarginals:
    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValidationError("need at least one marginal")

    @property
    def dim(self):
        return len(self.marginals)

    def sample(self, size, rng) -> np.ndarray:
        u = rng.random((size, self.dim))
        # random() can return exactly 0; ppf(0) is -inf for unbounded marginals
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return _apply_ppf(u, self.marginals)

    def spec(self):
        ms = self.marginals
        if all(m == Normal() for m in ms):
            return f"normal:d={len(ms)}"
        return "product:" + ";".join(m.spec() for m in ms)


@dataclass(frozen=True)
class Empirical:
    atoms: PointSet
    weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        atoms = as_points(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if atoms.size == 0:
            raise ValidationError("empirical measure needs at least one atom")
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != (atoms.size,):
                raise ValidationError("one weight per atom required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValidationError("empirical weights must be nonnegative and sum to 1")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.atoms.dim

    def sample(self, size, rng) -> np.ndarray:
        idx = rng.choice(self.atoms.size, size=size, p=self.weights)
        return self.atoms.points[idx]

    def spec(self):
        return f"empirical:n={self.atoms.size}"


TargetMeasure = UnitCubeUniform | ProductMarginals | Empirical


def parse_measure(text: str):
    """Parse a measure spec such as ``uniform:d=2``, ``normal:d=2`` or
    ``product:normal(0,1);lognormal(0,0.5);uniform(-1,1)``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if kind in ("uniform", "normal"):
        key, _, val = rest.partition("=")
        if key.strip() != "d":
            raise ValidationError(f"expected '{kind}:d=<int>', got {text!r}")
        try:
            d = int(val)
        except ValueError:
            raise ValidationError(f"bad dimension in {text!r}") from None
        if kind == "uniform":
            return UnitCubeUniform(d)
        return ProductMarginals((Normal(),) * d)
    if kind == "product":
        ctors = {"uniform": Uniform, "normal": Normal, "lognormal": LogNormal}
        margs = []
        for item in rest.split(";"):
            item = item.strip()
            name, _, args = item.partition("(")
            if name not in ctors or not args.endswith(")"):
                raise ValidationError(f"bad marginal {item!r}")
            try:
                params = [float(a) for a in args[:-1].split(",")]
            except ValueError:
                raise ValidationError(f"bad marginal parameters in {item!r}") from None
            if len(params) != 2:
                raise ValidationError(f"marginal {item!r} takes two parameters")
            margs.append(ctors[name](*params))
        return ProductMarginals(tuple(margs))
    raise ValidationError(f"unknown measure spec {text!r}")


# ---------------------------------------------------------------- Sobol

@lru_cache(maxsize=1)
def _direction_table():
    text = resources.files("tessel").joinpath("data/new-joe-kuo-100.txt").read_text()
    table = {}
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("d "):
            continue
        parts = [int(t) for t in line.split()]
        d, s, a = parts[:3]
        table[d] = (s, a, parts[3:3 + s])
    return table


@lru_cache(maxsize=8)
def _direction_numbers(dim):
    """``(dim, SOBOL_BITS)`` uint64 array of direction integers ``v_k * 2^BITS``."""
    table = _direction_table()
    V = np.zeros((dim, SOBOL_BITS), dtype=np.uint64)
    for k in range(SOBOL_BITS):
        V[0, k] = 1 << (SOBOL_BITS - 1 - k)
    for j in range(1, dim):
        s, a, m_init = table[j + 1]
        m = list(m_init)
        for k in range(s, SOBOL_BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        for k in range(SOBOL_BITS):
            V[j, k] = m[k] << (SOBOL_BITS - 1 - k)
    V.setflags(write=False)
    return V


def sobol_sequence(d: int, N: int, skip: int = 0) -> PointSet:
    """Points ``skip, ..., skip+N-1`` of the unscrambled Sobol sequence.

    Gray-code ordering; the first point (index 0) is the origin. Every prefix
    of length ``2^k`` is a (0, k, d)-net, so for ``d = 1`` it is exactly the
    dyadic grid ``{j / 2^k}``.
    """
    d, N, skip = int(d), int(N), int(skip)
    if d < 1:
        raise ValidationError("dimension must be at least 1")
    if d > SOBOL_MAX_DIM:
        raise UnsupportedDimensionError(
            f"Sobol direction numbers shipped for d <= {SOBOL_MAX_DIM}, got {d}"
        )
    if N < 0 or skip < 0:
        raise ValidationError("N and skip must be nonnegative")
    if skip + N > 2**SOBOL_BITS:
        raise SizeError(f"at most 2^{SOBOL_BITS} Sobol points")
    V = _direction_numbers(d)
    # state at index `skip`: XOR of direction numbers over bits of gray(skip)
    state = np.zeros(d, dtype=np.uint64)
    g = skip ^ (skip >> 1)
    k = 0
    while g:
        if g & 1:
            state ^= V[:, k]
        g >>= 1
        k += 1
    out = np.empty((N, d), dtype=np.uint64)
    idx = skip
    for r in range(N):
        out[r] = state
        # next point flips the direction number of the lowest zero bit of idx
        c = ((~idx) & (idx + 1)).bit_length() - 1
        state = state ^ V[:, c]
        idx += 1
    return PointSet(out.astype(np.float64) / float(2**SOBOL_BITS))


def candidate_set(d: int, n_target: int, include_vertices: bool = True,
                  size: int | None = None) -> PointSet:
    """Sobol candidate set of ``1000*d + 2*n_target`` points (or ``size``),
    optionally followed by the ``2^d`` cube vertices.

    The Sobol origin is skipped so that the vertex ``(0,...,0)`` is never
    duplicated; all candidates are distinct.
    """
    d, n_target = int(d), int(n_target)
    if n_target < 0:
        raise ValidationError("n_target must be nonnegative")
    if include_vertices and d > 20:
        raise SizeError(f"2^{d} vertices requested; vertices supported for d <= 20")
    N = 1000 * d + 2 * n_target if size is None else int(size)
    total = N + (2**d if include_vertices else 0)
    if total > MAX_CANDIDATES:
        raise SizeError(f"{total} candidates exceeds the limit of {MAX_CANDIDATES}")
    pts = sobol_sequence(d, N, skip=1).points
    if include_vertices:
        verts = ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1).astype(np.float64)
        pts = np.vstack([pts, verts])
    return PointSet(pts)


# ---------------------------------------------------------------- transforms

def _apply_ppf(u, marginals):
    out = np.empty_like(u)
    for i, m in enumerate(marginals):
        out[:, i] = m.ppf(u[:, i])
    return out


def iso_transform(u, measure) -> PointSet:
    """Coordinatewise inverse-CDF map of ``u`` in ``[0,1]^d`` to ``measure``.

    Points on the closed upper face (``u = 1``) are rejected, and so is
    ``u = 0`` for marginals with unbounded lower support.
    """
    if isinstance(measure, Empirical):
        raise UnsupportedMeasureError("no isoprobabilistic transform for an empirical measure")
    u = as_points(u, measure.dim).points
    if np.any(u < 0.0) or np.any(u >= 1.0):
        raise DomainError("iso_transform needs u in [0,1)^d")
    margs = measure.marginals
    for i, m in enumerate(margs):
        if not isinstance(m, Uniform) and np.any(u[:, i] == 0.0):
            raise DomainError(f"u = 0 maps to -inf for marginal {m.spec()}")
    return PointSet(_apply_ppf(u, margs))


# ---------------------------------------------------------------- LHS

def _min_dist_state(D):
    # D is symmetric with an infinite diagonal; each pair is counted twice
    dmin = D.min()
    return dmin, int(np.count_nonzero(D <= dmin * (1 + 1e-12)))


def random_lhs(d: int, m: int, rng) -> np.ndarray:
    """Plain Latin hypercube: one random permutation per coordinate,
    uniform jitter within each stratum."""
    perms = np.stack([rng.permutation(m) for _ in range(d)], axis=1)
    return (perms + rng.random((m, d))) / m


def maximin_lhs(d: int, m: int, seed: int) -> PointSet:
    """Latin hypercube of ``m`` points in ``[0,1]^d`` improved by coordinate
    swaps that increase the minimum interpoint distance.

    Budget: ``10 m^2`` proposed swaps. A swap is kept when it raises the
    minimum distance, or keeps it and reduces the number of pairs attaining
    it; so the result is never worse than the initial LHS.
    """
    d, m = int(d), int(m)
    if d < 1:
        raise ValidationError("dimension must be at least 1")
    if m < 2:
        raise ValidationError("maximin_lhs needs m >= 2")
    rng = make_rng(seed, LHS, d, m)
    X = random_lhs(d, m, rng)
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    best = _min_dist_state(D)
    budget = 10 * m * m
    cols = rng.integers(0, d, size=budget)
    pairs = rng.integers(0, m, size=(budget, 2))
    for t in range(budget):
        i, j = pairs[t]
        if i == j:
            continue
        c = cols[t]
        X[[i, j], c] = X[[j, i], c]
        old_i, old_j = D[i].copy(), D[j].copy()
        rows = np.sqrt(((X[None, :, :] - X[[i, j], None, :]) ** 2).sum(-1))
        rows[0, i] = rows[1, j] = np.inf
        D[i], D[:, i] = rows[0], rows[0]
        D[j], D[:, j] = rows[1], rows[1]
        cand = _min_dist_state(D)
        if cand[0] > best[0] * (1 + 1e-12) or (
            cand[0] >= best[0] * (1 - 1e-12) and cand[1] < best[1]
        ):
            best = cand
        else:
            X[[i, j], c] = X[[j, i], c]
            D[i], D[:, i] = old_i, old_i
            D[j], D[:, j] = old_j, old_j
            D[i, j] = D[j, i] = old_i[j]
    return PointSet(X)


def is_lhs(points, m=None) -> bool:
    """True when every coordinate has exactly one point per stratum."""
    X = as_points(points).points
    n = X.shape[0] if m is None else m
    strata = np.floor(X * n).astype(int)
    return all(
        np.array_equal(np.sort(strata[:, i]), np.arange(n)) for i in range(X.shape[1])
    )


def min_pairwise_distance(points) -> float:
    X = as_points(points).points
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    return float(D.min())
