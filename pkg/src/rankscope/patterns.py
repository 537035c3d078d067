"""Sampling patterns over partially observed arrays.

A sampling pattern records which entries of an ``n_1 x ... x n_d`` array
are observed.  Coordinates are zero-based tuples in row-major
(lexicographic) order.  Mode numbers are 1-based: mode ``i`` refers to the
``i``-th axis, ``1 <= i <= d``.

The module also provides the two flattening conventions used throughout
the package:

* matricization: mode ``i`` becomes the row axis, all remaining modes are
  raveled row-major into the column axis;
* unfolding: the leading modes ``1..i`` are raveled into the row axis,
  the trailing modes ``i+1..d`` into the column axis.

Both agree for ``i = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PatternFormatError",
    "SamplingPattern",
    "ObservedData",
    "IndexMaps",
    "bernoulli_pattern",
    "per_column_pattern",
    "observed_count",
    "coords_by_slice",
    "slice_counts",
    "matricization_index",
    "matricization_coord",
    "unfolding_index",
    "unfolding_coord",
    "matricize_array",
    "unfold_array",
    "nonzero_rows",
    "dense_mask",
    "derive_seed",
    "read_pattern",
    "write_pattern",
    "read_values",
    "write_values",
    "observed_from_array",
    "array_from_observed",
]

# Dense materialization guard: keeps accidental huge allocations out of
# the exhaustive code paths, which are meant for desk-scale inputs.
MAX_DENSE_CELLS = 1 << 20


class PatternFormatError(ValueError):
    """Raised when a pattern or values file cannot be parsed."""


def _as_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(n) for n in dims)
    if len(dims) < 2:
        raise ValueError(f"need at least two modes, got dims={dims}")
    if any(n < 1 for n in dims):
        raise ValueError(f"dimensions must be positive, got dims={dims}")
    return dims


def _check_coord(coord, dims) -> tuple[int, ...]:
    coord = tuple(int(x) for x in coord)
    if len(coord) != len(dims):
        raise ValueError(f"coordinate {coord} has wrong length for dims {dims}")
    for x, n in zip(coord, dims):
        if not 0 <= x < n:
            raise ValueError(f"coordinate {coord} out of range for dims {dims}")
    return coord


@dataclass(frozen=True)
class SamplingPattern:
    """Set of observed coordinates of an ``n_1 x ... x n_d`` array.

    Parameters
    ----------
    dims : tuple of int
        Mode sizes, at least two modes, all positive.
    observed : frozenset of tuple of int
        Zero-based coordinates, each within ``dims``.
    """

    dims: tuple[int, ...]
    observed: frozenset

    def __post_init__(self):
        dims = _as_dims(self.dims)
        observed = frozenset(_check_coord(c, dims) for c in self.observed)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "observed", observed)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def n_observed(self) -> int:
        return len(self.observed)

    @property
    def total_cells(self) -> int:
        return math.prod(self.dims)

    def sorted_coords(self) -> list:
        return sorted(self.observed)


@dataclass(frozen=True)
class ObservedData:
    """A sampling pattern together with the observed values.

    ``values`` maps each observed coordinate to a float; its key set must
    equal ``pattern.observed`` exactly.
    """

    pattern: SamplingPattern
    values: dict

    def __post_init__(self):
        values = {_check_coord(c, self.pattern.dims): float(v)
                  for c, v in self.values.items()}
        if set(values) != set(self.pattern.observed):
            raise ValueError("value keys do not match the observed coordinate set")
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.pattern.dims


@dataclass(frozen=True)
class IndexMaps:
    """Cumulative size products for a fixed ``dims``.

    ``leading(i)`` is ``n_1 * ... * n_i``, ``trailing(i)`` is
    ``n_{i+1} * ... * n_d`` and ``complement(i)`` is the product of every
    mode size except ``n_i``.  For every mode,
    ``leading(i) * trailing(i)`` equals the total cell count.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_dims(self.dims))

    def leading(self, i: int) -> int:
        self._check_mode(i)
        return math.prod(self.dims[:i])

    def trailing(self, i: int) -> int:
        self._check_mode(i)
        return math.prod(self.dims[i:])

    def complement(self, i: int) -> int:
        self._check_mode(i)
        return math.prod(self.dims) // self.dims[i - 1]

    def _check_mode(self, i: int):
        if not 1 <= i <= len(self.dims):
            raise ValueError(f"mode {i} out of range for dims {self.dims}")


def _ravel(coord, dims) -> int:
    # row-major, zero-based
    flat = 0
    for x, n in zip(coord, dims):
        flat = flat * n + x
    return flat


def _unravel(flat, dims) -> tuple[int, ...]:
    out = []
    for n in reversed(dims):
        out.append(flat % n)
        flat //= n
    return tuple(reversed(out))


def matricization_index(mode: int, coord, dims) -> tuple[int, int]:
    """Position of ``coord`` in the mode-``mode`` matricization.

    The row is the ``mode``-th component of ``coord``; the column ravels
    the remaining components, in their original order, row-major.
    """
    dims = _as_dims(dims)
    IndexMaps(dims)._check_mode(mode)
    coord = _check_coord(coord, dims)
    i = mode - 1
    rest = coord[:i] + coord[i + 1:]
    rest_dims = dims[:i] + dims[i + 1:]
    return coord[i], _ravel(rest, rest_dims)


def matricization_coord(mode: int, row: int, col: int, dims) -> tuple[int, ...]:
    """Inverse of :func:`matricization_index`."""
    dims = _as_dims(dims)
    IndexMaps(dims)._check_mode(mode)
    i = mode - 1
    rest_dims = dims[:i] + dims[i + 1:]
    if not 0 <= row < dims[i]:
        raise ValueError(f"row {row} out of range for mode {mode} of dims {dims}")
    if not 0 <= col < math.prod(rest_dims):
        raise ValueError(f"column {col} out of range for mode {mode} of dims {dims}")
    rest = _unravel(col, rest_dims)
    return rest[:i] + (row,) + rest[i:]


def unfolding_index(mode: int, coord, dims) -> tuple[int, int]:
    """Position of ``coord`` in the mode-``mode`` unfolding.

    The row ravels components ``1..mode`` row-major, the column ravels
    components ``mode+1..d`` row-major.  Agrees with
    :func:`matricization_index` for ``mode = 1``.
    """
    dims = _as_dims(dims)
    IndexMaps(dims)._check_mode(mode)
    coord = _check_coord(coord, dims)
    return _ravel(coord[:mode], dims[:mode]), _ravel(coord[mode:], dims[mode:])


def unfolding_coord(mode: int, row: int, col: int, dims) -> tuple[int, ...]:
    """Inverse of :func:`unfolding_index`."""
    dims = _as_dims(dims)
    IndexMaps(dims)._check_mode(mode)
    if not 0 <= row < math.prod(dims[:mode]):
        raise ValueError(f"row {row} out of range for unfolding {mode} of dims {dims}")
    if not 0 <= col < math.prod(dims[mode:]):
        raise ValueError(f"column {col} out of range for unfolding {mode} of dims {dims}")
    return _unravel(row, dims[:mode]) + _unravel(col, dims[mode:])


def matricize_array(array: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization of a dense array, matching
    :func:`matricization_index` entrywise."""
    a = np.asarray(array)
    IndexMaps(a.shape)._check_mode(mode)
    return np.moveaxis(a, mode - 1, 0).reshape(a.shape[mode - 1], -1)


def unfold_array(array: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding of a dense array, matching
    :func:`unfolding_index` entrywise."""
    a = np.asarray(array)
    IndexMaps(a.shape)._check_mode(mode)
    return a.reshape(math.prod(a.shape[:mode]), -1)


def nonzero_rows(matrix: np.ndarray) -> int:
    """Number of rows of a binary matrix containing at least one 1."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    return int(np.count_nonzero(m.any(axis=1)))


def dense_mask(pattern: SamplingPattern) -> np.ndarray:
    """Dense boolean indicator array of a pattern (desk scale only)."""
    if pattern.total_cells > MAX_DENSE_CELLS:
        raise ValueError(f"refusing dense mask with {pattern.total_cells} cells")
    mask = np.zeros(pattern.dims, dtype=bool)
    for c in pattern.observed:
        mask[c] = True
    return mask


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for the substream keyed by ``keys``."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def _substream(seed: int, index: int) -> np.random.Generator:
    # independent per-slice substream; generation order across slices is
    # irrelevant to the result
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([int(seed), int(index)])


def bernoulli_pattern(dims, p: float, seed: int) -> SamplingPattern:
    """Pattern with each cell observed independently with probability ``p``.

    Each trailing-mode slice draws from its own substream keyed by
    ``(seed, slice index)``, so the result does not depend on the order
    slices are generated in.

    Parameters
    ----------
    dims : tuple of int
        Mode sizes.
    p : float
        Observation probability, in ``[0, 1]``.
    seed : int
        Non-negative base seed.
    """
    dims = _as_dims(dims)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    lead = dims[:-1]
    block = math.prod(lead)
    coords = []
    for t in range(dims[-1]):
        u = _substream(seed, t).random(block)
        for flat in np.flatnonzero(u < p):
            coords.append(_unravel(int(flat), lead) + (t,))
    return SamplingPattern(dims, frozenset(coords))


def per_column_pattern(dims, l: int, seed: int) -> SamplingPattern:
    """Matrix pattern with exactly ``l`` observed rows in every column.

    Rows are drawn without replacement from an independent substream per
    column keyed by ``(seed, column)``.
    """
    dims = _as_dims(dims)
    if len(dims) != 2:
        raise ValueError("per-column sampling is defined for matrices only")
    n1, n2 = dims
    if not 0 <= l <= n1:
        raise ValueError(f"per-column count {l} out of range for {n1} rows")
    coords = []
    for j in range(n2):
        rows = _substream(seed, j).choice(n1, size=l, replace=False)
        coords.extend((int(x), j) for x in rows)
    return SamplingPattern(dims, frozenset(coords))


def _normalize_selector(selector, dims):
    if selector is None:
        return tuple(None for _ in dims)
    selector = tuple(selector)
    if len(selector) != len(dims):
        raise ValueError(f"selector has {len(selector)} modes, dims has {len(dims)}")
    out = []
    for sel, n in zip(selector, dims):
        if sel is None:
            out.append(None)
            continue
        if isinstance(sel, int):
            sel = (sel,)
        idx = frozenset(int(x) for x in sel)
        for x in idx:
            if not 0 <= x < n:
                raise ValueError(f"selector index {x} out of range for size {n}")
        out.append(idx)
    return tuple(out)


def observed_count(pattern: SamplingPattern, selector=None) -> int:
    """Number of observed coordinates inside a block selector.

    ``selector`` gives, per mode, either ``None`` (whole axis), a single
    index, or an iterable of indices.  An empty per-mode selection yields
    zero.
    """
    selector = _normalize_selector(selector, pattern.dims)
    count = 0
    for coord in pattern.observed:
        if all(sel is None or x in sel for x, sel in zip(coord, selector)):
            count += 1
    return count


def coords_by_slice(pattern: SamplingPattern, mode: int) -> dict:
    """Observed coordinates grouped by their mode-``mode`` component.

    Returns a dict mapping each index ``t`` (including empty ones) to the
    lexicographically sorted coordinates with ``coord[mode-1] == t``.
    """
    IndexMaps(pattern.dims)._check_mode(mode)
    groups = {t: [] for t in range(pattern.dims[mode - 1])}
    for coord in pattern.sorted_coords():
        groups[coord[mode - 1]].append(coord)
    return groups


def slice_counts(pattern: SamplingPattern, mode: int) -> tuple[int, ...]:
    """Observed-entry count for each mode-``mode`` slice."""
    groups = coords_by_slice(pattern, mode)
    return tuple(len(groups[t]) for t in range(pattern.dims[mode - 1]))


# ---------------------------------------------------------------------------
# file formats
#
# Pattern file: a header line "dims: n1 n2 ... nd" followed by one
# zero-based coordinate per line, space separated, written in sorted
# order.  Values file: same header, each line carrying the coordinate
# followed by the value in scientific notation with 17 significant
# digits.  Lines starting with '#' and blank lines are ignored on read.
# ---------------------------------------------------------------------------


def _format_value(v: float) -> str:
    return np.format_float_scientific(v, precision=16, unique=False)


def _parse_header(lines):
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if not text.startswith("dims:"):
            raise PatternFormatError(f"line {lineno}: expected 'dims:' header, got {text!r}")
        parts = text[len("dims:"):].split()
        if not parts:
            raise PatternFormatError(f"line {lineno}: empty dims header")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            raise PatternFormatError(f"line {lineno}: malformed dims header {text!r}") from None
        return dims
    raise PatternFormatError("missing 'dims:' header")


def _data_lines(lines):
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        yield lineno, text


def write_pattern(pattern: SamplingPattern, path, comments=()) -> None:
    """Write a pattern file; coordinates are emitted in sorted order.

    ``comments`` lines are written first, '#'-prefixed; readers skip
    them.
    """
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("dims: " + " ".join(str(n) for n in pattern.dims) + "\n")
        for coord in pattern.sorted_coords():
            fh.write(" ".join(str(x) for x in coord) + "\n")


def read_pattern(path) -> SamplingPattern:
    """Read a pattern file written by :func:`write_pattern`."""
    with open(path) as fh:
        lines = list(enumerate(fh, start=1))
    it = iter(lines)
    dims = _parse_header(it)
    try:
        dims = _as_dims(dims)
    except ValueError as e:
        raise PatternFormatError(str(e)) from None
    coords = set()
    for lineno, text in _data_lines(it):
        parts = text.split()
        if len(parts) != len(dims):
            raise PatternFormatError(
                f"line {lineno}: expected {len(dims)} indices, got {len(parts)}")
        try:
            coord = tuple(int(p) for p in parts)
        except ValueError:
            raise PatternFormatError(f"line {lineno}: malformed coordinate {text!r}") from None
        try:
            coord = _check_coord(coord, dims)
        except ValueError as e:
            raise PatternFormatError(f"line {lineno}: {e}") from None
        if coord in coords:
            raise PatternFormatError(f"line {lineno}: duplicate coordinate {coord}")
        coords.add(coord)
    return SamplingPattern(dims, frozenset(coords))


def write_values(data: ObservedData, path, comments=()) -> None:
    """Write a values file; lines are emitted in sorted coordinate order.

    ``comments`` lines are written first, '#'-prefixed; readers skip
    them.
    """
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("dims: " + " ".join(str(n) for n in data.dims) + "\n")
        for coord in data.pattern.sorted_coords():
            fh.write(" ".join(str(x) for x in coord)
                     + " " + _format_value(data.values[coord]) + "\n")


def read_values(path) -> ObservedData:
    """Read a values file written by :func:`write_values`."""
    with open(path) as fh:
        lines = list(enumerate(fh, start=1))
    it = iter(lines)
    dims = _parse_header(it)
    try:
        dims = _as_dims(dims)
    except ValueError as e:
        raise PatternFormatError(str(e)) from None
    values = {}
    for lineno, text in _data_lines(it):
        parts = text.split()
        if len(parts) != len(dims) + 1:
            raise PatternFormatError(
                f"line {lineno}: expected {len(dims)} indices and a value")
        try:
            coord = tuple(int(p) for p in parts[:-1])
            value = float(parts[-1])
        except ValueError:
            raise PatternFormatError(f"line {lineno}: malformed line {text!r}") from None
        try:
            coord = _check_coord(coord, dims)
        except ValueError as e:
            raise PatternFormatError(f"line {lineno}: {e}") from None
        if coord in values:
            raise PatternFormatError(f"line {lineno}: duplicate coordinate {coord}")
        values[coord] = value
    pattern = SamplingPattern(dims, frozenset(values))
    return ObservedData(pattern, values)


def observed_from_array(array: np.ndarray, pattern: SamplingPattern | None = None) -> ObservedData:
    """Observed data from a dense array, fully observed unless a pattern
    restricts it."""
    a = np.asarray(array, dtype=float)
    if pattern is None:
        if a.size > MAX_DENSE_CELLS:
            raise ValueError(f"refusing full observation of {a.size} cells")
        coords = [_unravel(flat, a.shape) for flat in range(a.size)]
        pattern = SamplingPattern(a.shape, frozenset(coords))
    elif pattern.dims != a.shape:
        raise ValueError(f"pattern dims {pattern.dims} do not match array shape {a.shape}")
    values = {c: float(a[c]) for c in pattern.observed}
    return ObservedData(pattern, values)


def array_from_observed(data: ObservedData, fill: float = 0.0) -> np.ndarray:
    """Dense array holding the observed values, ``fill`` elsewhere."""
    if data.pattern.total_cells > MAX_DENSE_CELLS:
        raise ValueError(f"refusing dense array with {data.pattern.total_cells} cells")
    out = np.full(data.dims, float(fill))
    for c, v in data.values.items():
        out[c] = v
    return out
