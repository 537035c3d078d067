"""Rank specifications for the five data models.

A :class:`RankSpec` tags a rank with the model it belongs to:

* ``single``: one matrix rank ``r``;
* ``multi``: a shared-column-space triple ``(r1, r2, r)`` for a matrix
  ``[U1 | U2]`` whose views have ranks ``r1`` and ``r2`` and whose
  concatenation has rank ``r``;
* ``cp``: one tensor rank ``r`` (sum of ``r`` outer products);
* ``tucker``: multilinear ranks ``(m_{j+1}, ..., m_d)`` of the trailing
  matricizations, relative to a split ``j``;
* ``tt``: a train of unfolding ranks ``(u_1, ..., u_{d-1})``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

MODELS = ("single", "multi", "cp", "tucker", "tt")


def _pos(name, value):
    value = int(value)
    if value < 1:
        raise ValueError(f"{name} must be at least 1, got {value}")
    return value


@dataclass(frozen=True)
class RankSpec:
    """Model-tagged rank.  Use the per-model constructors."""

    model: str
    r: int | None = None
    triple: tuple[int, int, int] | None = None
    ms: tuple[int, ...] | None = None
    split: int | None = None
    us: tuple[int, ...] | None = None

    @classmethod
    def single(cls, r: int) -> "RankSpec":
        return cls(model="single", r=_pos("rank", r))

    @classmethod
    def multi(cls, r1: int, r2: int, r: int) -> "RankSpec":
        r1, r2, r = int(r1), int(r2), int(r)
        if r1 < 0 or r2 < 0:
            raise ValueError(f"view ranks must be non-negative, got ({r1}, {r2})")
        _pos("joint rank", r)
        if not max(r1, r2) <= r <= r1 + r2:
            raise ValueError(
                f"need max(r1, r2) <= r <= r1 + r2, got ({r1}, {r2}, {r})")
        return cls(model="multi", triple=(r1, r2, r))

    @classmethod
    def cp(cls, r: int) -> "RankSpec":
        return cls(model="cp", r=_pos("rank", r))

    @classmethod
    def tucker(cls, ms, split: int) -> "RankSpec":
        ms = tuple(_pos("multilinear rank", m) for m in ms)
        split = int(split)
        if not ms:
            raise ValueError("tucker rank vector is empty")
        if split < 1:
            raise ValueError(f"split must be at least 1, got {split}")
        return cls(model="tucker", ms=ms, split=split)

    @classmethod
    def tt(cls, us) -> "RankSpec":
        us = tuple(_pos("train rank", u) for u in us)
        if not us:
            raise ValueError("train rank vector is empty")
        return cls(model="tt", us=us)

    def validate_for_dims(self, dims) -> None:
        """Check the rank against concrete mode sizes.

        For the multi model ``dims`` is ``(n, n1, n2)``: shared rows and
        the two view widths.
        """
        if self.model == "single":
            n1, n2 = dims
            if self.r > min(n1, n2):
                raise ValueError(f"rank {self.r} exceeds min dimension of {tuple(dims)}")
        elif self.model == "multi":
            n, n1, n2 = dims
            r1, r2, r = self.triple
            if r1 > min(n, n1) or r2 > min(n, n2):
                raise ValueError(f"view ranks ({r1}, {r2}) exceed view sizes of {tuple(dims)}")
            if r > min(n, n1 + n2):
                raise ValueError(f"joint rank {r} exceeds min dimension of the stacked matrix")
        elif self.model == "cp":
            dims = tuple(dims)
            total = math.prod(dims)
            if self.r > min(total // n for n in dims):
                raise ValueError(f"rank {self.r} exceeds the trivial bound for dims {dims}")
        elif self.model == "tucker":
            dims = tuple(dims)
            d = len(dims)
            if not 1 <= self.split <= d - 1:
                raise ValueError(f"split {self.split} out of range for order {d}")
            if len(self.ms) != d - self.split:
                raise ValueError(
                    f"expected {d - self.split} trailing ranks for split {self.split}, "
                    f"got {len(self.ms)}")
            total = math.prod(dims)
            for m, n in zip(self.ms, dims[self.split:]):
                if m > min(n, total // n):
                    raise ValueError(f"multilinear rank {m} exceeds the bound for size {n}")
        elif self.model == "tt":
            if not tt_rank_is_valid(self.us, dims):
                raise ValueError(f"train ranks {self.us} invalid for dims {tuple(dims)}")
        else:
            raise ValueError(f"unknown model {self.model!r}")

    def to_json(self) -> dict:
        out = {"model": self.model}
        if self.model in ("single", "cp"):
            out["r"] = self.r
        elif self.model == "multi":
            out["r1"], out["r2"], out["r"] = self.triple
        elif self.model == "tucker":
            out["ms"] = list(self.ms)
            out["split"] = self.split
        elif self.model == "tt":
            out["us"] = list(self.us)
        return out


def tt_rank_is_valid(us, dims) -> bool:
    """Whether a train rank vector is consistent with ``dims``.

    With ``u_0 = u_d = 1``, each interior rank must satisfy
    ``u_i <= min(u_{i-1} * n_i, u_{i+1} * n_{i+1})``.
    """
    dims = tuple(int(n) for n in dims)
    us = tuple(int(u) for u in us)
    d = len(dims)
    if len(us) != d - 1 or any(u < 1 for u in us):
        return False
    ext = (1,) + us + (1,)
    for i in range(1, d):
        if ext[i] > min(ext[i - 1] * dims[i - 1], ext[i + 1] * dims[i]):
            return False
    return True


def valid_tt_ranks(dims) -> list:
    """All valid train rank vectors for ``dims``, lexicographically sorted."""
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    caps = []
    for i in range(1, d):
        caps.append(min(math.prod(dims[:i]), math.prod(dims[i:])))
    out = []
    for us in itertools.product(*(range(1, c + 1) for c in caps)):
        if tt_rank_is_valid(us, dims):
            out.append(us)
    return out


def valid_tucker_ranks(dims, split: int) -> list:
    """All Tucker rank vectors ``(m_{split+1}, ..., m_d)`` within the
    trivial per-mode bounds, lexicographically sorted."""
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    if not 1 <= split <= d - 1:
        raise ValueError(f"split {split} out of range for order {d}")
    total = math.prod(dims)
    caps = [min(n, total // n) for n in dims[split:]]
    return list(itertools.product(*(range(1, c + 1) for c in caps)))


def valid_multiview_ranks(n: int, n1: int, n2: int) -> list:
    """All multi-view triples ``(r1, r2, r)`` valid for the given sizes,
    lexicographically sorted.  View ranks start at 1 here; degenerate
    zero-rank views are allowed by :meth:`RankSpec.multi` but excluded
    from the enumeration."""
    out = []
    for r1 in range(1, min(n, n1) + 1):
        for r2 in range(1, min(n, n2) + 1):
            hi = min(r1 + r2, n, n1 + n2)
            for r in range(max(r1, r2), hi + 1):
                out.append((r1, r2, r))
    return out
