"""Node universes, feature tables, labeled pair samples and prediction families.

Everything here is immutable once built. Pair samples store node *indices*
into their universes; in homogeneous mode the row and column universe are
the same object and each unordered pair is stored once with
``row < col``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Side",
    "Family",
    "FAMILIES",
    "NodeUniverse",
    "FeatureTable",
    "PairSample",
    "FamilyPartition",
    "AdjacencySubmatrix",
    "load_feature_table",
    "load_pair_sample",
    "write_feature_table",
    "write_pair_sample",
    "partition_families",
    "degree",
    "degrees",
    "synth_block_network",
    "synth_preferential_network",
]


class Side(str, Enum):
    ROW = "row"
    COL = "col"


class Family(str, Enum):
    """Prediction family of a pair relative to a learning sample."""

    LSLS = "LSLS"
    LSTS = "LSTS"
    TSLS = "TSLS"
    TSTS = "TSTS"
    TRAIN = "TRAIN"  # the pair is itself in the learning sample


#: families that are actually predicted, in report order
FAMILIES = (Family.LSLS, Family.LSTS, Family.TSLS, Family.TSTS)
_FAMILY_CODES = {fam: code for code, fam in enumerate(FAMILIES + (Family.TRAIN,))}
_CODE_FAMILIES = {code: fam for fam, code in _FAMILY_CODES.items()}


@dataclass(frozen=True, eq=False)
class NodeUniverse:
    side: Side
    ids: tuple[str, ...]
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        index = {}
        for pos, node in enumerate(ids):
            if node in index:
                raise ValidationError(f"duplicate node id {node!r}")
            index[node] = pos
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, node) -> bool:
        return node in self._index

    def index(self, node: str) -> int:
        try:
            return self._index[node]
        except KeyError:
            raise ValidationError(f"unknown node id {node!r}") from None

    def indices(self, nodes: Iterable[str]) -> np.ndarray:
        return np.array([self.index(n) for n in nodes], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Per-node numeric feature vectors, one row per universe id."""

    universe: NodeUniverse
    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != self.universe.size:
            raise ValidationError(
                f"feature matrix shape {values.shape} does not match "
                f"{self.universe.size} nodes"
            )
        if values.shape[1] < 1:
            raise ValidationError("feature table needs at least one feature")
        if len(self.feature_names) != values.shape[1]:
            raise ValidationError("feature_names length does not match column count")
        if not np.all(np.isfinite(values)):
            raise ValidationError("non-finite value in feature table")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self.universe.ids

    def rows_of(self, nodes: Iterable[str]) -> np.ndarray:
        """Row positions of ``nodes`` in :attr:`values`."""
        return self.universe.indices(nodes)

    def vectors(self, nodes: Iterable[str]) -> np.ndarray:
        return self.values[self.rows_of(nodes)]


@dataclass(frozen=True, eq=False)
class AdjacencySubmatrix:
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    labels: np.ndarray  # uint8, shape (len(row_ids), len(col_ids))


def _data_lines(path: Path):
    """Yield (line number, stripped line) for non-blank, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_feature_table(
    path, universe: NodeUniverse | None = None, side: Side = Side.ROW
) -> FeatureTable:
    """Read a TSV feature file: header ``id<TAB>feat1...``, one row per node.

    When ``universe`` is given, the file must list exactly its ids (any
    order); rows are reordered to universe order. Otherwise a new universe is
    created from the file order.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"feature file not found: {path}")
    lines = _data_lines(path)
    try:
        header_line, header = next(lines)
    except StopIteration:
        raise ValidationError(f"{path}: empty file") from None
    names = header.split("\t")[1:]
    if not names:
        raise ValidationError(f"{path}:{header_line}: header has no feature columns")
    ids: list[str] = []
    seen: dict[str, int] = {}
    rows: list[list[float]] = []
    for lineno, line in lines:
        cells = line.split("\t")
        if len(cells) != len(names) + 1:
            raise ValidationError(
                f"{path}:{lineno}: ragged row, expected {len(names) + 1} "
                f"columns at line {lineno}, got {len(cells)}"
            )
        node = cells[0].strip()
        if node in seen:
            raise ValidationError(
                f"{path}: duplicate node id {node!r} at line {lineno} "
                f"(first at line {seen[node]})"
            )
        seen[node] = lineno
        vec = []
        for col, cell in enumerate(cells[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: non-numeric value {cell!r} at line "
                    f"{lineno}, column {col}"
                ) from None
            if not math.isfinite(v):
                raise ValidationError(
                    f"{path}:{lineno}: non-finite value {cell!r} at line "
                    f"{lineno}, column {col}"
                )
            vec.append(v)
        ids.append(node)
        rows.append(vec)
    if not ids:
        raise ValidationError(f"{path}: empty file (no node rows)")
    values = np.array(rows, dtype=np.float64)
    if universe is None:
        universe = NodeUniverse(side, tuple(ids))
    else:
        extra = [i for i in ids if i not in universe]
        if extra:
            raise ValidationError(f"{path}: unknown node id {extra[0]!r}")
        missing = [i for i in universe.ids if i not in seen]
        if missing:
            raise ValidationError(f"{path}: no feature row for node {missing[0]!r}")
        order = np.argsort([universe.index(i) for i in ids])
        values = values[order]
    return FeatureTable(universe, values, tuple(n.strip() for n in names))


def write_feature_table(table: FeatureTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(("id",) + table.feature_names) + "\n")
        for node, vec in zip(table.ids, table.values):
            fh.write(node + "\t" + "\t".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True, eq=False)
class PairSample:
    """Labeled pairs ``(row, col, y)`` as index arrays into the universes."""

    row_universe: NodeUniverse
    col_universe: NodeUniverse
    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    homogeneous: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).copy()
        cols = np.asarray(self.cols, dtype=np.int64).copy()
        labels = np.asarray(self.labels, dtype=np.uint8).copy()
        if not (rows.shape == cols.shape == labels.shape) or rows.ndim != 1:
            raise ValidationError("rows, cols and labels must be equal-length vectors")
        if self.homogeneous and self.row_universe is not self.col_universe:
            raise ValidationError("homogeneous samples need a single shared universe")
        for arr in (rows, cols, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "labels", labels)

    # construction -----------------------------------------------------
    @classmethod
    def from_triples(
        cls,
        triples: Iterable[tuple[str, str, int]],
        row_universe: NodeUniverse,
        col_universe: NodeUniverse | None = None,
        homogeneous: bool = False,
    ) -> "PairSample":
        """Validate and deduplicate ``(row_id, col_id, label)`` triples."""
        if homogeneous:
            col_universe = row_universe if col_universe is None else col_universe
            if col_universe is not row_universe:
                raise ValidationError("homogeneous samples need a single shared universe")
        elif col_universe is None:
            raise ValidationError("bipartite samples need a column universe")
        seen: dict[tuple[int, int], int] = {}
        for r_id, c_id, y in triples:
            key, label = cls._check_triple(
                r_id, c_id, y, row_universe, col_universe, homogeneous
            )
            prev = seen.get(key)
            if prev is None:
                seen[key] = label
            elif prev != label:
                raise ValidationError(
                    f"conflicting labels for pair ({r_id}, {c_id})"
                )
        keys = list(seen)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        labels = np.array([seen[k] for k in keys], dtype=np.uint8)
        return cls(row_universe, col_universe, rows, cols, labels, homogeneous)

    @staticmethod
    def _check_triple(r_id, c_id, y, row_universe, col_universe, homogeneous):
        if y not in (0, 1):
            raise ValidationError(f"label {y!r} outside {{0,1}} for pair ({r_id}, {c_id})")
        r = row_universe.index(r_id)
        c = col_universe.index(c_id)
        if homogeneous:
            if r == c:
                raise ValidationError(f"homogeneous self-pair ({r_id}, {c_id})")
            r, c = min(r, c), max(r, c)
        return (r, c), int(y)

    # basic views ----------------------------------------------------------
    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def triples(self) -> list[tuple[str, str, int]]:
        rid, cid = self.row_universe.ids, self.col_universe.ids
        return [
            (rid[r], cid[c], int(y))
            for r, c, y in zip(self.rows, self.cols, self.labels)
        ]

    def pair_set(self) -> set[tuple[str, str, int]]:
        return set(self.triples())

    def subset(self, selector) -> "PairSample":
        """Sample restricted to a boolean mask or an index array."""
        sel = np.asarray(selector)
        return PairSample(
            self.row_universe,
            self.col_universe,
            self.rows[sel],
            self.cols[sel],
            self.labels[sel],
            self.homogeneous,
        )

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def positive_fraction(self) -> float:
        return self.n_positive / len(self) if len(self) else 0.0

    def ls_rows(self) -> np.ndarray:
        """Sorted universe indices of row nodes present in the sample."""
        if self.homogeneous:
            return np.unique(np.concatenate([self.rows, self.cols]))
        return np.unique(self.rows)

    def ls_cols(self) -> np.ndarray:
        if self.homogeneous:
            return self.ls_rows()
        return np.unique(self.cols)

    def mirrored(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index arrays with every homogeneous pair present in both orders."""
        if not self.homogeneous:
            return self.rows, self.cols, self.labels
        return (
            np.concatenate([self.rows, self.cols]),
            np.concatenate([self.cols, self.rows]),
            np.concatenate([self.labels, self.labels]),
        )

    def is_complete(self) -> bool:
        """True when every pair of LS_r x LS_c is labeled.

        For homogeneous samples the diagonal is excluded (no self-pairs).
        """
        if len(self) == 0:
            return False
        n_r, n_c = len(self.ls_rows()), len(self.ls_cols())
        if self.homogeneous:
            return len(self) == n_r * (n_r - 1) // 2
        return len(self) == n_r * n_c

    def adjacency(self) -> AdjacencySubmatrix:
        """Dense labels over LS_r x LS_c; homogeneous diagonal is set to 0."""
        if not self.is_complete():
            raise ValidationError("sample is not a complete adjacency submatrix")
        ls_r, ls_c = self.ls_rows(), self.ls_cols()
        r_pos = np.searchsorted(ls_r, self.rows)
        c_pos = np.searchsorted(ls_c, self.cols)
        labels = np.zeros((len(ls_r), len(ls_c)), dtype=np.uint8)
        labels[r_pos, c_pos] = self.labels
        if self.homogeneous:
            labels[c_pos, r_pos] = self.labels
        ids_r, ids_c = self.row_universe.ids, self.col_universe.ids
        return AdjacencySubmatrix(
            tuple(ids_r[i] for i in ls_r), tuple(ids_c[j] for j in ls_c), labels
        )


def load_pair_sample(
    path,
    row_universe: NodeUniverse,
    col_universe: NodeUniverse | None = None,
    homogeneous: bool = False,
) -> PairSample:
    """Read ``row_id<TAB>col_id<TAB>label`` rows; an optional header whose
    third column is ``label`` is skipped."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"pair file not found: {path}")
    triples = []
    first = True
    for lineno, line in _data_lines(path):
        cells = [c.strip() for c in line.split("\t")]
        if first and len(cells) == 3 and cells[2].lower() == "label":
            first = False
            continue
        first = False
        if len(cells) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(cells)}")
        if cells[2] not in ("0", "1"):
            raise ValidationError(
                f"{path}:{lineno}: label {cells[2]!r} outside {{0,1}}"
            )
        triples.append((cells[0], cells[1], int(cells[2])))
    if not triples:
        raise ValidationError(f"{path}: empty pair file")
    try:
        return PairSample.from_triples(triples, row_universe, col_universe, homogeneous)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_pair_sample(sample: PairSample, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, y in sample.triples():
            fh.write(f"{r}\t{c}\t{y}\n")


@dataclass(frozen=True, eq=False)
class FamilyPartition:
    """LS/TS node sets of a learning sample and the family of any pair."""

    row_universe: NodeUniverse
    col_universe: NodeUniverse
    ls_row_mask: np.ndarray
    ls_col_mask: np.ndarray
    homogeneous: bool
    _train: frozenset = field(repr=False)

    @property
    def ls_r(self) -> frozenset[str]:
        return frozenset(np.asarray(self.row_universe.ids)[self.ls_row_mask])

    @property
    def ts_r(self) -> frozenset[str]:
        return frozenset(np.asarray(self.row_universe.ids)[~self.ls_row_mask])

    @property
    def ls_c(self) -> frozenset[str]:
        return frozenset(np.asarray(self.col_universe.ids)[self.ls_col_mask])

    @property
    def ts_c(self) -> frozenset[str]:
        return frozenset(np.asarray(self.col_universe.ids)[~self.ls_col_mask])

    def family_of(self, row_id: str, col_id: str) -> Family:
        r = self.row_universe.index(row_id)
        c = self.col_universe.index(col_id)
        return _CODE_FAMILIES[int(self.family_codes([r], [c])[0])]

    def family_codes(self, rows, cols) -> np.ndarray:
        """Vectorized family codes (index into ``FAMILIES``; 4 = TRAIN)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        r_ls = self.ls_row_mask[rows]
        c_ls = self.ls_col_mask[cols]
        codes = np.where(
            r_ls,
            np.where(c_ls, 0, 1),
            np.where(c_ls, 2, 3),
        ).astype(np.int8)
        if self.homogeneous:
            codes[codes == 2] = 1
            lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
            keys = zip(lo.tolist(), hi.tolist())
        else:
            keys = zip(rows.tolist(), cols.tolist())
        if self._train:
            in_train = np.fromiter((k in self._train for k in keys), bool, len(rows))
            codes[in_train] = _FAMILY_CODES[Family.TRAIN]
        return codes


def family_from_code(code: int) -> Family:
    return _CODE_FAMILIES[int(code)]


def partition_families(sample: PairSample) -> FamilyPartition:
    if len(sample) == 0:
        raise ValidationError("cannot partition an empty sample")
    ls_r = np.zeros(sample.row_universe.size, dtype=bool)
    ls_c = np.zeros(sample.col_universe.size, dtype=bool)
    ls_r[sample.ls_rows()] = True
    ls_c[sample.ls_cols()] = True
    train = frozenset(zip(sample.rows.tolist(), sample.cols.tolist()))
    return FamilyPartition(
        sample.row_universe, sample.col_universe, ls_r, ls_c, sample.homogeneous, train
    )


def degrees(sample: PairSample) -> tuple[np.ndarray, np.ndarray]:
    """Positive-label degree of every universe node, per side.

    Homogeneous samples count both endpoints and return the same array twice.
    """
    pos = sample.labels.astype(bool)
    if sample.homogeneous:
        n = sample.row_universe.size
        deg = np.bincount(sample.rows[pos], minlength=n) + np.bincount(
            sample.cols[pos], minlength=n
        )
        return deg, deg
    d_r = np.bincount(sample.rows[pos], minlength=sample.row_universe.size)
    d_c = np.bincount(sample.cols[pos], minlength=sample.col_universe.size)
    return d_r, d_c


def degree(sample: PairSample, node: str, side: Side = Side.ROW) -> int:
    """Number of positive pairs of ``sample`` involving ``node`` on ``side``."""
    universe = sample.row_universe if Side(side) is Side.ROW else sample.col_universe
    idx = universe.index(node)
    ls = sample.ls_rows() if Side(side) is Side.ROW else sample.ls_cols()
    if idx not in set(ls.tolist()):
        raise ValidationError(f"node {node!r} is not in the learning sample")
    d_r, d_c = degrees(sample)
    return int((d_r if Side(side) is Side.ROW else d_c)[idx])


# synthetic networks ----------------------------------------------------------


def synth_block_network(
    n_r: int,
    n_c: int,
    blocks: int,
    noise: float,
    seed: int,
    *,
    n_noise_features: int = 4,
    feature_sd: float = 0.35,
) -> tuple[FeatureTable, FeatureTable, PairSample]:
    """Complete bipartite block network with block-informative features.

    Node ``i`` of a side of size ``n`` belongs to block ``i * blocks // n``,
    so the noiseless label matrix is block-diagonal. Each side gets
    ``blocks`` informative coordinates (block one-hot plus Gaussian jitter of
    scale ``feature_sd``) followed by ``n_noise_features`` standard-normal
    coordinates. Pairs are positive iff their blocks match; each label is then
    flipped with probability ``noise``.
    """
    if blocks < 1:
        raise ValidationError("blocks must be >= 1")
    if n_r < blocks or n_c < blocks:
        raise ValidationError("each side needs at least one node per block")
    if not 0.0 <= noise < 0.5:
        raise ValidationError("noise must lie in [0, 0.5)")
    if n_noise_features < 0 or feature_sd < 0:
        raise ValidationError("invalid feature parameters")
    rng = np.random.default_rng(seed)
    block_r = np.arange(n_r) * blocks // n_r
    block_c = np.arange(n_c) * blocks // n_c

    def features(block, n, prefix, side):
        informative = np.eye(blocks)[block] + feature_sd * rng.standard_normal((n, blocks))
        noisy = rng.standard_normal((n, n_noise_features))
        names = [f"block{b}" for b in range(blocks)] + [
            f"noise{j}" for j in range(n_noise_features)
        ]
        universe = NodeUniverse(side, tuple(f"{prefix}{i}" for i in range(n)))
        return FeatureTable(universe, np.hstack([informative, noisy]), tuple(names))

    feat_r = features(block_r, n_r, "r", Side.ROW)
    feat_c = features(block_c, n_c, "c", Side.COL)
    truth = (block_r[:, None] == block_c[None, :]).astype(np.uint8)
    flips = rng.random((n_r, n_c)) < noise
    labels = np.where(flips, 1 - truth, truth).astype(np.uint8)
    rows, cols = np.meshgrid(np.arange(n_r), np.arange(n_c), indexing="ij")
    sample = PairSample(
        feat_r.universe, feat_c.universe, rows.ravel(), cols.ravel(), labels.ravel()
    )
    return feat_r, feat_c, sample


def synth_preferential_network(n: int, m: int, seed: int) -> PairSample:
    """Complete homogeneous sample over a Barabasi-Albert graph.

    Every unordered node pair is labeled: 1 for an edge, 0 otherwise. The
    graph has ``(n - m) * m`` edges.
    """
    import networkx as nx

    if not (isinstance(n, int) and isinstance(m, int)) or not n > m >= 1:
        raise ValidationError("need integers n > m >= 1")
    graph = nx.barabasi_albert_graph(n, m, seed=seed)
    universe = NodeUniverse(Side.ROW, tuple(f"n{i}" for i in range(n)))
    rows, cols = np.triu_indices(n, k=1)
    adj = np.zeros((n, n), dtype=np.uint8)
    for a, b in graph.edges():
        adj[a, b] = adj[b, a] = 1
    return PairSample(universe, universe, rows, cols, adj[rows, cols], homogeneous=True)


def ids_of(universe: NodeUniverse, idx: Sequence[int]) -> list[str]:
    return [universe.ids[i] for i in idx]
