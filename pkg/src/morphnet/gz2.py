"""GZ2 catalog handling: decision tree, curation rules, stratified split.

The vote-fraction catalog is a CSV with a ``GalaxyID`` column plus one
column per decision-tree answer, named ``Class<task>.<answer>`` with
1-based indices (``Class1.1`` ... ``Class11.6``, 37 in total). The
dataset manifest produced here is a CSV ``galaxy_id,path,label,split``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Task",
    "DecisionTree",
    "GZ2_TREE",
    "ANSWER_COLUMNS",
    "CatalogRow",
    "CatalogReport",
    "parse_catalog",
    "propagate_tree",
    "CurationRule",
    "DEFAULT_RULES",
    "default_rules",
    "LabeledSample",
    "CurationReport",
    "select_clean",
    "ManifestEntry",
    "DatasetManifest",
    "split_dataset",
    "write_manifest",
    "read_manifest",
    "CatalogSchemaError",
]

END = "end"


class CatalogSchemaError(ValueError):
    """The catalog header does not provide the required columns."""


@dataclass(frozen=True)
class Task:
    number: int
    question: str
    answers: tuple[str, ...]
    links: tuple[str, ...]  # per answer: "T05"-style id or END

    def __post_init__(self):
        if len(self.answers) != len(self.links):
            raise ValueError(f"task {self.number}: answers and links disagree")

    @property
    def task_id(self) -> str:
        return f"T{self.number:02d}"


@dataclass(frozen=True)
class DecisionTree:
    tasks: tuple[Task, ...]

    def __post_init__(self):
        total = sum(len(t.answers) for t in self.tasks)
        if total != 37:
            raise ValueError(f"tree must have 37 answers, got {total}")
        ids = {t.task_id for t in self.tasks}
        for t in self.tasks:
            for link in t.links:
                if link != END and link not in ids:
                    raise ValueError(f"task {t.task_id} links to unknown {link}")
        self._check_acyclic()

    def _check_acyclic(self):
        by_id = {t.task_id: t for t in self.tasks}
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(tid: str):
            if state.get(tid) == 1:
                return
            if state.get(tid) == 0:
                raise ValueError(f"decision tree has a cycle through {tid}")
            state[tid] = 0
            for link in by_id[tid].links:
                if link != END:
                    visit(link)
            state[tid] = 1

        visit("T01")

    def task(self, tid: str) -> Task:
        for t in self.tasks:
            if t.task_id == tid:
                return t
        raise KeyError(tid)

    def topological_order(self) -> list[Task]:
        by_id = {t.task_id: t for t in self.tasks}
        order: list[Task] = []
        done: set[str] = set()

        def visit(tid: str):
            if tid in done:
                return
            done.add(tid)
            order.append(by_id[tid])
            for link in by_id[tid].links:
                if link != END:
                    visit(link)

        visit("T01")
        # tasks are reachable only from T01 in this tree; sort so that every
        # parent precedes its children (DFS preorder is not enough when a
        # task has several inbound links)
        indeg = {t.task_id: 0 for t in order}
        for t in order:
            for link in t.links:
                if link != END:
                    indeg[link] += 1
        ready = [t for t in order if indeg[t.task_id] == 0]
        topo: list[Task] = []
        while ready:
            ready.sort(key=lambda t: t.number)
            t = ready.pop(0)
            topo.append(t)
            for link in t.links:
                if link == END:
                    continue
                indeg[link] -= 1
                if indeg[link] == 0:
                    ready.append(by_id[link])
        return topo


GZ2_TREE = DecisionTree(
    (
        Task(1, "Is the galaxy simply smooth and rounded, with no sign of a disk?",
             ("smooth", "features or disk", "star or artifact"), ("T07", "T02", END)),
        Task(2, "Could this be a disk viewed edge-on?", ("yes", "no"), ("T09", "T03")),
        Task(3, "Is there a sign of a bar feature through the centre of the galaxy?",
             ("yes", "no"), ("T04", "T04")),
        Task(4, "Is there any sign of a spiral arm pattern?", ("yes", "no"), ("T10", "T05")),
        Task(5, "How prominent is the central bulge, compared with the rest of the galaxy?",
             ("no bulge", "just noticeable", "obvious", "dominant"), ("T06",) * 4),
        Task(6, "Is there anything odd?", ("yes", "no"), ("T08", END)),
        Task(7, "How rounded is it?", ("completely round", "in between", "cigar shaped"),
             ("T06",) * 3),
        Task(8, "Is the odd feature a ring, or is the galaxy disturbed or irregular?",
             ("ring", "lens or arc", "disturbed", "irregular", "other", "merger", "dust lane"),
             (END,) * 7),
        Task(9, "Does the galaxy have a bulge at its centre? If so, what shape?",
             ("rounded", "boxy", "no bulge"), ("T06",) * 3),
        Task(10, "How tightly wound do the spiral arms appear?",
             ("tight", "medium", "loose"), ("T11",) * 3),
        Task(11, "How many spiral arms are there?",
             ("1", "2", "3", "4", "more than four", "can't tell"), ("T05",) * 6),
    )
)

ANSWER_COLUMNS: tuple[str, ...] = tuple(
    f"Class{t.number}.{a + 1}" for t in GZ2_TREE.tasks for a in range(len(t.answers))
)

_COL_INDEX = {c: i for i, c in enumerate(ANSWER_COLUMNS)}
_TASK_SLICES: dict[str, slice] = {}
_offset = 0
for _t in GZ2_TREE.tasks:
    _TASK_SLICES[_t.task_id] = slice(_offset, _offset + len(_t.answers))
    _offset += len(_t.answers)
del _offset, _t


@dataclass(frozen=True)
class CatalogRow:
    galaxy_id: str
    fractions: np.ndarray  # 37 values aligned with ANSWER_COLUMNS

    def fraction(self, column: str) -> float:
        return float(self.fractions[_COL_INDEX[column]])


@dataclass
class CatalogReport:
    total_rows: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (galaxy_id, reason)
    warnings: list[str] = field(default_factory=list)


_TASK_SUM_EPS = 1e-3


def parse_catalog(source: Union[str, io.TextIOBase, Iterable[str]]) -> tuple[list[CatalogRow], CatalogReport]:
    """Read a vote-fraction catalog; invalid rows are dropped and reported.

    ``source`` may be a path, an open text stream, or an iterable of
    lines. A missing required column is fatal; per-row violations
    (unparseable or out-of-range fractions, per-task sums over 1) only
    reject that row.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_catalog(fh)
    reader = csv.DictReader(source)
    header = reader.fieldnames
    if header is None:
        raise CatalogSchemaError("catalog is empty, no header row")
    missing = [c for c in ("GalaxyID", *ANSWER_COLUMNS) if c not in header]
    if missing:
        raise CatalogSchemaError(f"catalog header missing columns: {', '.join(missing)}")

    rows: list[CatalogRow] = []
    report = CatalogReport()
    for record in reader:
        report.total_rows += 1
        gid = (record.get("GalaxyID") or "").strip()
        if not gid:
            report.rejected.append(("", "missing GalaxyID"))
            continue
        values = np.empty(37, dtype=np.float64)
        bad = None
        for i, col in enumerate(ANSWER_COLUMNS):
            raw = record.get(col)
            try:
                v = float(raw)
            except (TypeError, ValueError):
                bad = f"unparseable {col}={raw!r}"
                break
            if not 0.0 <= v <= 1.0 or not math.isfinite(v):
                bad = f"{col}={v} outside [0, 1]"
                break
            values[i] = v
        if bad is None:
            for tid, sl in _TASK_SLICES.items():
                s = values[sl].sum()
                if s > 1.0 + _TASK_SUM_EPS:
                    bad = f"{tid} fractions sum to {s:.4f} > 1"
                    break
        if bad is not None:
            report.rejected.append((gid, bad))
            continue
        rows.append(CatalogRow(gid, values))
    if report.total_rows == 0:
        report.warnings.append("catalog has a header but no data rows")
    elif not rows:
        raise CatalogSchemaError(
            f"all {report.total_rows} catalog rows were rejected; first: {report.rejected[0][1]}"
        )
    return rows, report


def propagate_tree(row: CatalogRow, tree: DecisionTree = GZ2_TREE) -> np.ndarray:
    """Down-weight each answer fraction by the probability of reaching its task.

    The root task's answers keep their raw fractions. Every other
    task's inbound mass is the sum, over all links pointing at it, of
    the linking answer's already-propagated weight; each answer's
    weight is its raw fraction times that inbound mass.
    """
    weights = np.zeros(37, dtype=np.float64)
    inbound = {t.task_id: 0.0 for t in tree.tasks}
    inbound["T01"] = 1.0
    for task in tree.topological_order():
        sl = _TASK_SLICES[task.task_id]
        w = row.fractions[sl] * inbound[task.task_id]
        weights[sl] = w
        for a, link in enumerate(task.links):
            if link != END:
                inbound[link] += w[a]
    return weights


@dataclass(frozen=True)
class CurationRule:
    """Conjunction of threshold clauses; a clause over several columns
    compares their summed fraction (or, in ``or_mode``, each one
    individually, any passing)."""

    class_id: int
    name: str
    clauses: tuple[tuple[tuple[str, ...], float], ...]

    def __post_init__(self):
        if not 0 <= self.class_id <= 6:
            raise ValueError(f"class_id must be 0..6, got {self.class_id}")
        for cols, thr in self.clauses:
            if not 0.0 < thr < 1.0:
                raise ValueError(f"threshold must be in (0, 1), got {thr}")
            for c in cols:
                if c not in _COL_INDEX:
                    raise ValueError(f"unknown answer column {c!r}")

    def matches(self, row: CatalogRow, or_mode: bool = False) -> bool:
        for cols, thr in self.clauses:
            if len(cols) == 1:
                ok = row.fractions[_COL_INDEX[cols[0]]] >= thr
            elif or_mode:
                ok = any(row.fractions[_COL_INDEX[c]] >= thr for c in cols)
            else:
                ok = sum(row.fractions[_COL_INDEX[c]] for c in cols) >= thr
            if not ok:
                return False
        return True


def default_rules() -> tuple[CurationRule, ...]:
    """The seven clean-sample rule sets over the vote-fraction columns."""
    c = lambda *cols: tuple(cols)
    return (
        CurationRule(0, "round smooth", (
            (c("Class1.1"), 0.469), (c("Class7.1"), 0.5), (c("Class6.2"), 0.5))),
        CurationRule(1, "in-between smooth", (
            (c("Class1.1"), 0.469), (c("Class7.2"), 0.5), (c("Class6.2"), 0.5))),
        CurationRule(2, "cigar-shaped smooth", (
            (c("Class1.1"), 0.469), (c("Class7.3"), 0.5), (c("Class6.2"), 0.5))),
        CurationRule(3, "lenticular", (
            (c("Class1.2"), 0.430), (c("Class2.1"), 0.602), (c("Class6.2"), 0.5))),
        CurationRule(4, "barred spiral", (
            (c("Class1.2"), 0.430), (c("Class2.2"), 0.715),
            (c("Class3.1"), 0.715), (c("Class4.1"), 0.619))),
        CurationRule(5, "unbarred spiral", (
            (c("Class1.2"), 0.430), (c("Class2.2"), 0.715),
            (c("Class3.2"), 0.715), (c("Class4.1"), 0.619))),
        CurationRule(6, "irregular", (
            (c("Class6.1"), 0.420),
            (c("Class8.3", "Class8.4", "Class8.5", "Class8.6", "Class8.7"), 0.5))),
    )


DEFAULT_RULES = default_rules()


@dataclass(frozen=True)
class LabeledSample:
    galaxy_id: str
    label: int


@dataclass
class CurationReport:
    class_counts: list[int]
    unmatched: int
    ambiguous: list[tuple[str, tuple[int, ...]]]  # rows matching several rules

    @property
    def total_labeled(self) -> int:
        return sum(self.class_counts)


def select_clean(
    rows: Sequence[CatalogRow],
    rules: Sequence[CurationRule] = DEFAULT_RULES,
    or_mode_class6: bool = False,
) -> tuple[list[LabeledSample], CurationReport]:
    """Assign each row to the single rule set it satisfies, if any.

    Rows matching no rule are excluded; rows matching more than one are
    dropped and reported, keeping only confidently labeled samples.
    """
    n_classes = max(r.class_id for r in rules) + 1
    samples: list[LabeledSample] = []
    counts = [0] * n_classes
    unmatched = 0
    ambiguous: list[tuple[str, tuple[int, ...]]] = []
    for row in rows:
        hits = tuple(
            r.class_id
            for r in rules
            if r.matches(row, or_mode=or_mode_class6 and r.class_id == 6)
        )
        if len(hits) == 1:
            samples.append(LabeledSample(row.galaxy_id, hits[0]))
            counts[hits[0]] += 1
        elif not hits:
            unmatched += 1
        else:
            ambiguous.append((row.galaxy_id, hits))
    return samples, CurationReport(counts, unmatched, ambiguous)


@dataclass(frozen=True)
class ManifestEntry:
    galaxy_id: str
    path: str
    label: int
    split: str  # train | test

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        if self.label < 0:
            raise ValueError("label must be nonnegative")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    seed: int

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def counts(self) -> dict[str, dict[int, int]]:
        out: dict[str, dict[int, int]] = {"train": {}, "test": {}}
        for e in self.entries:
            out[e.split][e.label] = out[e.split].get(e.label, 0) + 1
        return out


def split_dataset(
    samples: Sequence[LabeledSample],
    seed: int,
    test_fraction: float = 0.1,
    path_for=lambda gid: f"{gid}.jpg",
) -> DatasetManifest:
    """Stratified train/test partition, shuffled per class with one child seed each.

    Per class the test share is floor(n * test_fraction), floored at 1
    so every class appears in both splits; classes need at least 2
    samples.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    by_class: dict[int, list[LabeledSample]] = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    entries: list[ManifestEntry] = []
    root = np.random.SeedSequence(seed)
    children = root.spawn(max(by_class) + 1 if by_class else 0)
    for label in sorted(by_class):
        group = by_class[label]
        if len(group) < 2:
            raise ValueError(f"class {label} has {len(group)} sample(s); need at least 2 to split")
        # tiny epsilon so exact multiples are not floored by float error
        n_test = max(1, int(math.floor(len(group) * test_fraction + 1e-9)))
        order = np.random.default_rng(children[label]).permutation(len(group))
        for rank, idx in enumerate(order):
            s = group[idx]
            split = "test" if rank < n_test else "train"
            entries.append(ManifestEntry(s.galaxy_id, path_for(s.galaxy_id), label, split))
    entries.sort(key=lambda e: (e.label, e.galaxy_id))
    return DatasetManifest(entries, seed)


MANIFEST_HEADER = ["galaxy_id", "path", "label", "split"]


def write_manifest(manifest: DatasetManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([e.galaxy_id, e.path, e.label, e.split])


def read_manifest(path: str, seed: int = 0) -> DatasetManifest:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ValueError(f"manifest header {header} != {MANIFEST_HEADER}")
        entries = [ManifestEntry(gid, p, int(label), split) for gid, p, label, split in reader]
    return DatasetManifest(entries, seed)
