"""Recording-level multi-label decisions from per-window scores.

Four strategies are supported: a global threshold on the max window score,
class-specific thresholds, duration-based annotation filtering (dropping
classes whose annotated time falls below a fraction of the recording
length), and count-based thresholding (requiring several windows above the
class threshold). "Exceeds" is strict everywhere: a score equal to the
threshold does not activate a class.
"""

import csv
import math
from dataclasses import dataclass, field, replace

from .errors import SchemaError
from .labels import CLASSES, SILENCE
from .scores import ScoreMatrix

_DUR_TOL = 1e-9


@dataclass(frozen=True)
class AnnotationSet:
    """Strong (segment-level) ground truth for one recording.

    Segments are merged per class on construction, so each class holds a
    sorted, non-overlapping list of (start_s, end_s) pairs.
    """

    recording_id: str
    duration_s: float
    segments: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"{self.recording_id}: duration must be positive")
        merged = {}
        for cls in CLASSES:
            segs = sorted(self.segments.get(cls, ()))
            for start, end in segs:
                if not (0 <= start < end <= self.duration_s + _DUR_TOL):
                    raise ValueError(
                        f"{self.recording_id}: segment ({start}, {end}) outside [0, {self.duration_s}]"
                    )
            merged[cls] = tuple(_merge(segs))
        object.__setattr__(self, "segments", merged)

    @property
    def active_classes(self) -> frozenset:
        return frozenset(c for c in CLASSES if self.segments[c])

    def total_duration(self, class_name: str) -> float:
        return sum(e - s for s, e in self.segments[class_name])

    @classmethod
    def from_weak_labels(cls, recording_id: str, duration_s: float, active) -> "AnnotationSet":
        """Build from presence flags; active classes span the whole recording."""
        return cls(
            recording_id=recording_id,
            duration_s=duration_s,
            segments={c: [(0.0, duration_s)] for c in active},
        )


def _merge(segs):
    out = []
    for start, end in segs:
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


@dataclass(frozen=True)
class PdaPolicy:
    """Minimum-duration annotation filter.

    fractions maps a class to p in (0, 1) or None; a class with p set stays
    active only if its annotated duration reaches p * T. Classes with no
    fraction (typically biophony) keep their annotations untouched. The
    duration measure defaults to the sum of merged segments; the
    "longest-segment" measure tests only the single longest one.
    """

    fractions: dict = field(default_factory=dict)
    measure: str = "sum"  # or "longest-segment"

    def __post_init__(self):
        for cls, p in self.fractions.items():
            if cls not in CLASSES:
                raise ValueError(f"unknown class {cls!r}")
            if p is not None and not 0 < p < 1:
                raise ValueError(f"fraction for {cls} must be in (0, 1), got {p}")
        if self.measure not in ("sum", "longest-segment"):
            raise ValueError(f"measure must be 'sum' or 'longest-segment', got {self.measure!r}")

    def min_duration_s(self, class_name: str, recording_duration_s: float) -> float | None:
        p = self.fractions.get(class_name)
        return None if p is None else p * recording_duration_s


def apply_pda(ann: AnnotationSet, policy: PdaPolicy) -> AnnotationSet:
    """Clear every class whose annotated duration falls short of p * T."""
    segments = dict(ann.segments)
    for cls in CLASSES:
        min_dur = policy.min_duration_s(cls, ann.duration_s)
        if min_dur is None:
            continue
        if policy.measure == "sum":
            measured = ann.total_duration(cls)
        else:
            measured = max((e - s for s, e in ann.segments[cls]), default=0.0)
        if measured + _DUR_TOL < min_dur:
            segments[cls] = ()
    return replace(ann, segments=segments)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-class decision thresholds, optionally with window-count requirements.

    Without counts a class is active when its max window score exceeds the
    class threshold; with a count c it is active when at least c windows
    exceed the threshold (c = 1 reproduces max aggregation).
    """

    thresholds: dict
    counts: dict | None = None

    def __post_init__(self):
        for cls in CLASSES:
            if cls not in self.thresholds:
                raise ValueError(f"missing threshold for {cls}")
            if not 0 <= self.thresholds[cls] <= 1:
                raise ValueError(f"threshold for {cls} outside [0, 1]: {self.thresholds[cls]}")
        if self.counts is not None:
            for cls, c in self.counts.items():
                if cls not in CLASSES:
                    raise ValueError(f"unknown class {cls!r}")
                if c < 1:
                    raise ValueError(f"count for {cls} must be >= 1, got {c}")

    @classmethod
    def global_threshold(cls, theta: float, counts=None) -> "ThresholdPolicy":
        return cls(thresholds={c: theta for c in CLASSES}, counts=counts)

    def count_for(self, class_name: str) -> int:
        if self.counts is None:
            return 1
        return int(self.counts.get(class_name, 1))


@dataclass(frozen=True)
class Decision:
    """Recording-level outcome; silence holds exactly when nothing is active."""

    recording_id: str
    active: frozenset

    @property
    def silence(self) -> bool:
        return not self.active


def aggregate(matrix: ScoreMatrix) -> dict:
    """Max confidence per class across all windows."""
    if matrix.n_windows < 1:
        raise ValueError(f"{matrix.recording_id}: no windows to aggregate")
    maxes = matrix.class_scores.max(axis=0)
    return {cls: float(maxes[i]) for i, cls in enumerate(matrix.class_order)}


def decide(matrix: ScoreMatrix, policy: ThresholdPolicy) -> Decision:
    """Apply thresholds (and optional counts) to one recording's scores."""
    active = set()
    for cls in CLASSES:
        theta = policy.thresholds[cls]
        c = policy.count_for(cls)
        if c > matrix.n_windows:
            raise ValueError(
                f"{matrix.recording_id}: count {c} for {cls} exceeds {matrix.n_windows} windows"
            )
        if int((matrix.scores_for(cls) > theta).sum()) >= c:
            active.add(cls)
    return Decision(recording_id=matrix.recording_id, active=frozenset(active))


def count_for_fraction(p: float, w: int) -> int:
    """floor(p * w), raised to 1 when the product floors to zero."""
    if not 0 < p <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {p}")
    if w < 1:
        raise ValueError(f"window count must be >= 1, got {w}")
    return max(1, math.floor(p * w))


def load_annotations(path, duration_s: float) -> dict:
    """Load an annotation CSV (strong or weak schema) into {recording_id: AnnotationSet}.

    Strong schema: recording_id,class,start_s,end_s (one row per segment).
    Weak schema: recording_id,anthropophony,biophony,geophony (0/1 flags).
    Recordings absent from a strong file simply have no annotated segments.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty annotation file", path=path) from None

        if header == ["recording_id", "class", "start_s", "end_s"]:
            segments: dict = {}
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise SchemaError(f"expected 4 fields, got {len(row)}", path=path, line=line_no)
                rec_id, cls = row[0], row[1]
                if cls not in CLASSES:
                    raise SchemaError(f"unknown class {cls!r}", path=path, line=line_no)
                try:
                    start, end = float(row[2]), float(row[3])
                except ValueError as exc:
                    raise SchemaError(f"malformed number ({exc})", path=path, line=line_no) from None
                segments.setdefault(rec_id, {c: [] for c in CLASSES})[cls].append((start, end))
            out = {}
            for rec_id, segs in segments.items():
                try:
                    out[rec_id] = AnnotationSet(recording_id=rec_id, duration_s=duration_s, segments=segs)
                except ValueError as exc:
                    raise SchemaError(str(exc), path=path) from None
            return out

        if header == ["recording_id", *CLASSES]:
            out = {}
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise SchemaError(f"expected 4 fields, got {len(row)}", path=path, line=line_no)
                if row[0] in out:
                    raise SchemaError(f"duplicate recording_id {row[0]!r}", path=path, line=line_no)
                flags = []
                for cls, v in zip(CLASSES, row[1:]):
                    if v not in ("0", "1"):
                        raise SchemaError(f"flag for {cls} must be 0 or 1, got {v!r}", path=path, line=line_no)
                    flags.append(v == "1")
                active = [c for c, f in zip(CLASSES, flags) if f]
                out[row[0]] = AnnotationSet.from_weak_labels(row[0], duration_s, active)
            return out

    raise SchemaError(f"unexpected header {header}", path=path, line=1)


def dump_decisions(decisions, path) -> None:
    """Write decisions as CSV with 0/1 flags per class plus the silence flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording_id", *CLASSES, SILENCE])
        for d in decisions:
            flags = [1 if c in d.active else 0 for c in CLASSES]
            writer.writerow([d.recording_id, *flags, 1 if d.silence else 0])


def load_decisions(path) -> list:
    """Read a decisions CSV written by :func:`dump_decisions`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["recording_id", *CLASSES, SILENCE]:
            raise SchemaError(f"unexpected header {header}", path=path, line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"expected 5 fields, got {len(row)}", path=path, line=line_no)
            active = frozenset(c for c, v in zip(CLASSES, row[1:4]) if v == "1")
            d = Decision(recording_id=row[0], active=active)
            if (row[4] == "1") != d.silence:
                raise SchemaError("silence flag inconsistent with active classes", path=path, line=line_no)
            out.append(d)
    return out
