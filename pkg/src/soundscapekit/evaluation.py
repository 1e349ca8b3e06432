"""Multi-label metrics, curves, threshold tuning, error stratification, and
the index-vs-diversity correlation study.

Macro F1 is the unweighted mean of the three class F1 scores; silence is
never part of the macro average. Confidence intervals come from a seeded
nonparametric bootstrap over recordings (percentile method).
"""

from dataclasses import dataclass, field

import numpy as np

from .labels import ANTHROPOPHONY, BIOPHONY, CLASSES, GEOPHONY, combo_string

DEFAULT_BOOTSTRAP_RESAMPLES = 1000
DEFAULT_CONFIDENCE = 0.95

#: Named recording filters for the correlation case study: a recording passes
#: when its (non-empty) label set is contained in the filter's class set.
CASE_STUDY_FILTERS = {
    "all": frozenset(CLASSES),
    "B": frozenset({BIOPHONY}),
    "AB": frozenset({ANTHROPOPHONY, BIOPHONY}),
    "BG": frozenset({BIOPHONY, GEOPHONY}),
}


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass
class EvalReport:
    per_class: dict
    macro_f1: float
    macro_f1_ci: tuple
    n_recordings: int
    predicted_silence_rate: float
    bootstrap_resamples: int
    confidence: float
    bootstrap_seed: int

    def to_dict(self) -> dict:
        return {
            "per_class": {
                cls: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "tp": m.tp,
                    "fp": m.fp,
                    "fn": m.fn,
                    "tn": m.tn,
                }
                for cls, m in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "macro_f1_ci": list(self.macro_f1_ci),
            "n_recordings": self.n_recordings,
            "predicted_silence_rate": self.predicted_silence_rate,
            "bootstrap": {
                "resamples": self.bootstrap_resamples,
                "confidence": self.confidence,
                "seed": self.bootstrap_seed,
            },
        }

    def to_table(self) -> str:
        """Plain-text summary table of the report."""
        lines = [
            f"{'class':<14} {'prec':>6} {'recall':>6} {'f1':>6} {'tp':>5} {'fp':>5} {'fn':>5} {'tn':>5}",
        ]
        for cls, m in self.per_class.items():
            lines.append(
                f"{cls:<14} {m.precision:6.3f} {m.recall:6.3f} {m.f1:6.3f} "
                f"{m.tp:5d} {m.fp:5d} {m.fn:5d} {m.tn:5d}"
            )
        lo, hi = self.macro_f1_ci
        pct = round(self.confidence * 100)
        lines.append(
            f"macro F1 {self.macro_f1:.3f}  (CI {pct}% [{lo:.3f}, {hi:.3f}], "
            f"{self.bootstrap_resamples} resamples)"
        )
        lines.append(
            f"recordings {self.n_recordings}, predicted silence "
            f"{self.predicted_silence_rate * 100:.1f}%"
        )
        return "\n".join(lines)


def f1_score(tp: int, fp: int, fn: int) -> float:
    """F1 with the zero-positives convention: no true positives means 0."""
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def macro_f1(per_class_f1) -> float:
    """Unweighted mean over class F1 values."""
    vals = list(per_class_f1)
    return float(sum(vals) / len(vals))


def _align(decisions, truth):
    truth_by_id = {t.recording_id: t for t in truth}
    if len(truth_by_id) != len(truth):
        raise ValueError("duplicate recording_id in truth")
    seen = set()
    pairs = []
    for d in decisions:
        if d.recording_id not in truth_by_id:
            raise ValueError(f"no ground truth for recording {d.recording_id!r}")
        if d.recording_id in seen:
            raise ValueError(f"duplicate decision for recording {d.recording_id!r}")
        seen.add(d.recording_id)
        pairs.append((d, truth_by_id[d.recording_id]))
    missing = set(truth_by_id) - seen
    if missing:
        raise ValueError(f"no decision for recordings: {sorted(missing)[:5]}")
    return pairs


def evaluate(
    decisions,
    truth,
    bootstrap_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    confidence: float = DEFAULT_CONFIDENCE,
    bootstrap_seed: int = 0,
) -> EvalReport:
    """Per-class precision/recall/F1, macro F1, and its bootstrap CI.

    decisions and truth must cover the same recording ids. truth entries are
    AnnotationSets; class presence is their (possibly PDA-filtered) weak flag.
    """
    pairs = _align(decisions, truth)
    if not pairs:
        raise ValueError("nothing to evaluate")
    if bootstrap_resamples < 1:
        raise ValueError(f"need at least 1 bootstrap resample, got {bootstrap_resamples}")

    n = len(pairs)
    pred = np.zeros((n, len(CLASSES)), dtype=bool)
    true = np.zeros((n, len(CLASSES)), dtype=bool)
    for i, (d, t) in enumerate(pairs):
        active = t.active_classes
        for j, cls in enumerate(CLASSES):
            pred[i, j] = cls in d.active
            true[i, j] = cls in active

    tp_i = pred & true
    fp_i = pred & ~true
    fn_i = ~pred & true

    per_class = {}
    f1s = []
    for j, cls in enumerate(CLASSES):
        tp, fp, fn = int(tp_i[:, j].sum()), int(fp_i[:, j].sum()), int(fn_i[:, j].sum())
        tn = n - tp - fp - fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = f1_score(tp, fp, fn)
        per_class[cls] = ClassMetrics(precision, recall, f1, tp, fp, fn, tn)
        f1s.append(f1)

    point = macro_f1(f1s)
    ci = _bootstrap_macro_ci(tp_i, fp_i, fn_i, point, bootstrap_resamples, confidence, bootstrap_seed)

    silence_rate = sum(1 for d, _ in pairs if d.silence) / n
    return EvalReport(
        per_class=per_class,
        macro_f1=point,
        macro_f1_ci=ci,
        n_recordings=n,
        predicted_silence_rate=silence_rate,
        bootstrap_resamples=bootstrap_resamples,
        confidence=confidence,
        bootstrap_seed=bootstrap_seed,
    )


def _bootstrap_macro_ci(tp_i, fp_i, fn_i, point, resamples, confidence, seed):
    n = tp_i.shape[0]
    macros = np.empty(resamples)
    for r in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        idx = rng.integers(0, n, size=n)
        tp = tp_i[idx].sum(axis=0).astype(float)
        fp = fp_i[idx].sum(axis=0).astype(float)
        fn = fn_i[idx].sum(axis=0).astype(float)
        denom = 2.0 * tp + fp + fn
        f1 = np.where(tp > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
        macros[r] = f1.mean()
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(macros, [alpha, 1.0 - alpha])
    # percentile interval, widened if needed so it brackets the point estimate
    return (min(float(lo), point), max(float(hi), point))


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


@dataclass
class Curve:
    """PR or ROC curve with one point per candidate threshold (descending)."""

    kind: str  # "PR" or "ROC"
    points: list
    best_threshold: float
    best_score: float  # best F1 (PR) or best Youden J (ROC)


def _candidate_thresholds(scores: np.ndarray, grid_step: float | None = None) -> np.ndarray:
    cands = set(np.unique(scores).tolist())
    cands.add(0.0)  # sentinel: predicts everything with a positive score
    if grid_step is not None:
        cands.update(np.round(np.arange(0.0, 1.0 + grid_step / 2, grid_step), 9).tolist())
    return np.array(sorted(cands, reverse=True))


def _confusion_at(scores: np.ndarray, truth: np.ndarray, thresholds: np.ndarray):
    preds = scores[None, :] > thresholds[:, None]
    tp = (preds & truth[None, :]).sum(axis=1)
    fp = (preds & ~truth[None, :]).sum(axis=1)
    fn = ((~preds) & truth[None, :]).sum(axis=1)
    tn = len(scores) - tp - fp - fn
    return tp, fp, fn, tn


def curve(scores, truth, kind: str) -> Curve:
    """Build a PR or ROC curve over all distinct score thresholds.

    The best point maximizes F1 (PR) or Youden's J = TPR - FPR (ROC); ties go
    to the higher threshold. ROC requires at least one positive and one
    negative example.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if kind not in ("PR", "ROC"):
        raise ValueError(f"kind must be 'PR' or 'ROC', got {kind!r}")
    if len(scores) != len(truth) or len(scores) == 0:
        raise ValueError("scores and truth must be equal-length and non-empty")
    if kind == "ROC" and (truth.all() or not truth.any()):
        raise ValueError("ROC needs at least one positive and one negative example")

    thresholds = _candidate_thresholds(scores)
    tp, fp, fn, tn = _confusion_at(scores, truth, thresholds)

    if kind == "PR":
        with np.errstate(invalid="ignore"):
            precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 1.0)
            recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        xs, ys = recall, precision
        objective = np.where(tp > 0, 2.0 * tp / np.maximum(2.0 * tp + fp + fn, 1), 0.0)
    else:
        tpr = tp / np.maximum(tp + fn, 1)
        fpr = fp / np.maximum(fp + tn, 1)
        xs, ys = fpr, tpr
        objective = tpr - fpr

    best_i = 0
    for i in range(len(thresholds)):
        if objective[i] > objective[best_i]:
            best_i = i
    points = [CurvePoint(float(t), float(x), float(y)) for t, x, y in zip(thresholds, xs, ys)]
    return Curve(kind=kind, points=points, best_threshold=float(thresholds[best_i]), best_score=float(objective[best_i]))


def tune_thresholds(scores_by_class: dict, truth_by_class: dict, objective: str = "f1", grid_step: float | None = None) -> dict:
    """Per-class threshold maximizing F1 or Youden's J over candidate thresholds.

    Candidates are the distinct scores (plus a zero sentinel); grid_step adds
    a regular grid for round reported values. Ties go to the higher threshold.
    """
    if objective not in ("f1", "youden"):
        raise ValueError(f"objective must be 'f1' or 'youden', got {objective!r}")
    tuned = {}
    for cls in scores_by_class:
        scores = np.asarray(scores_by_class[cls], dtype=float)
        truth = np.asarray(truth_by_class[cls], dtype=bool)
        if len(scores) != len(truth) or len(scores) == 0:
            raise ValueError(f"{cls}: scores and truth must be equal-length and non-empty")
        if objective == "youden" and (truth.all() or not truth.any()):
            raise ValueError(f"{cls}: Youden tuning needs both positive and negative examples")

        thresholds = _candidate_thresholds(scores, grid_step=grid_step)
        tp, fp, fn, tn = _confusion_at(scores, truth, thresholds)
        if objective == "f1":
            obj = np.where(tp > 0, 2.0 * tp / np.maximum(2.0 * tp + fp + fn, 1), 0.0)
        else:
            obj = tp / np.maximum(tp + fn, 1) - fp / np.maximum(fp + tn, 1)
        best_i = 0
        for i in range(len(thresholds)):
            if obj[i] > obj[best_i]:
                best_i = i
        tuned[cls] = float(thresholds[best_i])
    return tuned


@dataclass
class ComboTally:
    fp_count: int = 0
    fn_count: int = 0
    fp_denominator: int = 0
    fn_denominator: int = 0

    @property
    def fp_rate(self) -> float | None:
        return self.fp_count / self.fp_denominator if self.fp_denominator else None

    @property
    def fn_rate(self) -> float | None:
        return self.fn_count / self.fn_denominator if self.fn_denominator else None


@dataclass
class StratifiedErrors:
    """FP/FN tallies per target class, keyed by the co-occurring truth labels.

    The combination is the set of *other* classes annotated in the recording,
    encoded as "A"/"B"/"G" letters, or "S" when no other class is active. FP
    denominators count recordings without the target class bearing that
    combination; FN denominators count recordings with it.
    """

    per_class: dict = field(default_factory=dict)

    def total_fp(self, cls: str) -> int:
        return sum(t.fp_count for t in self.per_class.get(cls, {}).values())

    def total_fn(self, cls: str) -> int:
        return sum(t.fn_count for t in self.per_class.get(cls, {}).values())

    def to_rows(self):
        rows = []
        for cls in CLASSES:
            for combo in sorted(self.per_class.get(cls, {})):
                t = self.per_class[cls][combo]
                rows.append((cls, combo, "fp", t.fp_count, t.fp_rate))
                rows.append((cls, combo, "fn", t.fn_count, t.fn_rate))
        return rows


def stratify_errors(decisions, truth) -> StratifiedErrors:
    """Tally FP/FN per class, stratified by which other labels are annotated."""
    pairs = _align(decisions, truth)
    out = StratifiedErrors(per_class={cls: {} for cls in CLASSES})
    for d, t in pairs:
        truth_active = t.active_classes
        for cls in CLASSES:
            others = truth_active - {cls}
            combo = combo_string(others)
            tally = out.per_class[cls].setdefault(combo, ComboTally())
            if cls in truth_active:
                tally.fn_denominator += 1
                if cls not in d.active:
                    tally.fn_count += 1
            else:
                tally.fp_denominator += 1
                if cls in d.active:
                    tally.fp_count += 1
    return out


@dataclass(frozen=True)
class CorrelationResult:
    filter_name: str
    index_name: str
    rho: float
    n: int


def pearson(x, y) -> float:
    """Pearson correlation; raises on fewer than 2 points or zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError(f"need >= 2 paired points, got {len(x)} and {len(y)}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx2 = float((dx**2).sum())
    sy2 = float((dy**2).sum())
    if sx2 == 0 or sy2 == 0:
        raise ValueError("zero variance in one of the variables")
    r = float((dx * dy).sum() / np.sqrt(sx2 * sy2))
    return min(1.0, max(-1.0, r))


def correlate(
    index_results,
    index_name: str,
    diversity: dict,
    label_sets: dict,
    filter_classes,
    filter_name: str = "",
) -> CorrelationResult:
    """Pearson r between one acoustic index and species counts on filtered recordings.

    A recording passes the filter when its label set is non-empty and
    contained in filter_classes. Recordings where the index is undefined
    (NDSI with empty bands) are skipped.
    """
    filter_classes = frozenset(filter_classes)
    xs, ys = [], []
    for res in index_results:
        rec_id = res.recording_id
        if rec_id not in diversity or rec_id not in label_sets:
            raise ValueError(f"recording {rec_id!r} missing diversity or labels")
        labels = frozenset(label_sets[rec_id]) & frozenset(CLASSES)
        if not labels or not labels <= filter_classes:
            continue
        value = getattr(res, index_name)
        if value is None:
            continue
        xs.append(value)
        ys.append(diversity[rec_id])
    r = pearson(xs, ys)
    return CorrelationResult(filter_name=filter_name, index_name=index_name, rho=r, n=len(xs))
