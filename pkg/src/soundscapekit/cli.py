"""Command-line front end: batch workflows over directories and CSV files.

Logs go to stderr and data to files or stdout, so commands compose in
pipelines. All randomness flows from the seed in the config (or --seed);
commands print the effective seed they used. Exit status is 0 only when
every per-item operation succeeded.
"""

import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from .audio_io import decode_wav, resample
from .config import RunConfig, dump_threshold_fragment, load_threshold_fragment
from .decision import (
    AnnotationSet,
    ThresholdPolicy,
    aggregate,
    apply_pda,
    decide,
    dump_decisions,
    load_annotations,
)
from .errors import SoundscapeKitError
from .evaluation import CASE_STUDY_FILTERS, correlate, curve, evaluate, stratify_errors, tune_thresholds
from .features import stft_magnitude
from .indices import IndexResult, aci, adi, ndsi
from .labels import CLASSES
from .scores import load_scores
from .synthmix import SourcePool, build_corpus


def _log(msg: str) -> None:
    click.echo(msg, err=True)


def _load_config(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


@click.group()
@click.version_option(version=__version__)
def main():
    """Soundscape analysis toolkit: mixing, indices, decisions, evaluation."""


@main.command("indices")
@click.argument("audio_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default="-", help="Output CSV path ('-' for stdout).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel workers.")
@click.option("--timing", is_flag=True, help="Add a wall_s column with per-file processing time.")
def cmd_indices(audio_dir, out, config_path, jobs, timing):
    """Compute ACI, ADI, and NDSI for every WAV file in AUDIO_DIR."""
    cfg = _load_config(config_path)
    p = cfg.indices
    files = sorted(Path(audio_dir).glob("*.wav"))
    _log(f"indices: {len(files)} files, seed={cfg.seed}")

    def process(path):
        t0 = time.perf_counter()
        clip = resample(decode_wav(path), p.target_rate_hz)
        spec = stft_magnitude(clip, window_len=p.stft_window, hop=p.stft_hop)
        result = IndexResult(
            recording_id=path.stem,
            aci=aci(spec, chunk_s=p.aci_chunk_s),
            adi=adi(spec, p.adi_band_width_hz, p.adi_max_freq_hz, p.adi_db_threshold),
            ndsi=ndsi(clip, p.ndsi_anthro_hz, p.ndsi_bio_hz),
        )
        return result, time.perf_counter() - t0

    def attempt(fetch):
        try:
            return fetch(), None
        except (SoundscapeKitError, ValueError) as exc:
            return None, exc

    # results buffered and emitted in input order regardless of worker count
    if jobs > 1 and files:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(process, f) for f in files]
        results = [(f, *attempt(fut.result)) for f, fut in zip(files, futures)]
    else:
        results = [(f, *attempt(lambda f=f: process(f))) for f in files]

    failures = 0
    rows = []

    for f, payload, exc in results:
        if exc is not None:
            failures += 1
            _log(f"indices: FAILED {f}: {exc}")
            continue
        result, wall = payload
        row = [
            result.recording_id,
            repr(result.aci),
            repr(result.adi),
            "" if result.ndsi is None else repr(result.ndsi),
        ]
        if timing:
            row.append(f"{wall:.6f}")
        rows.append(row)

    header = ["recording_id", "aci", "adi", "ndsi"] + (["wall_s"] if timing else [])
    comments = [
        f"# stft_window={p.stft_window} stft_hop={p.stft_hop} target_rate_hz={p.target_rate_hz}",
        f"# aci_chunk_s={p.aci_chunk_s} adi_band_width_hz={p.adi_band_width_hz} "
        f"adi_max_freq_hz={p.adi_max_freq_hz} adi_db_threshold={p.adi_db_threshold}",
        f"# ndsi_anthro_hz={list(p.ndsi_anthro_hz)} ndsi_bio_hz={list(p.ndsi_bio_hz)}",
    ]
    _write_csv(out, header, rows, comments=comments)
    if failures:
        _log(f"indices: {failures} file(s) failed")
        sys.exit(1)


def _write_csv(out, header, rows, comments=()):
    fh = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        for line in comments:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


@main.command("mix")
@click.argument("pool_manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--count", "counts", multiple=True, metavar="COMBO=N",
              help="Files to render per combination, e.g. --count A=10 --count BG=5 --count S=3.")
@click.option("--seed", type=int, default=None, help="Master seed (overrides config).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
def cmd_mix(pool_manifest, out_dir, counts, seed, config_path, jobs):
    """Render a synthetic labeled corpus from a source pool manifest."""
    cfg = _load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    parsed = {}
    for item in counts:
        combo, _, n = item.partition("=")
        if not n:
            raise click.BadParameter(f"expected COMBO=N, got {item!r}")
        parsed[combo.strip().upper()] = int(n)
    _log(f"mix: seed={cfg.seed} combos={parsed}")

    pool = SourcePool.from_manifest(pool_manifest)
    try:
        manifest = build_corpus(
            pool, parsed, cfg.seed, out_dir,
            jobs=jobs, count_pmfs=cfg.mixer_count_pmfs, normalization=cfg.mixer_normalization,
        )
    except (SoundscapeKitError, ValueError) as exc:
        _log(f"mix: FAILED: {exc}")
        sys.exit(1)
    _log(f"mix: wrote {manifest}")


def _decisions_and_truth(scores_path, annotations_path, cfg, policy):
    matrices = load_scores(scores_path, window_len_s=cfg.window.window_len_s)
    anns = load_annotations(annotations_path, duration_s=cfg.recording_duration_s)
    unknown = set(anns) - {m.recording_id for m in matrices}
    if unknown:
        raise SoundscapeKitError(f"annotations for recordings without scores: {sorted(unknown)[:5]}")

    truths = []
    for m in matrices:
        ann = anns.get(m.recording_id)
        if ann is None:
            ann = AnnotationSet(recording_id=m.recording_id, duration_s=cfg.recording_duration_s)
        truths.append(apply_pda(ann, cfg.pda))

    if policy is not None and policy.counts:
        min_windows = min(m.n_windows for m in matrices)
        for cls, c in policy.counts.items():
            if c > min_windows:
                raise SoundscapeKitError(
                    f"count {c} for {cls} exceeds the {min_windows} windows of the shortest recording"
                )
    return matrices, truths


@main.command("evaluate")
@click.argument("scores_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("annotations_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Threshold fragment from the tune command; overrides the config policy.")
@click.option("--seed", type=int, default=None, help="Bootstrap seed (overrides config).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def cmd_evaluate(scores_csv, annotations_csv, config_path, thresholds_path, seed, out_dir):
    """Apply duration filtering and thresholds to scores, then write the evaluation report."""
    cfg = _load_config(config_path)
    if thresholds_path:
        cfg.threshold_mode, cfg.thresholds = load_threshold_fragment(thresholds_path)
    if seed is not None:
        cfg.seed = seed
    _log(f"evaluate: seed={cfg.seed} mode={cfg.threshold_mode}")

    try:
        matrices, truths = _decisions_and_truth(scores_csv, annotations_csv, cfg, cfg.thresholds)
        decisions = [decide(m, cfg.thresholds) for m in matrices]
        report = evaluate(
            decisions,
            truths,
            bootstrap_resamples=cfg.bootstrap_resamples,
            confidence=cfg.bootstrap_confidence,
            bootstrap_seed=cfg.seed,
        )
        stratified = stratify_errors(decisions, truths)
    except (SoundscapeKitError, ValueError) as exc:
        _log(f"evaluate: FAILED: {exc}")
        sys.exit(1)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "report.txt").write_text(report.to_table() + "\n")

    truth_by_id = {t.recording_id: t for t in truths}
    curve_rows = []
    for cls in CLASSES:
        agg_scores = [aggregate(m)[cls] for m in matrices]
        cls_truth = [cls in truth_by_id[m.recording_id].active_classes for m in matrices]
        pr = curve(agg_scores, cls_truth, "PR")
        for pt in pr.points:
            curve_rows.append([cls, "PR", repr(pt.threshold), repr(pt.x), repr(pt.y)])
        if any(cls_truth) and not all(cls_truth):
            roc = curve(agg_scores, cls_truth, "ROC")
            for pt in roc.points:
                curve_rows.append([cls, "ROC", repr(pt.threshold), repr(pt.x), repr(pt.y)])
        else:
            _log(f"evaluate: skipping ROC for {cls} (degenerate labels)")
    _write_csv(out / "curves.csv", ["class", "kind", "threshold", "x", "y"], curve_rows)

    strat_rows = [
        [cls, combo, kind, count, "" if rate is None else repr(rate)]
        for cls, combo, kind, count, rate in stratified.to_rows()
    ]
    _write_csv(out / "stratified.csv", ["target", "combination", "kind", "count", "rate"], strat_rows)

    dump_decisions(decisions, out / "decisions.csv")
    _log(
        f"evaluate: macro_f1={report.macro_f1:.3f} "
        f"ci=[{report.macro_f1_ci[0]:.3f}, {report.macro_f1_ci[1]:.3f}] -> {out}"
    )


@main.command("tune")
@click.argument("scores_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("annotations_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--objective", type=click.Choice(["f1", "youden"]), default="f1", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--grid", is_flag=True, help="Also consider a 0.001-step threshold grid.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def cmd_tune(scores_csv, annotations_csv, objective, config_path, grid, out_path):
    """Find per-class thresholds maximizing F1 or Youden's J; emit a config fragment."""
    cfg = _load_config(config_path)
    _log(f"tune: objective={objective} seed={cfg.seed}")
    try:
        matrices, truths = _decisions_and_truth(scores_csv, annotations_csv, cfg, None)
        truth_by_id = {t.recording_id: t for t in truths}
        scores_by_class = {}
        truth_by_class = {}
        for cls in CLASSES:
            scores_by_class[cls] = [aggregate(m)[cls] for m in matrices]
            truth_by_class[cls] = [cls in truth_by_id[m.recording_id].active_classes for m in matrices]
        tuned = tune_thresholds(scores_by_class, truth_by_class, objective=objective,
                                grid_step=0.001 if grid else None)
    except (SoundscapeKitError, ValueError) as exc:
        _log(f"tune: FAILED: {exc}")
        sys.exit(1)

    policy = ThresholdPolicy(thresholds=tuned)
    dump_threshold_fragment("per-class", policy, out_path)
    for cls in CLASSES:
        _log(f"tune: {cls} -> {tuned[cls]:.6g}")
    _log(f"tune: wrote {out_path}")


def _read_indices_csv(path):
    results = {}
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for row in reader:
        ndsi_val = row.get("ndsi", "")
        results[row["recording_id"]] = IndexResult(
            recording_id=row["recording_id"],
            aci=float(row["aci"]),
            adi=float(row["adi"]),
            ndsi=float(ndsi_val) if ndsi_val else None,
        )
    return results


def _read_diversity_csv(path):
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["recording_id", "species_count"]:
            raise SoundscapeKitError(f"{path}: expected header recording_id,species_count")
        for row in reader:
            out[row["recording_id"]] = float(row["species_count"])
    return out


def _read_label_sets(path):
    """Weak-label or decisions CSV -> {recording_id: set of active classes}."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if not {"recording_id", *CLASSES} <= set(fields):
            raise SoundscapeKitError(f"{path}: expected recording_id plus per-class flag columns")
        for row in reader:
            out[row["recording_id"]] = frozenset(c for c in CLASSES if row[c] == "1")
    return out


@main.command("case-study")
@click.argument("indices_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("diversity_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("labels_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--model-labels", "model_labels_csv", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Model decisions CSV; adds rows with source=model.")
@click.option("--filters", default="all,B,AB,BG", show_default=True,
              help="Comma-separated filter names out of all,B,AB,BG.")
@click.option("--out", type=click.Path(dir_okay=False), default="-")
def cmd_case_study(indices_csv, diversity_csv, labels_csv, model_labels_csv, filters, out):
    """Correlate acoustic indices with species richness on filtered recordings."""
    try:
        index_by_id = _read_indices_csv(indices_csv)
        diversity = _read_diversity_csv(diversity_csv)
        sources = {"truth": _read_label_sets(labels_csv)}
        if model_labels_csv:
            sources["model"] = _read_label_sets(model_labels_csv)
    except SoundscapeKitError as exc:
        _log(f"case-study: FAILED: {exc}")
        sys.exit(1)

    filter_names = [f.strip() for f in filters.split(",") if f.strip()]
    for name in filter_names:
        if name not in CASE_STUDY_FILTERS:
            _log(f"case-study: unknown filter {name!r} (known: {sorted(CASE_STUDY_FILTERS)})")
            sys.exit(1)

    missing = [rid for rid in index_by_id if rid not in diversity]
    missing += [rid for src in sources.values() for rid in index_by_id if rid not in src]
    if missing:
        _log(f"case-study: FAILED: recordings missing diversity or labels: {sorted(set(missing))[:5]}")
        sys.exit(1)

    rows = []
    failures = 0
    results = list(index_by_id.values())
    for index_name in ("aci", "adi", "ndsi"):
        for fname in filter_names:
            for source, label_sets in sources.items():
                try:
                    res = correlate(
                        results, index_name, diversity, label_sets,
                        CASE_STUDY_FILTERS[fname], filter_name=fname,
                    )
                    rows.append([index_name, fname, source, res.n, repr(res.rho), ""])
                except ValueError as exc:
                    failures += 1
                    rows.append([index_name, fname, source, "", "", str(exc)])
    _write_csv(out, ["index", "filter", "source", "n", "r", "note"], rows)
    if failures:
        _log(f"case-study: {failures} correlation(s) could not be computed")
        sys.exit(1)


if __name__ == "__main__":
    main()
