"""Command-line pipeline: validate, synthesize, analyze, and report.

All aggregation is two-phase: per-story work (alignment, per-unit metrics) is
computed in a worker pool, then merged in a fixed key order, so serial and
parallel runs emit byte-identical CSVs. The analysis configuration is
serialized to ``manifest.json`` next to the outputs; a run is reproducible
from that manifest. Execution-only settings (output directory, worker count)
are not part of the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .align import NAIVE_SUM, WHITESPACE_REASSIGN, AlignmentPolicy, aggregate_word_surprisal
from .contour import (
    REDUCTION_KINDS,
    boundary_deltas,
    reduction_density,
    reduction_scores,
)
from .errors import (
    ContourError,
    LmmError,
    MetricsError,
    StatsError,
    TraceParseError,
    TraceValidationError,
    UidcError,
)
from .lmm import LmmSpec, build_observations, fit_lmm, slopes_report
from .metrics import (
    LEVEL_CAPTION,
    LEVEL_PARAGRAPH,
    LEVEL_SENTENCE,
    MetricRow,
    compute_metrics,
    pos_decomposition,
)
from .stats import (
    PAGE_EXACT_BUDGET,
    WILCOXON_EXACT_MAX_N,
    TestReport,
    apply_fdr,
    cohens_dz,
    page_test,
    relative_delta,
    wilcoxon_signed_rank,
)
from .synth import spec_from_json, generate
from .trace import (
    CONDITION_ORDER,
    Condition,
    Story,
    filter_corpus,
    read_trace_path,
    scan_trace,
    write_trace_path,
)

ALIGN_MODES = {"naive": NAIVE_SUM, "ws-reassign": WHITESPACE_REASSIGN}
COMPARISON_METRICS = ("uid_v", "uid_lv", "cv")
ORDERING_METRICS = ("uid_v", "uid_lv")
RESPONSES = ("mean_surprisal", "uid_v")


@dataclass
class RunConfig:
    """Analysis-semantic settings; fully captured by the run manifest."""

    inputs: list[str] = field(default_factory=list)
    align_mode: str = "naive"
    max_paragraphs: int = 20
    min_words_per_paragraph: int = 3
    min_stories_per_language: int = 20
    levels: list[str] | None = None
    conditions: list[str] | None = None
    exclude_pos: list[str] = field(default_factory=list)
    fdr_family: str = "per-metric"
    density_bins: int = 50
    density_bandwidth: float = 2.0
    count_weighted: bool = False
    boundary_windows: list[int] = field(default_factory=lambda: [1, 2, 3])
    boundary_sign: str = "final-first"
    lmm_estimator: str = "reml"
    lmm_min_sentences: int = 3
    pos_min_count: int = 50
    seed: int = 0
    pretty: bool = False

    def manifest(self) -> dict:
        out = asdict(self)
        out["version"] = __version__
        out["constants"] = {
            "wilcoxon_exact_max_n": WILCOXON_EXACT_MAX_N,
            "page_exact_budget": PAGE_EXACT_BUDGET,
            "cv_normalization": "sample (n-1); global uniformity uses population (1/n)",
            "language_mean_weighting": "one unit, one vote",
            "lmm_inference": "Wald z against a normal reference",
            "lmm_convergence": "gradient norm < 1e-6 or step < 1e-9 within 500 iterations",
        }
        return out


def _fmt(value, pretty: bool, digits: str = "") -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if pretty:
            return format(value, ".4g")
        if digits:
            return format(value, digits)
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list], pretty: bool, digits: str = ""):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, pretty, digits) for v in row])


def load_corpus(paths: list[str]) -> list[Story]:
    stories: list[Story] = []
    seen: set[tuple[str, str, str]] = set()
    for path in paths:
        for story in read_trace_path(path):
            key = (story.language, story.source, story.story_id)
            if key in seen:
                raise TraceValidationError(
                    story.story_id, "story_id", f"duplicate across input files for {key[:2]}"
                )
            seen.add(key)
            stories.append(story)
    return stories


_WORKER_STATE: dict = {}


def _align_worker_init(mode: str):
    _WORKER_STATE["policy"] = AlignmentPolicy(mode=mode)


def _align_worker(story: Story) -> Story:
    return aggregate_word_surprisal(story, _WORKER_STATE["policy"])


def align_corpus(stories: list[Story], align_mode: str, threads: int) -> list[Story]:
    policy = AlignmentPolicy(mode=ALIGN_MODES[align_mode])
    if threads <= 1 or len(stories) < 2:
        return [aggregate_word_surprisal(s, policy) for s in stories]
    chunk = max(1, len(stories) // (threads * 4))
    with ProcessPoolExecutor(
        max_workers=threads, initializer=_align_worker_init, initargs=(policy.mode,)
    ) as pool:
        return list(pool.map(_align_worker, stories, chunksize=chunk))


def _auto_levels(stories: list[Story]) -> list[str]:
    if all(len(s.paragraphs) == 1 for s in stories):
        return [LEVEL_CAPTION]
    return [LEVEL_SENTENCE, LEVEL_PARAGRAPH]


def _corpus_conditions(stories: list[Story]) -> list[Condition]:
    present = set.intersection(*(set(s.conditions()) for s in stories))
    return [c for c in CONDITION_ORDER if c in present]


def _metric_value(row: MetricRow, metric: str):
    return getattr(row, metric)


def _metrics_rows(stories: list[Story], levels, conditions, exclude_pos) -> list[MetricRow]:
    exclude = frozenset(exclude_pos)
    rows: list[MetricRow] = []
    for story in stories:
        for level in levels:
            rows.extend(compute_metrics(story, level, conditions, exclude))
    rows.sort(key=lambda r: (r.language, r.story_id, r.level, r.unit_index, r.condition.value))
    return rows


def _metrics_csv(rows: list[MetricRow], path: Path, pretty: bool):
    header = [
        "story_id", "language", "level", "unit_index", "condition",
        "n_words", "mean_surprisal", "uid_v", "uid_lv", "cv",
    ]
    out = [
        [
            r.story_id, r.language, r.level, r.unit_index, r.condition.value,
            r.n_words, r.mean_surprisal, r.uid_v, r.uid_lv, r.cv,
        ]
        for r in rows
    ]
    _write_csv(path, header, out, pretty, digits=".9g")


def _default_pairs(conditions: list[Condition]) -> list[tuple[Condition, Condition]]:
    pairs = []
    if Condition.U in conditions and Condition.P in conditions:
        pairs.append((Condition.U, Condition.P))
    if Condition.U in conditions and Condition.D in conditions:
        pairs.append((Condition.U, Condition.D))
    if Condition.D in conditions and Condition.PD in conditions:
        pairs.append((Condition.D, Condition.PD))
    return pairs


def _comparison_rows(rows: list[MetricRow], conditions, fdr_family: str) -> list[list]:
    pairs = _default_pairs(conditions)
    cells: dict[tuple, dict[Condition, float]] = {}
    for r in rows:
        for metric in COMPARISON_METRICS:
            value = _metric_value(r, metric)
            if value is None:
                continue
            key = (r.language, r.level, metric, r.story_id, r.unit_index)
            cells.setdefault(key, {})[r.condition] = value

    partial: dict[tuple, dict] = {}
    for (language, level, metric, story_id, unit_index), values in cells.items():
        for pair in pairs:
            if pair[0] in values and pair[1] in values:
                group = partial.setdefault((language, level, metric, pair), {"a": [], "b": []})
                group["a"].append(values[pair[0]])
                group["b"].append(values[pair[1]])

    reports: dict[tuple, TestReport | None] = {}
    extras: dict[tuple, dict] = {}
    for key in sorted(partial, key=lambda k: (k[0], k[1], k[2], k[3][0].value, k[3][1].value)):
        a = np.array(partial[key]["a"])
        b = np.array(partial[key]["b"])
        diff = b - a
        mean_a, mean_b = float(a.mean()), float(b.mean())
        try:
            delta = relative_delta(mean_a, mean_b)
        except StatsError:
            delta = None
        try:
            dz = cohens_dz(diff)
        except StatsError:
            dz = None
        try:
            reports[key] = wilcoxon_signed_rank(diff)
        except StatsError:
            reports[key] = None
        extras[key] = {"n": len(diff), "mean_a": mean_a, "mean_b": mean_b,
                       "delta": delta, "dz": dz}

    families: dict[tuple, list[tuple]] = {}
    for key, report in reports.items():
        if report is None:
            continue
        language, level, metric, pair = key
        fam = (level, pair) if fdr_family == "pooled" else (level, pair, metric)
        families.setdefault(fam, []).append(key)
    adjusted: dict[tuple, TestReport] = {}
    for fam in sorted(families):
        keys = sorted(families[fam])
        for key, rep in zip(keys, apply_fdr([reports[k] for k in keys])):
            adjusted[key] = rep

    out = []
    for key in sorted(extras):
        language, level, metric, pair = key
        e = extras[key]
        rep = adjusted.get(key)
        out.append([
            language, level, metric, pair[0].value, pair[1].value, e["n"],
            e["mean_a"], e["mean_b"], e["delta"], e["dz"],
            rep.statistic if rep else None,
            rep.p_value if rep else None,
            rep.q_value if rep else None,
            rep.significance_code if rep else "degenerate",
            rep.method if rep else "",
            rep.n_zeros_dropped if rep else None,
        ])
    return out


def _cv_rows(rows: list[MetricRow]) -> list[list]:
    acc: dict[tuple, list[float]] = {}
    for r in rows:
        if r.cv is None:
            continue
        acc.setdefault((r.language, r.level, r.condition), []).append(r.cv)
    out = []
    for (language, level, condition) in sorted(acc, key=lambda k: (k[0], k[1], k[2].value)):
        values = acc[(language, level, condition)]
        out.append([language, level, condition.value, float(np.mean(values)), len(values)])
    return out


def _ordering_rows(rows: list[MetricRow], conditions: list[Condition]) -> list[list]:
    if len(conditions) < 3:
        return []
    order = [c for c in CONDITION_ORDER if c in conditions]
    out = []
    by_group: dict[tuple, dict] = {}
    for r in rows:
        for metric in ORDERING_METRICS:
            value = _metric_value(r, metric)
            if value is None:
                continue
            group = by_group.setdefault((r.language, r.level, metric), {})
            story = group.setdefault(r.story_id, {c: [] for c in order})
            if r.condition in story:
                story[r.condition].append(value)
    for (language, level, metric) in sorted(by_group):
        group = by_group[(language, level, metric)]
        matrix = []
        for story_id in sorted(group):
            per_cond = group[story_id]
            if any(len(per_cond[c]) == 0 for c in order):
                continue
            matrix.append([float(np.mean(per_cond[c])) for c in order])
        if len(matrix) < 1:
            continue
        report = page_test(np.array(matrix), predicted_order=list(range(len(order))))
        unit_means = {c: [] for c in order}
        for story_id in group:
            for c in order:
                unit_means[c].extend(group[story_id][c])
        row = [language, level, metric, report.n_subjects]
        for c in CONDITION_ORDER:
            row.append(float(np.mean(unit_means[c])) if c in unit_means else None)
        row.extend([report.L_statistic, report.p_value, report.method])
        out.append(row)
    return out


def _boundary_rows(stories_by_lang, levels, conditions, windows, sign) -> list[list]:
    out = []
    sign_value = -1 if sign == "final-first" else 1
    for language in sorted(stories_by_lang):
        stories = stories_by_lang[language]
        for level in (LEVEL_SENTENCE, LEVEL_PARAGRAPH):
            for condition in conditions:
                try:
                    deltas = boundary_deltas(
                        stories, level, condition, w_values=windows, sign=sign_value
                    )
                except ContourError:
                    continue
                for d in deltas:
                    out.append([
                        language, d.level, d.window_w, d.condition.value,
                        d.mean_delta, d.n_transitions, d.n_skipped,
                    ])
    return out


def _density_outputs(stories_by_lang, conditions, cfg: RunConfig, out_dir: Path) -> list[list]:
    if any(c not in conditions for c in CONDITION_ORDER):
        return []
    index = []
    for language in sorted(stories_by_lang):
        scores = []
        for story in stories_by_lang[language]:
            scores.extend(reduction_scores(story))
        for level in (LEVEL_SENTENCE, LEVEL_PARAGRAPH):
            for which in REDUCTION_KINDS:
                try:
                    curve = reduction_density(
                        scores, which, level,
                        bins=cfg.density_bins,
                        bandwidth_bins=cfg.density_bandwidth,
                        count_weighted=cfg.count_weighted,
                    )
                except ContourError:
                    continue
                name = f"{which}_{level}_{language}.csv"
                rows = [
                    [float(center), value]
                    for center, value in zip(curve.bin_centers(), curve.values)
                ]
                _write_csv(out_dir / "densities" / name, ["bin_center", "value"], rows, cfg.pretty)
                index.append([
                    language, level, which, curve.n_observations,
                    curve.bins, curve.bandwidth_bins, f"densities/{name}",
                ])
    return index


def _slopes_rows(stories_by_lang, levels, conditions, cfg: RunConfig) -> list[list]:
    rows = []
    fits = {}
    for language in sorted(stories_by_lang):
        stories = stories_by_lang[language]
        for level in (LEVEL_SENTENCE, LEVEL_PARAGRAPH):
            if level not in levels:
                continue
            for response in RESPONSES:
                obs = build_observations(
                    stories, response, level, conditions,
                    min_sentences_per_paragraph=cfg.lmm_min_sentences,
                )
                if not obs:
                    continue
                spec = LmmSpec(
                    response=response, level=level, reml=cfg.lmm_estimator == "reml"
                )
                try:
                    fits[(language, level, response)] = fit_lmm(obs, spec)
                except LmmError as exc:
                    print(
                        f"uidc: skipping regression {language}/{level}/{response}: {exc}",
                        file=sys.stderr,
                    )
    for row in slopes_report(fits):
        rows.append([
            row["language"], row["level"], row["response"], row["condition"],
            row["slope"], row["se"], row["p_value"], row["significance"],
            row["converged"], row["n_obs"], row["n_groups"],
        ])
    return rows


ALL_STAGES = frozenset(
    {"metrics", "comparison", "cv", "ordering", "boundaries", "densities", "pos", "slopes"}
)


def cmd_analyze(
    cfg: RunConfig, out_dir: str | Path, threads: int = 1,
    stages: frozenset[str] = ALL_STAGES,
) -> Path:
    """Run the pipeline and write the requested tables to ``out_dir``.

    ``stages`` limits the products (the single-table subcommands request one
    each); the full run writes every table the corpus supports.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stories = load_corpus(cfg.inputs)
    stories = filter_corpus(
        stories,
        min_stories_per_language=cfg.min_stories_per_language,
        max_paragraphs=cfg.max_paragraphs,
        min_words_per_paragraph=cfg.min_words_per_paragraph,
    )
    if not stories:
        raise UidcError("no stories survive the corpus filters")
    stories = align_corpus(stories, cfg.align_mode, threads)
    stories.sort(key=lambda s: (s.language, s.source, s.story_id))

    conditions = (
        [Condition(c) for c in cfg.conditions] if cfg.conditions else _corpus_conditions(stories)
    )
    if not conditions:
        raise UidcError("no condition is present on every story; pass --conditions")
    levels = cfg.levels if cfg.levels else _auto_levels(stories)

    needs_rows = stages & {"metrics", "comparison", "cv", "ordering"}
    rows = _metrics_rows(stories, levels, conditions, cfg.exclude_pos) if needs_rows else []
    if "metrics" in stages:
        _metrics_csv(rows, out / "metrics.csv", cfg.pretty)

    if "comparison" in stages:
        comparison = _comparison_rows(rows, conditions, cfg.fdr_family)
        _write_csv(
            out / "comparison.csv",
            [
                "language", "level", "metric", "cond_a", "cond_b", "n",
                "mean_a", "mean_b", "delta_pct", "d_z", "W", "p_value", "q_value",
                "significance", "method", "n_zeros_dropped",
            ],
            comparison, cfg.pretty,
        )

    if "cv" in stages:
        _write_csv(
            out / "cv.csv",
            ["language", "level", "condition", "mean_cv", "n_units"],
            _cv_rows(rows), cfg.pretty,
        )

    if "ordering" in stages:
        ordering = _ordering_rows(rows, conditions)
        if ordering:
            _write_csv(
                out / "ordering.csv",
                [
                    "language", "level", "metric", "n_stories",
                    "mean_U", "mean_P", "mean_D", "mean_PD", "L", "p_value", "method",
                ],
                ordering, cfg.pretty,
            )
        elif len(conditions) < 3:
            print(
                "uidc: ordering.csv skipped: the trend test needs at least "
                f"three conditions, corpus has {[c.value for c in conditions]}",
                file=sys.stderr,
            )

    stories_by_lang: dict[str, list[Story]] = {}
    for story in stories:
        stories_by_lang.setdefault(story.language, []).append(story)

    if "boundaries" in stages:
        boundary = _boundary_rows(
            stories_by_lang, levels, conditions, cfg.boundary_windows, cfg.boundary_sign
        )
        if boundary:
            _write_csv(
                out / "boundaries.csv",
                ["language", "level", "w", "condition", "mean_delta",
                 "n_transitions", "n_skipped"],
                boundary, cfg.pretty,
            )

    if "densities" in stages:
        density_index = _density_outputs(stories_by_lang, conditions, cfg, out)
        if density_index:
            _write_csv(
                out / "densities" / "index.csv",
                ["language", "level", "reduction", "n_observations",
                 "bins", "bandwidth_bins", "file"],
                density_index, cfg.pretty,
            )
        elif any(c not in conditions for c in CONDITION_ORDER):
            missing = [c.value for c in CONDITION_ORDER if c not in conditions]
            print(
                f"uidc: densities skipped: reduction scores need all four "
                f"conditions, missing {missing}",
                file=sys.stderr,
            )

    if "pos" in stages and Condition.U in conditions and Condition.P in conditions:
        try:
            contributions = pos_decomposition(
                stories, Condition.U, Condition.P, min_count=cfg.pos_min_count
            )
        except MetricsError:
            contributions = []
        if contributions:
            _write_csv(
                out / "pos.csv",
                ["language", "pos_tag", "delta_c_mean", "n_words",
                 "pct_increase", "pct_decrease"],
                [
                    [c.language, c.pos_tag, c.delta_c_mean, c.n_words,
                     c.pct_increase, c.pct_decrease]
                    for c in contributions
                ],
                cfg.pretty,
            )

    if "slopes" in stages:
        slope_rows = _slopes_rows(stories_by_lang, levels, conditions, cfg)
        if slope_rows:
            _write_csv(
                out / "slopes.csv",
                [
                    "language", "level", "response", "condition", "slope", "se",
                    "p_value", "significance", "converged", "n_obs", "n_groups",
                ],
                slope_rows, cfg.pretty,
            )

    with open(out / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(cfg.manifest(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return out


def cmd_validate(paths: list[str]) -> int:
    """Stream each trace file; print counts and violations; exit 1 on any violation."""
    exit_code = 0
    for path in paths:
        with open(path, "rb") as handle:
            stories, violations = scan_trace(handle)
        n_words = sum(len(s.words) for s in stories)
        n_tokens = sum(len(s.tokens) for s in stories)
        languages = sorted({s.language for s in stories})
        print(
            f"{path}: {len(stories)} stories, {n_words} words, {n_tokens} tokens, "
            f"languages: {','.join(languages) if languages else '-'}"
        )
        for line_number, message in violations:
            print(f"{path}:{line_number}: {message}")
            exit_code = 1
    return exit_code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uidc",
        description="Surprisal uniformity, reduction contours, and boundary statistics over trace corpora.",
    )
    parser.add_argument("--version", action="version", version=f"uidc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check trace files against all invariants")
    p_validate.add_argument("paths", nargs="+")

    p_synth = sub.add_parser("synth", help="generate a synthetic trace corpus")
    p_synth.add_argument("--spec", required=True, help="JSON file of generator settings")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None, help="override the spec seed")

    def add_analysis_flags(p: argparse.ArgumentParser, io_required: bool = True):
        p.add_argument("--config", default=None, help="JSON config (a prior run manifest works)")
        p.add_argument("--input", nargs="+", dest="inputs", default=None, help="trace files")
        p.add_argument("--align-mode", choices=sorted(ALIGN_MODES), default=None)
        p.add_argument("--max-paragraphs", type=int, default=None)
        p.add_argument("--min-words-per-paragraph", type=int, default=None)
        p.add_argument("--min-stories-per-language", type=int, default=None)
        p.add_argument("--levels", default=None, help="comma list: sentence,paragraph,caption")
        p.add_argument("--conditions", default=None, help="comma list, e.g. U,P,D,PD")
        p.add_argument("--exclude-pos", default=None, help="comma list of POS tags to drop")
        p.add_argument("--fdr-family", choices=["per-metric", "pooled"], default=None)
        p.add_argument("--density-bins", type=int, default=None)
        p.add_argument("--density-bandwidth", type=float, default=None)
        p.add_argument("--count-weighted", action="store_true", default=None)
        p.add_argument("--boundary-windows", default=None, help="comma list, e.g. 1,2,3")
        p.add_argument("--boundary-sign", choices=["final-first", "first-final"], default=None)
        p.add_argument("--lmm-estimator", choices=["reml", "ml"], default=None)
        p.add_argument("--lmm-min-sentences", type=int, default=None)
        p.add_argument("--pos-min-count", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--pretty", action="store_true", default=None)
        p.add_argument("--threads", type=int, default=None, help="worker count (env UIDC_THREADS overrides)")

    for name, help_text in [
        ("analyze", "run the full pipeline into an output directory"),
        ("metrics", "write metrics.csv only"),
        ("compare", "write comparison.csv only"),
        ("boundaries", "write boundaries.csv only"),
        ("densities", "write density curves only"),
        ("regress", "write slopes.csv only"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True)
        add_analysis_flags(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> tuple[RunConfig, int]:
    cfg = RunConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as handle:
            loaded = json.load(handle)
        for key, value in loaded.items():
            if hasattr(cfg, key) and key not in ("version", "constants"):
                setattr(cfg, key, value)
    overrides = {
        "inputs": args.inputs,
        "align_mode": args.align_mode,
        "max_paragraphs": args.max_paragraphs,
        "min_words_per_paragraph": args.min_words_per_paragraph,
        "min_stories_per_language": args.min_stories_per_language,
        "fdr_family": args.fdr_family,
        "density_bins": args.density_bins,
        "density_bandwidth": args.density_bandwidth,
        "count_weighted": args.count_weighted,
        "boundary_sign": args.boundary_sign,
        "lmm_estimator": args.lmm_estimator,
        "lmm_min_sentences": args.lmm_min_sentences,
        "pos_min_count": args.pos_min_count,
        "seed": args.seed,
        "pretty": args.pretty,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.levels is not None:
        cfg.levels = [v for v in args.levels.split(",") if v]
    if args.conditions is not None:
        cfg.conditions = [v for v in args.conditions.split(",") if v]
    if args.exclude_pos is not None:
        cfg.exclude_pos = [v for v in args.exclude_pos.split(",") if v]
    if args.boundary_windows is not None:
        cfg.boundary_windows = [int(v) for v in str(args.boundary_windows).split(",") if v]
    if not cfg.inputs:
        raise UidcError("no input traces: pass --input or a config with inputs")
    threads = args.threads if args.threads is not None else 1
    env_threads = os.environ.get("UIDC_THREADS")
    if env_threads:
        threads = int(env_threads)
    return cfg, threads


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.paths)
        if args.command == "synth":
            with open(args.spec, "r", encoding="utf-8") as handle:
                obj = json.load(handle)
            if args.seed is not None:
                obj["seed"] = args.seed
            stories = generate(spec_from_json(obj))
            write_trace_path(stories, args.out)
            print(f"wrote {len(stories)} stories to {args.out}")
            return 0
        cfg, threads = _config_from_args(args)
        if args.command == "analyze":
            out = cmd_analyze(cfg, args.out, threads)
            print(f"analysis written to {out}")
            return 0
        # Single-table commands reuse the full pipeline in a scratch directory
        # and move the requested product into place.
        return _single_table(args.command, cfg, args.out, threads)
    except (TraceParseError, TraceValidationError) as exc:
        print(f"uidc: {exc}", file=sys.stderr)
        return 1
    except UidcError as exc:
        print(f"uidc: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"uidc: {exc}", file=sys.stderr)
        return 2


def _single_table(command: str, cfg: RunConfig, out: str, threads: int) -> int:
    import shutil
    import tempfile

    product, stage = {
        "metrics": ("metrics.csv", "metrics"),
        "compare": ("comparison.csv", "comparison"),
        "boundaries": ("boundaries.csv", "boundaries"),
        "densities": ("densities", "densities"),
        "regress": ("slopes.csv", "slopes"),
    }[command]
    with tempfile.TemporaryDirectory() as scratch:
        cmd_analyze(cfg, scratch, threads, stages=frozenset({stage}))
        source = Path(scratch) / product
        if not source.exists():
            raise UidcError(
                f"{product} was not produced; the corpus lacks the required conditions or structure"
            )
        target = Path(out)
        if source.is_dir():
            if target.exists():
                shutil.rmtree(target)
            shutil.copytree(source, target)
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(source, target)
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
