"""Command-line pipeline: composable subcommands over persisted
artifacts, with deterministic outputs.

Exit codes: 0 success, 1 data error (a structured error record goes to
stderr), 2 usage error.  Stages with an ``--out`` skip recomputation
when the output is newer than every input (override with ``--force``).
Per-record stages fan out over a bounded thread pool; merges preserve
input order, so the parallelism degree never changes output bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import alignment, covariates, discretize, synthetic
from . import causal as causal_mod
from . import ingest
from .errors import IoError, SchemaError, ToolkitError

PARALLEL_ENV = "ASRCAUSAL_PARALLEL"

# Node -> record field for the nine-variable analysis layout.
_CATEGORICAL_SOURCES = {"Age": "grade", "Gender": "gender"}
_BINNED_SOURCES = {"SNR": "snr_db", "VocabDiff": "vocab_difficulty",
                   "NoWords": "word_count", "GoP": "gop"}
_DEFAULT_METHODS = {"SNR": "quantile", "VocabDiff": "kde",
                    "NoWords": "quantile", "GoP": "sigma"}
_ERROR_NODES = ("SubsErr", "DelErr", "InsErr")


class _Once(argparse.Action):
    """Reject a flag given more than once (mutually exclusive sources)."""

    def __call__(self, parser, namespace, values, option_string=None):
        if getattr(namespace, f"_{self.dest}_seen", False):
            parser.error(f"{option_string} given more than once")
        setattr(namespace, f"_{self.dest}_seen", True)
        setattr(namespace, self.dest, values)


def _default_parallel() -> int:
    try:
        return max(1, int(os.environ.get(PARALLEL_ENV, "1")))
    except ValueError:
        return 1


def parse_args(argv) -> argparse.Namespace:
    """Validated run configuration; unknown flags exit 2 via argparse."""
    parser = argparse.ArgumentParser(
        prog="asrcausal",
        description="ASR error decomposition and causal-strength analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parallel(p):
        p.add_argument("--parallel", type=int, default=_default_parallel(),
                       help="worker pool size (default: "
                            f"${PARALLEL_ENV} or 1)")

    def add_force(p):
        p.add_argument("--force", action="store_true",
                       help="recompute even when the output is fresh")

    p = sub.add_parser("synth", help="generate a dataset from an SCM spec")
    p.add_argument("--spec", required=True,
                   help="builtin name (paper-shaped, copy-chain) or file")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--truths", default=None,
                   help="also write enumerated per-edge ACE/CMI ground truth")
    add_parallel(p)
    add_force(p)

    p = sub.add_parser("align", help="score hypotheses per record and model")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models", default=None,
                   help="comma-separated; default: all models on the records")
    add_parallel(p)
    add_force(p)

    p = sub.add_parser("covariates",
                       help="fill gop, vocab_difficulty, snr_db, word_count")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--freq-table", action="append", default=[],
                   help="word,count CSV; repeatable, pooled by summation")
    p.add_argument("--posteriors", default=None)
    p.add_argument("--segments", default=None)
    p.add_argument("--inventory", default=None)
    p.add_argument("--floor-posteriors", action="store_true",
                   help="clamp zero posteriors at 1e-10 instead of failing")
    p.add_argument("--audio-dir", default=None)
    p.add_argument("--sample-rate", type=int, default=None,
                   help="required for headerless .raw PCM")
    add_parallel(p)
    add_force(p)

    p = sub.add_parser("discretize",
                       help="fit/apply binning and assemble a dataset")
    p.add_argument("--records", required=True)
    p.add_argument("--scores", default=None)
    p.add_argument("--model", default=None,
                   help="model whose scores become the error columns")
    p.add_argument("--out", required=True)
    p.add_argument("--schemes-out", default=None)
    p.add_argument("--schemes-in", default=None,
                   help="re-apply persisted schemes instead of fitting")
    p.add_argument("--bin", action="append", default=[],
                   metavar="VAR=METHOD",
                   help="override method (sigma, kde, quantile) per node")
    add_force(p)

    p = sub.add_parser("oracle", help="per-utterance best-model selection")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    add_force(p)

    p = sub.add_parser("correlate", help="model-pair WER correlation matrix")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--by-grade", action="store_true",
                   help="one matrix per grade next to --out")
    add_force(p)

    p = sub.add_parser("fit", help="fit conditional probability tables")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--graph", action=_Once, default="paper-default")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True)
    add_force(p)

    p = sub.add_parser("ace", help="average causal effect of one edge")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--graph", action=_Once, default="paper-default")
    p.add_argument("--treatment", required=True)
    p.add_argument("--effect", required=True)
    p.add_argument("--lo", default=None)
    p.add_argument("--hi", default=None)
    p.add_argument("--on-empty", choices=("error", "skip"), default="error")
    p.add_argument("--out", default=None)

    p = sub.add_parser("cmi", help="conditional mutual information")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--graph", action=_Once, default=None,
                   help="condition on the effect's other parents")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--z", default=None, help="comma-separated; overrides --graph")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("report", help="per-edge ACE/CMI report")
    p.add_argument("--in", dest="inp", action="append", required=True,
                   metavar="[NAME=]DATASET",
                   help="repeatable; NAME defaults to the file stem")
    p.add_argument("--graph", action=_Once, default="paper-default")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--on-empty", choices=("error", "skip"), default="error")
    p.add_argument("--records", default=None,
                   help="add per-grade error tables to the report")
    p.add_argument("--scores", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-dir", default=None)
    add_parallel(p)
    add_force(p)

    config = parser.parse_args(argv)
    if getattr(config, "parallel", 1) < 1:
        parser.error("--parallel must be >= 1")
    return config


def _is_fresh(out: str, inputs, force: bool) -> bool:
    if force or not os.path.exists(out):
        return False
    try:
        out_mtime = os.path.getmtime(out)
        return all(os.path.getmtime(p) <= out_mtime for p in inputs if p)
    except OSError:
        return False


def _parallel_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def _read_records(path: str):
    with open(path) as fh:
        return ingest.parse_utterances(fh)


def _load_graph(value: str) -> causal_mod.CausalGraph:
    if value in ("paper-default", "fig3e"):
        return causal_mod.CausalGraph.builtin(value)
    return causal_mod.CausalGraph(ingest.parse_graph_spec(_read_text(value)))


def _load_dataset(path: str) -> causal_mod.DiscreteDataset:
    return causal_mod.DiscreteDataset.from_document(
        ingest.parse_report(_read_text(path)))


def _load_scm(value: str, n, seed) -> synthetic.ScmSpec:
    if value in ("paper-shaped", "copy-chain"):
        return synthetic.builtin_scm_spec(value, n=n, seed=seed)
    spec = synthetic.parse_scm_spec(_read_text(value))
    if n is not None:
        spec.n = n
    if seed is not None:
        spec.seed = seed
    return spec


# --- subcommands ---------------------------------------------------------------

def _cmd_synth(config) -> int:
    inputs = [] if config.spec in ("paper-shaped", "copy-chain") else [config.spec]
    if _is_fresh(config.out, inputs, config.force):
        print(f"synth: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    spec = _load_scm(config.spec, config.n, config.seed)
    data = synthetic.generate(spec)
    _write_text(config.out, ingest.write_report(data.to_document()))
    if config.truths:
        edges = []
        for cause, effect in spec.graph.edges:
            others = [p for p in spec.graph.parents(effect) if p != cause]
            edges.append({
                "cause": cause,
                "effect": effect,
                "ace": synthetic.true_ace(spec, cause, effect),
                "ace_normalized": synthetic.true_ace(spec, cause, effect,
                                                     normalized=True),
                "cmi": synthetic.true_cmi(spec, cause, effect, others),
                "conditioning": others,
            })
        _write_text(config.truths, ingest.write_report({"edges": edges}))
    return 0


def _cmd_align(config) -> int:
    if _is_fresh(config.out, [config.inp], config.force):
        print(f"align: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    records = _read_records(config.inp)
    if config.models:
        models = [m for m in config.models.split(",") if m]
    else:
        models = sorted({m for r in records for m in r.hypotheses})

    def score(record):
        return {"id": record.id,
                "scores": {m: alignment.score_record(record, m).to_dict()
                           for m in models}}

    lines = _parallel_map(score, records, config.parallel)
    text = "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in lines)
    _write_text(config.out, text)
    return 0


def _read_scores(path: str) -> dict[str, dict]:
    scores = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) \
                    from None
            if "id" not in entry or "scores" not in entry:
                raise SchemaError("score lines need 'id' and 'scores'",
                                  line=line_no)
            scores[entry["id"]] = entry["scores"]
    return scores


def _cmd_covariates(config) -> int:
    inputs = [config.inp, *config.freq_table, config.posteriors,
              config.segments, config.inventory]
    if _is_fresh(config.out, inputs, config.force):
        print(f"covariates: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    records = _read_records(config.inp)

    freq = None
    if config.freq_table:
        tables = [ingest.parse_frequency_table(_read_text(p))
                  for p in config.freq_table]
        freq = ingest.merge_frequency_tables(tables)

    gop_scores: dict[str, float] = {}
    if config.posteriors or config.segments or config.inventory:
        if not (config.posteriors and config.segments and config.inventory):
            raise SchemaError("gop needs --posteriors, --segments and "
                              "--inventory together")
        inventory = ingest.parse_report(_read_text(config.inventory))
        with open(config.posteriors) as fh:
            frames = covariates.parse_posterior_frames(fh)
        with open(config.segments) as fh:
            segments = covariates.parse_segments(fh, inventory)
        for utt_id, segs in segments.items():
            gop_scores[utt_id] = covariates.gop_utterance(
                segs, frames.get(utt_id, []),
                floor=config.floor_posteriors).utterance

    def enrich(record):
        if record.word_count is None:
            record.word_count = covariates.word_count(record.reference)
        if record.vocab_difficulty is None and freq is not None:
            tokens = alignment.normalize_text(record.reference)
            if tokens:
                record.vocab_difficulty = covariates.sentence_difficulty(
                    tokens, freq)
        if record.gop is None and record.id in gop_scores:
            record.gop = gop_scores[record.id]
        if record.snr_db is None and config.audio_dir:
            for ext in (".wav", ".raw"):
                path = os.path.join(config.audio_dir, record.id + ext)
                if os.path.exists(path):
                    samples, rate = covariates.read_audio(
                        path, config.sample_rate)
                    record.snr_db = covariates.estimate_snr(samples, rate)
                    break
        return record

    enriched = _parallel_map(enrich, records, config.parallel)
    _write_text(config.out, ingest.write_utterances(enriched))
    return 0


def _parse_bin_overrides(pairs) -> dict[str, str]:
    methods = dict(_DEFAULT_METHODS)
    for pair in pairs:
        if "=" not in pair:
            raise SchemaError(f"--bin expects VAR=METHOD, got {pair!r}")
        var, method = pair.split("=", 1)
        if method not in ("sigma", "kde", "quantile"):
            raise SchemaError(f"unknown binning method {method!r}")
        methods[var] = method
    return methods


def _fit_or_reuse(variable, values, method, persisted):
    if persisted is not None and variable in persisted:
        return persisted[variable]
    if method == "sigma":
        return discretize.fit_sigma_bins(values, variable)
    if method == "kde":
        return discretize.fit_kde_bins(values, 3, variable)
    return discretize.fit_quantile_bins(values, 3, variable)


def _cmd_discretize(config) -> int:
    inputs = [config.records, config.scores, config.schemes_in]
    if _is_fresh(config.out, inputs, config.force):
        print(f"discretize: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    methods = _parse_bin_overrides(config.bin)
    records = _read_records(config.records)
    persisted = None
    if config.schemes_in:
        persisted = discretize.parse_schemes(_read_text(config.schemes_in))

    scores = None
    if config.scores:
        if not config.model:
            raise SchemaError("--scores requires --model")
        scores = _read_scores(config.scores)

    for record in records:
        for node, field in _CATEGORICAL_SOURCES.items():
            if getattr(record, field) is None:
                raise SchemaError(f"record lacks {field!r} needed for {node}",
                                  record_id=record.id)
        for node, field in _BINNED_SOURCES.items():
            if getattr(record, field) is None:
                raise SchemaError(f"record lacks {field!r} needed for {node}",
                                  record_id=record.id)
        if scores is not None:
            if record.id not in scores or config.model not in scores[record.id]:
                raise SchemaError(f"no {config.model!r} score",
                                  record_id=record.id)

    categories: dict[str, list[str]] = {
        "Age": list(ingest.GRADES), "Gender": list(ingest.GENDERS)}
    columns: dict[str, list[str]] = {
        "Age": [r.grade for r in records],
        "Gender": [r.gender for r in records]}
    schemes = []
    for node, field in _BINNED_SOURCES.items():
        values = [float(getattr(r, field)) for r in records]
        scheme = _fit_or_reuse(node, values, methods[node], persisted)
        schemes.append(scheme)
        categories[node] = list(scheme.labels)
        columns[node] = discretize.apply_bins_array(scheme, values)

    continuous = {}
    if scores is not None:
        rate_of = {"SubsErr": "substitutions", "DelErr": "deletions",
                   "InsErr": "insertions"}
        for node, key in rate_of.items():
            values = [100.0 * scores[r.id][config.model][key]
                      / scores[r.id][config.model]["ref_len"]
                      for r in records]
            scheme = _fit_or_reuse(node, values, methods.get(node, "quantile"),
                                   persisted)
            schemes.append(scheme)
            categories[node] = list(scheme.labels)
            columns[node] = discretize.apply_bins_array(scheme, values)
            continuous[node] = values

    rows = [{var: columns[var][i] for var in categories}
            for i in range(len(records))]
    data = causal_mod.DiscreteDataset.from_rows(categories, rows, continuous)
    _write_text(config.out, ingest.write_report(data.to_document()))
    if config.schemes_out:
        _write_text(config.schemes_out, discretize.write_schemes(schemes))
    return 0


def _cmd_oracle(config) -> int:
    if _is_fresh(config.out, [config.inp], config.force):
        print(f"oracle: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    records = _read_records(config.inp)
    choice = alignment.oracle_select(records)
    models = sorted(records[0].hypotheses) if records else []
    aggregates = {}
    for model in models:
        agg = alignment.score_dataset(records, model)[0]
        aggregates[model] = agg.to_dict()
    if records:
        aggregates["oracle"] = alignment.oracle_aggregate(records).to_dict()
    report = {"choice": choice, "aggregates": aggregates}
    _write_text(config.out, ingest.write_report(report))
    return 0


def _correlation_csv(models, matrix) -> str:
    return ingest.emit_plot_data(
        {"correlation": {"models": models, "matrix": matrix}})["correlation.csv"]


def _cmd_correlate(config) -> int:
    if _is_fresh(config.out, [config.inp], config.force):
        print(f"correlate: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    records = _read_records(config.inp)
    if config.by_grade:
        out = Path(config.out)
        grades = sorted({r.grade for r in records if r.grade is not None},
                        key=ingest.GRADES.index)
        for grade in grades:
            subset = [r for r in records if r.grade == grade]
            models, matrix = alignment.model_correlation(subset)
            path = out.with_name(f"{out.stem}_{grade}{out.suffix}")
            _write_text(str(path), _correlation_csv(models, matrix))
        return 0
    models, matrix = alignment.model_correlation(records)
    _write_text(config.out, _correlation_csv(models, matrix))
    return 0


def _cmd_fit(config) -> int:
    if _is_fresh(config.out, [config.inp], config.force):
        print(f"fit: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    graph = _load_graph(config.graph)
    data = _load_dataset(config.inp)
    cpts = causal_mod.fit_cpts(graph, data, config.alpha)
    doc = {}
    for node, table in cpts.items():
        doc[node] = {
            "parents": list(table.parents),
            "alpha": table.alpha,
            "counts": {"|".join(cfg): [int(c) for c in vec]
                       for cfg, vec in sorted(table.counts.items())},
        }
    _write_text(config.out, ingest.write_report(doc))
    return 0


def _emit(config, payload: dict) -> int:
    text = ingest.write_report(payload)
    if config.out:
        _write_text(config.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_ace(config) -> int:
    graph = _load_graph(config.graph)
    data = _load_dataset(config.inp)
    value = causal_mod.ace(graph, data, config.treatment, config.effect,
                           config.lo, config.hi, on_empty=config.on_empty)
    levels = len(graph.categories[config.treatment]) - 1
    return _emit(config, {
        "treatment": config.treatment,
        "effect": config.effect,
        "lo": config.lo or graph.categories[config.treatment][0],
        "hi": config.hi or graph.categories[config.treatment][-1],
        "ace": value,
        "ace_normalized": value / levels if levels else 0.0,
    })


def _cmd_cmi(config) -> int:
    data = _load_dataset(config.inp)
    if config.z is not None:
        z = [v for v in config.z.split(",") if v]
    elif config.graph is not None:
        graph = _load_graph(config.graph)
        z = [p for p in graph.parents(config.y) if p != config.x]
    else:
        z = []
    value = causal_mod.conditional_mutual_information(
        data, config.x, config.y, z, alpha=config.alpha)
    return _emit(config, {"x": config.x, "y": config.y, "z": z,
                          "alpha": config.alpha, "cmi": value})


def _cmd_report(config) -> int:
    named = []
    for entry in config.inp:
        if "=" in entry:
            name, path = entry.split("=", 1)
        else:
            name, path = Path(entry).stem, entry
        named.append((name, path))
    inputs = [p for _, p in named] + [config.records, config.scores]
    if _is_fresh(config.out, inputs, config.force):
        print(f"report: {config.out} is fresh, skipping", file=sys.stderr)
        return 0
    graph = _load_graph(config.graph)
    report: dict = {"graph": config.graph, "models": {}}
    for name, path in named:
        data = _load_dataset(path)
        edges = causal_mod.edge_report(graph, data, config.alpha,
                                       on_empty=config.on_empty)
        report["models"][name] = {
            "edges": edges,
            "by_effect": causal_mod.group_by_effect(edges),
        }
    if config.records:
        records = _read_records(config.records)
        models = sorted({m for r in records for m in r.hypotheses})
        grade_errors = {}
        for model in models:
            aggs = alignment.score_dataset(
                [r for r in records if r.grade is not None], model,
                key=lambda r: r.grade)
            grade_errors[model] = [a.to_dict() for a in aggs]
        report["grade_errors"] = grade_errors
        if len(records) >= 2:
            corr_models, matrix = alignment.model_correlation(records)
            report["correlation"] = {"models": corr_models, "matrix": matrix}
    _write_text(config.out, ingest.write_report(report))
    if config.plot_dir:
        for name, text in ingest.emit_plot_data(report).items():
            _write_text(os.path.join(config.plot_dir, name), text)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "align": _cmd_align,
    "covariates": _cmd_covariates,
    "discretize": _cmd_discretize,
    "oracle": _cmd_oracle,
    "correlate": _cmd_correlate,
    "fit": _cmd_fit,
    "ace": _cmd_ace,
    "cmi": _cmd_cmi,
    "report": _cmd_report,
}


def run(config: argparse.Namespace) -> int:
    """Execute a parsed configuration; maps data errors to exit 1."""
    try:
        return _COMMANDS[config.command](config)
    except ToolkitError as exc:
        diagnostic = {"error": exc.code, "message": str(exc)}
        if exc.record_id is not None:
            diagnostic["record"] = exc.record_id
        print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "E_IO", "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(parse_args(argv if argv is not None else sys.argv[1:]))


if __name__ == "__main__":
    sys.exit(main())
