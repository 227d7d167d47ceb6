"""Command-line entry point.

Every command is a pure function of its inputs, config and seed: reruns
produce byte-identical files regardless of ``--workers``. Failures print a
single JSON object ``{"error": code, "message": ...}`` to stderr and exit
non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Iterator

import numpy as np

from dsir import classifier, ngram_model
from dsir.config import METHODS, PipelineConfig, build_config, load_config
from dsir.corpus_io import (ChunkConfig, Example, chunk_document, concat_pairs, dump_line,
                            iter_json_lines, read_jsonl, write_jsonl)
from dsir.errors import (ConfigError, DsirError, MalformedInputError, SelectionSizeError,
                         UnknownMethodError, VocabMismatchError)
from dsir.features import FeatureConfig, featurize, fnv1a64_many
from dsir.metrics import dataset_distribution, kl_divergence, source_histogram
from dsir.parallel import batched, ordered_map
from dsir.selection import (gumbel_from_hashes, noisy_threshold_select, quota_select,
                            random_select, top_k_order)
from dsir.textstats import FilterReport, verdict

log = logging.getLogger("dsir")

SELECT_BLOCK = 65_536


# ---------------------------------------------------------------- workers

_WORKER: dict = {}


def _init_filter(quality) -> None:
    _WORKER["quality"] = quality


def _filter_batch(batch: list[Example]) -> list[tuple[Example, str | None]]:
    cfg = _WORKER["quality"]
    return [(ex, verdict(ex, cfg)) for ex in batch]


def _init_scorer(kind: str, paths: tuple[str, ...], feature: FeatureConfig) -> None:
    _WORKER["kind"] = kind
    _WORKER["feature"] = feature
    if kind == "ngram":
        target, _ = ngram_model.load_model(paths[0])
        raw, _ = ngram_model.load_model(paths[1])
        _WORKER["scorer"] = ngram_model.LogWeightScorer(target, raw)
    else:
        _WORKER["model"] = classifier.load_model(paths[0])


def _score_batch(batch: list[Example]) -> list[dict]:
    cfg = _WORKER["feature"]
    out = []
    if _WORKER["kind"] == "ngram":
        scorer = _WORKER["scorer"]
        for ex in batch:
            out.append({"id": ex.id, "log_weight": scorer(featurize(ex.text, cfg)), "source": ex.source})
        return out
    model = _WORKER["model"]
    for ex in batch:
        z = featurize(ex.text, cfg)
        raw_score = classifier.decision_function(model, z)
        prob = float(classifier.sigmoid(raw_score))
        rho = classifier.calibrate(model.platt, raw_score) if model.platt else prob
        out.append({"id": ex.id, "log_weight": classifier.clf_log_weight(rho), "prob": prob,
                    "source": ex.source})
    return out


# ---------------------------------------------------------------- helpers

def _write_lines(path: str | Path, rows: Iterator[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dump_line(row))
            n += 1
    return n


def _write_json(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(value, name: str):
    if value is None:
        raise ConfigError(f"{name} is required (flag or config file)")
    return value


def iter_scores(path: str | Path) -> Iterator[dict]:
    for lineno, obj in iter_json_lines(path):
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
            raise MalformedInputError(f"{path} line {lineno}: score record needs a string id")
        yield obj


def _check_vocab(cfg: PipelineConfig, v: int, what: str, explicit: bool) -> FeatureConfig:
    if explicit and cfg.feature.num_buckets != v:
        raise VocabMismatchError(
            f"{what} has V={v} but the configuration asks for V={cfg.feature.num_buckets}")
    return FeatureConfig(num_buckets=v, include_bigrams=cfg.feature.include_bigrams)


# ---------------------------------------------------------------- commands

def cmd_chunk(args, cfg: PipelineConfig) -> dict:
    ccfg = ChunkConfig(chunk_size=cfg.chunk_size, drop_last_short=args.drop_last_short)

    def chunks():
        for doc in read_jsonl(args.input):
            yield from chunk_document(doc.text, doc.source, ccfg, id_prefix=doc.id)

    return {"examples": write_jsonl(args.output, chunks())}


def cmd_concat(args, cfg: PipelineConfig) -> dict:
    return {"examples": write_jsonl(args.output, concat_pairs(read_jsonl(args.input)))}


def cmd_filter(args, cfg: PipelineConfig) -> dict:
    report = FilterReport()

    def kept():
        for ex, rule in ordered_map(_filter_batch, read_jsonl(args.input), cfg.workers,
                                    initializer=_init_filter, initargs=(cfg.quality,)):
            report.record(rule)
            if rule is None:
                yield ex

    write_jsonl(args.output, kept())
    if args.report:
        _write_json(args.report, report.to_dict())
    return report.to_dict()


def cmd_fit(args, cfg: PipelineConfig) -> dict:
    acc = ngram_model.CountAccumulator(cfg.feature.num_buckets)
    n = 0
    for ex in read_jsonl(args.input):
        acc.add(featurize(ex.text, cfg.feature))
        n += 1
    dist = ngram_model.smooth(acc.distribution(), cfg.alpha)
    ngram_model.save_model(args.model_out, dist, role=args.role, examples=n,
                           include_bigrams=cfg.feature.include_bigrams)
    return {"role": args.role, "examples": n, "ngrams": dist.fitted_from, "V": dist.num_buckets}


def cmd_score(args, cfg: PipelineConfig) -> dict:
    explicit_v = args.explicit_num_buckets
    if args.clf_model:
        model = classifier.load_model(args.clf_model)
        feature = _check_vocab(cfg, model.num_buckets, "classifier model", explicit_v)
        init = ("clf", (args.clf_model,), feature)
    else:
        if not (args.target_model and args.raw_model):
            raise ConfigError("score needs --target-model and --raw-model, or --clf-model")
        target, th = ngram_model.load_model(args.target_model)
        raw, rh = ngram_model.load_model(args.raw_model)
        if target.num_buckets != raw.num_buckets:
            raise VocabMismatchError(
                f"target model has V={target.num_buckets}, raw model has V={raw.num_buckets}")
        feature = _check_vocab(cfg, target.num_buckets, "target model", explicit_v)
        if "include_bigrams" in th:
            feature = FeatureConfig(feature.num_buckets, bool(th["include_bigrams"]))
        init = ("ngram", (args.target_model, args.raw_model), feature)
    rows = ordered_map(_score_batch, read_jsonl(args.input), cfg.workers,
                       initializer=_init_scorer, initargs=init)
    return {"scored": _write_lines(args.scores_out, rows)}


def _stream_gumbel_topk(records: Iterator[dict], k: int, seed: int) -> tuple[list[dict], int]:
    """Exact Gumbel top-k over a score stream, keeping only k candidates plus one block."""
    keep_ids: list[str] = []
    keep_final = np.empty(0)
    keep_rows: list[dict] = []
    n = 0
    for block in batched(records, SELECT_BLOCK):
        n += len(block)
        ids = [r["id"] for r in block]
        lw = np.array([r["log_weight"] for r in block], dtype=np.float64)
        if not np.all(np.isfinite(lw)):
            raise MalformedInputError("log weights must be finite numbers")
        g = gumbel_from_hashes(seed, fnv1a64_many(ids))
        final = lw + g
        for r, gi, fi in zip(block, g.tolist(), final.tolist()):
            r["_g"], r["_final"] = gi, fi
        all_ids = keep_ids + ids
        all_final = np.concatenate([keep_final, final])
        all_rows = keep_rows + block
        idx = top_k_order(all_final, all_ids, min(k, len(all_ids)))
        keep_ids = [all_ids[i] for i in idx]
        keep_final = all_final[idx]
        keep_rows = [all_rows[i] for i in idx]
    if k > n:
        raise SelectionSizeError(f"requested k={k} but only {n} scored examples")
    return keep_rows, n


def _selection_row(r: dict, final) -> dict:
    return {"id": r["id"], "final_score": final, "log_weight": r.get("log_weight"),
            "source": r.get("source")}


def cmd_select(args, cfg: PipelineConfig) -> dict:
    method = cfg.method
    k = _require(cfg.k, "--k")
    seed = _require(cfg.seed, "--seed")
    if method in ("dsir", "clf-gumbel") and not cfg.quotas:
        rows, n = _stream_gumbel_topk(iter_scores(args.scores), k, seed)
        out = [_selection_row(r, r["_final"]) for r in rows]
    else:
        records = {}
        for r in iter_scores(args.scores):
            records[r["id"]] = r
        n = len(records)
        if k > n:
            raise SelectionSizeError(f"requested k={k} but only {n} scored examples")
        if cfg.quotas:
            if method not in ("dsir", "clf-gumbel", "random"):
                raise ConfigError(f"quotas are supported for gumbel and random methods, not {method}")
            source_of = {i: r.get("source") for i, r in records.items()}
            strategy = "random" if method == "random" else "gumbel"
            pairs = [(i, r.get("log_weight", 0.0)) for i, r in records.items()]
            chosen = quota_select(pairs, source_of, cfg.quotas, k, seed, strategy)
        elif method == "random":
            chosen = random_select(records, k, seed)
        elif method == "clf-topk":
            chosen = [i for i in _topk_by(records, "prob", k)]
        elif method == "clf-noisy":
            probs = [(i, _field(r, "prob")) for i, r in records.items()]
            chosen = noisy_threshold_select(probs, k, cfg.pareto_shape, seed)
        else:
            raise UnknownMethodError(f"unknown method {method!r}")
        if method in ("dsir", "clf-gumbel"):
            # quota groups are concatenated; present the union in global score order
            g = gumbel_from_hashes(seed, fnv1a64_many(chosen))
            final = np.array([records[i]["log_weight"] for i in chosen]) + g
            order = top_k_order(final, chosen, len(chosen))
            out = [_selection_row(records[chosen[j]], float(final[j])) for j in order]
        elif method == "clf-topk":
            out = [_selection_row(records[i], records[i]["prob"]) for i in chosen]
        else:
            out = [_selection_row(records[i], None) for i in chosen]
    _write_lines(args.output, iter(out))
    if args.id_list:
        with open(args.id_list, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(r["id"] + "\n" for r in out)
    return {"method": method, "k": k, "candidates": n}


def _field(r: dict, name: str) -> float:
    if name not in r:
        raise MalformedInputError(f"score record {r['id']!r} lacks {name!r}; rescore with --clf-model")
    return float(r[name])


def _topk_by(records: dict, name: str, k: int) -> list[str]:
    ids = list(records)
    vals = np.array([_field(records[i], name) for i in ids])
    return [ids[i] for i in top_k_order(vals, ids, k)]


def cmd_train_clf(args, cfg: PipelineConfig) -> dict:
    fc = cfg.feature

    def feats(path):
        out = []
        for ex in read_jsonl(args.__dict__[path]):
            z = featurize(ex.text, fc)
            if z.total:
                out.append(z)
            if len(out) >= cfg.max_examples:
                break
        return out

    model = classifier.train(feats("target"), feats("raw"), cfg.l2_grid, seed=_require(cfg.seed, "--seed"))
    classifier.save_model(args.model_out, model)
    return {"l2": model.l2, "heldout_accuracy": model.heldout_accuracy,
            "platt": None if model.platt is None else {"A": model.platt.A, "B": model.platt.B}}


def _load_selected(selected: str, raw: str) -> tuple[list[Example] | Iterator[Example], dict[str, str]]:
    """Selected examples plus an id->source map.

    Rows carrying ``text`` are examples already; otherwise they are selection
    records and the texts are looked up in the raw file.
    """
    rows = [obj for _, obj in iter_json_lines(selected)]
    if not rows:
        raise MalformedInputError(f"{selected} is empty")
    if all("text" in r for r in rows):
        exs = [Example(r["id"], r["text"], r["source"], r.get("meta")) for r in rows]
        return exs, {e.id: e.source for e in exs}
    wanted = {r["id"]: r.get("source") for r in rows}
    found = {ex.id: ex for ex in read_jsonl(raw) if ex.id in wanted}
    missing = [i for i in wanted if i not in found]
    if missing:
        raise MalformedInputError(f"{len(missing)} selected ids not found in raw file, e.g. {missing[0]!r}")
    exs = [found[r["id"]] for r in rows]
    return exs, {e.id: e.source for e in exs}


def cmd_report(args, cfg: PipelineConfig) -> dict:
    from dsir.plotting import source_histogram_figure

    fc, m = cfg.feature, cfg.max_examples
    target = dataset_distribution(read_jsonl(args.target), m, fc, cfg.alpha)
    raw = dataset_distribution(read_jsonl(args.raw), m, fc, cfg.alpha)
    selected_examples, source_of = _load_selected(args.selected, args.raw)
    selected = dataset_distribution(iter(selected_examples), m, fc, cfg.alpha)
    kl_raw = kl_divergence(target, raw)
    kl_sel = kl_divergence(target, selected)
    hist = source_histogram([e.id for e in selected_examples], source_of)
    report = {"kl_target_raw": kl_raw, "kl_target_selected": kl_sel,
              "kl_reduction": kl_raw - kl_sel, "histogram": hist.to_dict()}
    _write_json(args.report_out, report)
    if not args.no_figure:
        raw_counts: dict[str, int] = {}
        for ex in read_jsonl(args.raw):
            raw_counts[ex.source] = raw_counts.get(ex.source, 0) + 1
        total = sum(raw_counts.values())
        figure = Path(args.figure) if args.figure else Path(args.report_out).with_suffix(".png")
        source_histogram_figure({"raw": {s: c / total for s, c in raw_counts.items()},
                                 "selected": hist.fractions}, figure)
        report["figure"] = str(figure)
    return report


def cmd_materialize(args, cfg: PipelineConfig) -> dict:
    exs, _ = _load_selected(args.selection, args.raw)
    return {"examples": write_jsonl(args.output, exs)}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsir", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON config file; flags override it")
        return sp

    def feature_flags(sp):
        sp.add_argument("--num-buckets", type=int)
        sp.add_argument("--no-bigrams", dest="include_bigrams", action="store_const", const=False)

    sp = add("chunk", cmd_chunk, "split documents into fixed-length word chunks")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--chunk-size", type=int)
    sp.add_argument("--drop-last-short", action="store_true")

    sp = add("concat", cmd_concat, "join consecutive examples in pairs")
    sp.add_argument("input")
    sp.add_argument("output")

    sp = add("filter", cmd_filter, "apply the quality filter")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--report")
    sp.add_argument("--workers", type=int)

    sp = add("fit", cmd_fit, "fit a smoothed hashed n-gram model")
    sp.add_argument("input")
    sp.add_argument("model_out")
    role = sp.add_mutually_exclusive_group(required=True)
    role.add_argument("--target", dest="role", action="store_const", const="target")
    role.add_argument("--raw", dest="role", action="store_const", const="raw")
    sp.add_argument("--alpha", type=float)
    feature_flags(sp)

    sp = add("score", cmd_score, "compute log importance weights")
    sp.add_argument("input")
    sp.add_argument("scores_out")
    sp.add_argument("--target-model")
    sp.add_argument("--raw-model")
    sp.add_argument("--clf-model")
    sp.add_argument("--workers", type=int)
    feature_flags(sp)

    sp = add("select", cmd_select, "select k examples from a scores file")
    sp.add_argument("scores")
    sp.add_argument("output")
    sp.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    sp.add_argument("--k", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--quotas", help='"A=0.96,B=0.04" or a JSON object')
    sp.add_argument("--pareto-shape", type=float)
    sp.add_argument("--id-list", help="also write selected ids, one per line")

    sp = add("train-clf", cmd_train_clf, "train the logistic-regression importance estimator")
    sp.add_argument("target")
    sp.add_argument("raw")
    sp.add_argument("model_out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-examples", type=int)
    sp.add_argument("--l2-grid", type=lambda s: [float(x) for x in s.split(",")])
    feature_flags(sp)

    sp = add("report", cmd_report, "KL reduction and source histogram of a selection")
    sp.add_argument("target")
    sp.add_argument("raw")
    sp.add_argument("selected", help="selection JSONL or selected examples JSONL")
    sp.add_argument("report_out")
    sp.add_argument("--figure", help="histogram image path (default: report path with .png)")
    sp.add_argument("--no-figure", action="store_true")
    sp.add_argument("--max-examples", type=int)
    sp.add_argument("--alpha", type=float)
    feature_flags(sp)

    sp = add("materialize", cmd_materialize, "write the selected examples in selection order")
    sp.add_argument("selection")
    sp.add_argument("raw")
    sp.add_argument("output")
    return p


_OVERRIDES = ("num_buckets", "include_bigrams", "alpha", "method", "k", "seed", "pareto_shape",
              "quotas", "workers", "chunk_size", "max_examples", "l2_grid")


def run(argv: list[str] | None = None) -> dict:
    """Parse ``argv`` and run the command; raises on failure."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    file_values = load_config(args.config)
    args.explicit_num_buckets = (getattr(args, "num_buckets", None) is not None
                                 or "num_buckets" in file_values.get("feature", {}))
    cfg = build_config(file_values, overrides)
    return args.func(args, cfg)


def main(argv: list[str] | None = None) -> int:
    try:
        summary = run(argv)
    except DsirError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": "file_not_found", "message": str(exc)}), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(json.dumps({"error": "invalid_value", "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
