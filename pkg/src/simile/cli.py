"""Command-line interface: one executable, one subcommand per pipeline stage.

Every command validates its numeric flags up front, funnels all
randomness through the run's --seed, writes a JSON run manifest next to
its outputs, and exits 0 on success, 1 on usage errors, 2 on data errors,
and 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, analysis, data, embed, metrics, plots, risk, subword
from .errors import DataFormatError, NumericalError
from .metrics import CostKind, SimileScorer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _ranged_float(lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not a number")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise argparse.ArgumentTypeError(f"{value} is below the allowed range")
        if hi is not None and (value >= hi if hi_open else value > hi):
            raise argparse.ArgumentTypeError(f"{value} is above the allowed range")
        return value

    return parse


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 0:
        raise argparse.ArgumentTypeError("value must be >= 0")
    return value


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated integer list")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("list entries must be integers >= 1")
    return values


def _cost_kind(text):
    try:
        return CostKind.from_name(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_manifest(args, outputs):
    def jsonable(value):
        if isinstance(value, CostKind):
            return value.value
        if isinstance(value, list):
            return [jsonable(v) for v in value]
        return value

    manifest = {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "flags": {k: jsonable(v) for k, v in vars(args).items() if k != "func"},
        "outputs": sorted(outputs),
    }
    path = _out_path(args, f"{args.command.replace('-', '_')}_manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_json(payload, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_bpe(args):
    return subword.load_model(args.bpe) if getattr(args, "bpe", None) else None


def _scorer(args, table):
    return SimileScorer(
        table,
        bpe=_load_bpe(args),
        alpha=getattr(args, "alpha", 0.25),
        max_ngram=getattr(args, "max_ngram", 4),
        lp_units=getattr(args, "lp_units", "words"),
    )


def _segmenter(bpe):
    if bpe is None:
        return None
    return lambda tokens: subword.segment(bpe, " ".join(tokens))


def _load_toy_corpus(src_path, ref_path):
    corpus = data.load_parallel(src_path, ref_path)
    pairs = corpus.tokenized()
    for lineno, (x, u) in enumerate(pairs, start=1):
        if len(x) != len(u):
            raise DataFormatError(
                f"toy model requires length-matched sentences, got {len(x)} vs {len(u)} tokens",
                path=ref_path,
                line=lineno,
            )
    return pairs


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def cmd_learn_bpe(args):
    corpus = data.read_lines(args.corpus)
    model = subword.learn_bpe(corpus, args.vocab_size, marker=args.marker)
    out = _out_path(args, "bpe.model")
    subword.save_model(model, out)
    _write_manifest(args, [out])
    print(f"learned {len(model.merges)} merges over {len(corpus)} sentences -> {out}")


def cmd_segment(args):
    model = subword.load_model(args.model, marker=args.marker)
    lines = data.read_lines(args.input)
    out = _out_path(args, "segmented.txt")
    data.write_lines((" ".join(subword.segment(model, line)) for line in lines), out)
    _write_manifest(args, [out])
    print(f"segmented {len(lines)} sentences -> {out}")


def cmd_train_sim(args):
    raw_pairs = data.load_pairs(args.pairs)
    bpe = _load_bpe(args)
    if bpe is not None:
        pairs = [
            embed.ParaphrasePair(
                tuple(subword.segment(bpe, " ".join(p.s))),
                tuple(subword.segment(bpe, " ".join(p.s_prime))),
            )
            for p in raw_pairs
        ]
        vocab = sorted(set(bpe.vocab) | {t for p in pairs for t in p.s + p.s_prime})
    else:
        pairs = raw_pairs
        vocab = sorted({t for p in pairs for t in p.s + p.s_prime})
    table = embed.init_embeddings(vocab, dim=args.dim, seed=args.seed)
    cfg = embed.SimTrainConfig(
        margin=args.margin,
        minibatch_size=args.minibatch_size,
        megabatch_factor=args.megabatch_factor,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        bidirectional=args.bidirectional,
    )
    table, log = embed.train_sim(table, pairs, cfg)
    emb_out = _out_path(args, "sim.emb")
    data.save_embeddings(table, emb_out)
    log_out = _out_path(args, "sim_train.csv")
    with open(log_out, "w", encoding="utf-8") as f:
        f.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(log):
            f.write(f"{epoch},{repr(loss)}\n")
    _write_manifest(args, [emb_out, log_out])
    first = log[0] if log else float("nan")
    last = log[-1] if log else float("nan")
    print(f"trained {len(table.tokens)} x {table.dim} embeddings; mean loss {first:.4f} -> {last:.4f}")


def _fmt(value, scaled):
    return f"{100.0 * value:.4f}" if scaled else f"{value:.6f}"


def cmd_score(args):
    refs = data.read_lines(args.refs)
    hyps = data.read_lines(args.hyps)
    if len(refs) != len(hyps):
        raise DataFormatError(f"{len(refs)} references vs {len(hyps)} hypotheses", path=args.hyps)
    table = data.load_embeddings(args.emb)
    scorer = _scorer(args, table)
    scaled = not args.raw
    rows = []
    for i, (r, h) in enumerate(zip(refs, hyps)):
        rows.append(
            (
                i,
                scorer.sentence_bleu(r, h),
                scorer.sim(r, h),
                scorer.simile(r, h),
                scorer.length_penalty(r, h),
            )
        )
    corpus_bleu = metrics.corpus_bleu([r.split() for r in refs], [h.split() for h in hyps], args.max_ngram)
    corpus_sim = metrics.corpus_sim(table, [scorer.sim_tokens(r) for r in refs], [scorer.sim_tokens(h) for h in hyps])
    mean_simile = math.fsum(row[3] for row in rows) / len(rows)
    mean_lp = math.fsum(row[4] for row in rows) / len(rows)
    out = _out_path(args, "score.tsv")
    with open(out, "w", encoding="utf-8") as f:
        f.write("index\tbleu\tsim\tsimile\tlp\n")
        for i, bleu, sim_v, simile_v, lp in rows:
            f.write(f"{i}\t{_fmt(bleu, scaled)}\t{_fmt(sim_v, scaled)}\t{_fmt(simile_v, scaled)}\t{_fmt(lp, scaled)}\n")
        f.write(
            f"corpus\t{_fmt(corpus_bleu, scaled)}\t{_fmt(corpus_sim, scaled)}"
            f"\t{_fmt(mean_simile, scaled)}\t{_fmt(mean_lp, scaled)}\n"
        )
    _write_manifest(args, [out])
    print(f"corpus BLEU {_fmt(corpus_bleu, scaled)} | corpus SIM {_fmt(corpus_sim, scaled)} -> {out}")


def cmd_filter_pairs(args):
    pairs = data.load_pairs(args.pairs)
    table = data.load_embeddings(args.emb)
    cfg = data.FilterConfig(sim_min=args.sim_min, trigram_max=args.trigram_max)
    kept, stats = data.paranmt_filter(pairs, table, cfg, segment=_segmenter(_load_bpe(args)))
    out = _out_path(args, "filtered_pairs.tsv")
    data.save_pairs(kept, out)
    stats_out = _out_path(args, "filter_stats.json")
    _write_json(
        {
            "kept": stats.kept,
            "rejected_sim": stats.rejected_sim,
            "rejected_overlap": stats.rejected_overlap,
            "rejected_both": stats.rejected_both,
            "total": stats.total,
        },
        stats_out,
    )
    _write_manifest(args, [out, stats_out])
    print(f"kept {stats.kept}/{stats.total} pairs -> {out}")


def _mle_config(args):
    return risk.MleTrainConfig(
        smoothing=args.smoothing,
        learning_rate=args.lr,
        momentum=args.momentum,
        clip_norm=args.clip_norm,
        anneal_factor=args.anneal_factor,
        anneal_floor=args.anneal_floor,
        epochs=args.epochs,
        seed=args.seed,
    )


def cmd_mle_train(args):
    train = _load_toy_corpus(args.train_src, args.train_ref)
    valid = _load_toy_corpus(args.valid_src, args.valid_ref)
    source_vocab = sorted({t for x, _ in train + valid for t in x})
    target_vocab = sorted({t for _, u in train + valid for t in u})
    model = risk.ToyLexModel(
        np.zeros((len(source_vocab), len(target_vocab))),
        {tok: i for i, tok in enumerate(source_vocab)},
        {tok: i for i, tok in enumerate(target_vocab)},
    )
    model, log = risk.train_mle(model, train, valid, _mle_config(args))
    model_out = _out_path(args, "toylex.model")
    data.save_toylex(model, model_out)
    log_out = _out_path(args, "mle_log.csv")
    with open(log_out, "w", encoding="utf-8") as f:
        f.write("epoch,lr,train_loss,val_loss\n")
        for epoch, lr, train_loss, val_loss in log:
            f.write(f"{epoch},{repr(lr)},{repr(train_loss)},{repr(val_loss)}\n")
    _write_manifest(args, [model_out, log_out])
    print(f"MLE loss {log[0][3]:.4f} -> {log[-1][3]:.4f} on validation; model -> {model_out}")


def _risk_config(args, k=None):
    return risk.RiskTrainConfig(
        mle_weight=args.gamma,
        smoothing=args.smoothing,
        k=k if k is not None else args.k,
        learning_rate=args.lr,
        momentum=args.momentum,
        clip_norm=args.clip_norm,
        anneal_factor=args.anneal_factor,
        anneal_floor=args.anneal_floor,
        epochs=args.epochs,
        cost_kind=args.cost,
        alpha=args.alpha,
        max_ngram=args.max_ngram,
        seed=args.seed,
    )


def _final_scores(result, valid, table):
    final = result.log[-1]
    decoded = risk.decode_eval(result.model, valid, table)
    return {
        "expected_bleu_cost": final.expected_bleu_cost,
        "expected_simile_cost": final.expected_simile_cost,
        "val_bleu": decoded["bleu"],
        "val_sim": decoded["sim"],
    }


def cmd_risk_train(args):
    train = _load_toy_corpus(args.train_src, args.train_ref)
    valid = _load_toy_corpus(args.valid_src, args.valid_ref)
    model = data.load_toylex(args.model)
    table = data.load_embeddings(args.emb)
    result = risk.train_risk(model, train, valid, _risk_config(args), table)
    model_out = _out_path(args, "risk_model.model")
    data.save_toylex(result.model, model_out)
    log_out = _out_path(args, "risk_log.csv")
    data.save_risk_log(result.log, log_out)
    checkpoint_out = _out_path(args, "risk_checkpoint.json")
    _write_json(
        {
            "epoch1": result.epoch1_eval,
            "final": _final_scores(result, valid, table),
            "best_epoch": result.best_epoch,
        },
        checkpoint_out,
    )
    outputs = [model_out, log_out, checkpoint_out]
    if args.dump_nbest:
        lists = [risk.nbest(result.model, x, args.k, reference=ref) for x, ref in valid]
        nbest_out = _out_path(args, "valid_nbest.txt")
        data.save_nbest(lists, nbest_out)
        decode_out = _out_path(args, "valid_decode.txt")
        data.write_lines((" ".join(risk.decode(result.model, x)) for x, _ in valid), decode_out)
        outputs.extend([nbest_out, decode_out])
    if not args.no_figures:
        fig_out = _out_path(args, "risk_curves.png")
        plots.plot_risk_curves(result.log, fig_out)
        outputs.append(fig_out)
    _write_manifest(args, outputs)
    first, last = result.log[0], result.log[-1]
    print(
        f"expected simile cost {first.expected_simile_cost:.4f} -> {last.expected_simile_cost:.4f}; "
        f"best epoch {result.best_epoch}; log -> {log_out}"
    )


def cmd_sweep_nbest(args):
    train = _load_toy_corpus(args.train_src, args.train_ref)
    valid = _load_toy_corpus(args.valid_src, args.valid_ref)
    model = data.load_toylex(args.model)
    table = data.load_embeddings(args.emb)
    rows = []
    for k in args.k_values:
        result = risk.train_risk(model, train, valid, _risk_config(args, k=k), table)
        scores = _final_scores(result, valid, table)
        scores["k"] = k
        rows.append(scores)
    out = _out_path(args, "sweep.csv")
    with open(out, "w", encoding="utf-8") as f:
        f.write("k,expected_bleu_cost,expected_simile_cost,val_bleu,val_sim\n")
        for row in rows:
            f.write(
                f"{row['k']},{repr(row['expected_bleu_cost'])},{repr(row['expected_simile_cost'])},"
                f"{repr(row['val_bleu'])},{repr(row['val_sim'])}\n"
            )
    outputs = [out]
    if not args.no_figures:
        fig_out = _out_path(args, "sweep.png")
        plots.plot_nbest_sweep(rows, fig_out)
        outputs.append(fig_out)
    _write_manifest(args, outputs)
    print(f"swept k in {args.k_values} -> {out}")


def _load_nbest_with_refs(args):
    refs = data.read_lines(args.refs)
    groups = data.load_nbest(args.nbest)
    if len(groups) != len(refs):
        raise DataFormatError(
            f"{len(groups)} n-best groups vs {len(refs)} references", path=args.nbest
        )
    lists = [
        risk.NBestList((), tuple(ref.split()), group) for ref, group in zip(refs, groups)
    ]
    return refs, lists


def cmd_analyze_hist(args):
    refs, lists = _load_nbest_with_refs(args)
    table = data.load_embeddings(args.emb)
    scorer = _scorer(args, table)
    histograms = {}
    outputs = []
    for kind in args.costs:
        costs = [
            scorer.cost(kind, ref, " ".join(cand.tokens))
            for ref, nb in zip(refs, lists)
            for cand in nb.candidates
        ]
        hist = analysis.cost_histogram(costs, args.bin_width)
        histograms[kind.value] = hist
        csv_out = _out_path(args, f"hist_{kind.value}.csv")
        with open(csv_out, "w", encoding="utf-8") as f:
            f.write("lower_edge,count\n")
            for edge, count in hist.bins:
                f.write(f"{repr(edge)},{count}\n")
        outputs.append(csv_out)
    json_out = _out_path(args, "hist.json")
    _write_json(
        {
            name: {"bin_width": hist.bin_width, "bins": [[edge, count] for edge, count in hist.bins]}
            for name, hist in histograms.items()
        },
        json_out,
    )
    outputs.append(json_out)
    if not args.no_figures:
        fig_out = _out_path(args, "hist.png")
        plots.plot_cost_histograms(histograms, fig_out)
        outputs.append(fig_out)
    _write_manifest(args, outputs)
    print(f"histogrammed {', '.join(h for h in histograms)} costs -> {json_out}")


def cmd_analyze_pairs(args):
    refs, lists = _load_nbest_with_refs(args)
    table = data.load_embeddings(args.emb)
    scorer = _scorer(args, table)

    def bleu_scorer(ref_tokens, hyp_tokens):
        return metrics.sentence_bleu_smoothed(ref_tokens, hyp_tokens, args.max_ngram)

    def simile_scorer(ref_tokens, hyp_tokens):
        return scorer.simile(" ".join(ref_tokens), " ".join(hyp_tokens))

    payload = {}
    for name, fn in (("bleu", bleu_scorer), ("simile", simile_scorer)):
        stats = analysis.nbest_pair_stats(lists, fn)
        payload[name] = {
            "total_pairs": stats.total_pairs,
            "distinct_fraction": stats.distinct_fraction,
            "mean_abs_diff_x100": stats.mean_abs_diff_x100,
        }
    out = _out_path(args, "pair_stats.json")
    _write_json(payload, out)
    _write_manifest(args, [out])
    for name, row in payload.items():
        print(
            f"{name}: {row['total_pairs']} pairs, distinct {row['distinct_fraction']:.3f}, "
            f"mean |diff| {row['mean_abs_diff_x100']:.2f}"
        )


def _report_payload(report):
    def bucket_row(b):
        return {
            "label": b.label,
            "matches": b.matches,
            "ref_count": b.ref_count,
            "hyp_count": b.hyp_count,
            "precision": b.precision,
            "recall": b.recall,
            "f1": b.f1,
        }

    return {
        "frequency": [bucket_row(b) for b in report.frequency],
        "tags": [bucket_row(b) for b in report.tags],
    }


def cmd_analyze_f1(args):
    refs = [line.split() for line in data.read_lines(args.refs)]
    hyps_a = [line.split() for line in data.read_lines(args.hyps_a)]
    tags = None
    if args.tags:
        tag_sentences = data.load_tags(args.tags)
        if len(tag_sentences) != len(refs):
            raise DataFormatError(
                f"{len(tag_sentences)} tag sentences vs {len(refs)} references", path=args.tags
            )
        for lineno, (sent, ref) in enumerate(zip(tag_sentences, refs), start=1):
            if [tok for tok, _ in sent] != ref:
                raise DataFormatError("tag tokens do not match the reference tokens", path=args.tags, line=lineno)
        tags = data.type_tag_map(tag_sentences)
    report_a = analysis.lexical_f1(refs, hyps_a, refs, tags=tags)
    payload = {"system_a": _report_payload(report_a)}
    deltas = None
    if args.hyps_b:
        hyps_b = [line.split() for line in data.read_lines(args.hyps_b)]
        report_b = analysis.lexical_f1(refs, hyps_b, refs, tags=tags)
        deltas = analysis.f1_delta(report_a, report_b)
        payload["system_b"] = _report_payload(report_b)
        payload["delta_x100"] = [[label, value] for label, value in deltas]
    out = _out_path(args, "f1.json")
    _write_json(payload, out)
    table_out = _out_path(args, "f1.txt")
    with open(table_out, "w", encoding="utf-8") as f:
        f.write(f"{'bucket':>10} {'P':>8} {'R':>8} {'F1':>8}" + ("  delta\n" if deltas else "\n"))
        delta_map = dict(deltas) if deltas else {}
        for bucket in report_a.frequency + report_a.tags:
            line = f"{bucket.label:>10} {bucket.precision:8.4f} {bucket.recall:8.4f} {bucket.f1:8.4f}"
            if deltas:
                line += f" {delta_map[bucket.label]:+6.2f}"
            f.write(line + "\n")
    outputs = [out, table_out]
    if deltas and not args.no_figures:
        fig_out = _out_path(args, "f1_delta.png")
        plots.plot_f1_delta(deltas, fig_out)
        outputs.append(fig_out)
    _write_manifest(args, outputs)
    print(f"lexical F1 over {len(report_a.frequency)} frequency buckets -> {out}")


def cmd_compare_metrics(args):
    refs = [line.split() for line in data.read_lines(args.refs)]
    hyps_a = [line.split() for line in data.read_lines(args.hyps_a)]
    hyps_b = [line.split() for line in data.read_lines(args.hyps_b)]
    table = data.load_embeddings(args.emb)
    rows = analysis.metric_compare_sort(
        refs, hyps_a, hyps_b, table, segment=_segmenter(_load_bpe(args)), max_ngram=args.max_ngram
    )
    out = _out_path(args, "compare.tsv")
    with open(out, "w", encoding="utf-8") as f:
        f.write("index\tdelta_bleu\tdelta_sim\tstatistic\n")
        for index, d_bleu, d_sim, stat in rows:
            f.write(f"{index}\t{d_bleu:.4f}\t{d_sim:.4f}\t{stat:.4f}\n")
    outputs = [out]
    if not args.no_figures:
        fig_out = _out_path(args, "compare.png")
        plots.plot_metric_compare(rows, fig_out)
        outputs.append(fig_out)
    _write_manifest(args, outputs)
    show = min(args.show, len(rows))
    print("largest BLEU gap / smallest SIM gap:")
    for index, d_bleu, d_sim, stat in rows[:show]:
        print(f"  #{index}: dBLEU {d_bleu:+.2f} dSIM {d_sim:+.2f} stat {stat:+.2f}")
    print("largest SIM gap / smallest BLEU gap:")
    for index, d_bleu, d_sim, stat in rows[-show:]:
        print(f"  #{index}: dBLEU {d_bleu:+.2f} dSIM {d_sim:+.2f} stat {stat:+.2f}")


def cmd_correlate(args):
    judgments = data.load_judgments(args.judgments)
    table = data.load_embeddings(args.emb)
    scorer = _scorer(args, table)

    def system_score(ref, hyp):
        if args.metric == "sim":
            return scorer.sim(ref, hyp)
        if args.metric == "simile":
            return scorer.simile(ref, hyp)
        if args.metric == "simile-sym":
            return 0.5 * (scorer.simile(ref, hyp) + scorer.simile(hyp, ref))
        if args.metric == "bleu":
            return scorer.sentence_bleu(ref, hyp)
        return metrics.symmetric(
            lambda a, b: metrics.sentence_bleu_smoothed(a, b, args.max_ngram), ref.split(), hyp.split()
        )

    pairs = [(system_score(ref, hyp), human) for ref, hyp, human in judgments]
    payload = {
        "metric": args.metric,
        "n": len(pairs),
        "spearman": analysis.spearman(pairs),
        "pearson": analysis.pearson(pairs),
    }
    out = _out_path(args, "correlate.json")
    _write_json(payload, out)
    _write_manifest(args, [out])
    print(f"{args.metric}: spearman {payload['spearman']:.4f}, pearson {payload['pearson']:.4f} (n={len(pairs)})")


def cmd_bootstrap(args):
    refs = [line.split() for line in data.read_lines(args.refs)]
    hyps_a = [line.split() for line in data.read_lines(args.hyps_a)]
    hyps_b = [line.split() for line in data.read_lines(args.hyps_b)]
    if args.metric == "bleu":
        metric = lambda r, h: metrics.corpus_bleu(r, h, args.max_ngram)
    else:
        if not args.emb:
            raise DataFormatError("--emb is required for the sim metric")
        table = data.load_embeddings(args.emb)
        seg = _segmenter(_load_bpe(args))
        if seg is not None:
            refs = [seg(r) for r in refs]
            hyps_a = [seg(h) for h in hyps_a]
            hyps_b = [seg(h) for h in hyps_b]
        metric = lambda r, h: metrics.corpus_sim(table, r, h)
    result = analysis.paired_bootstrap(refs, hyps_a, hyps_b, metric, samples=args.samples, seed=args.seed)
    payload = {
        "samples": result.samples,
        "score_a": result.score_a,
        "score_b": result.score_b,
        "wins_a": result.wins_a,
        "wins_b": result.wins_b,
        "ties": result.ties,
        "p_value": result.p_value,
        "significant_at_0.05": result.p_value < 0.05,
    }
    out = _out_path(args, "bootstrap.json")
    _write_json(payload, out)
    _write_manifest(args, [out])
    print(
        f"A {result.score_a:.4f} vs B {result.score_b:.4f}; wins A {result.wins_a:.3f} / B {result.wins_b:.3f}; "
        f"p = {result.p_value:.4f}"
    )


# ----------------------------------------------------------------------
# parser construction
# ----------------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_nonneg_int, default=0, help="seed for all randomness in the run")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    parser = _Parser(prog="simile", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("learn-bpe", parents=[common], help="learn a subword merge table from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=_positive_int, default=30000)
    p.add_argument("--marker", default=subword.DEFAULT_MARKER)
    p.set_defaults(func=cmd_learn_bpe)

    p = sub.add_parser("segment", parents=[common], help="apply a learned merge table to text")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--marker", default=subword.DEFAULT_MARKER)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train-sim", parents=[common], help="train the similarity embeddings on paraphrase pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--bpe")
    p.add_argument("--dim", type=_positive_int, default=300)
    p.add_argument("--margin", type=_ranged_float(0.0, 2.0, lo_open=True, hi_open=True), default=0.4)
    p.add_argument("--minibatch-size", type=_positive_int, default=64)
    p.add_argument("--megabatch-factor", type=_positive_int, default=4)
    p.add_argument("--lr", type=_ranged_float(0.0), default=0.05)
    p.add_argument("--epochs", type=_nonneg_int, default=10)
    p.add_argument("--bidirectional", action="store_true")
    p.set_defaults(func=cmd_train_sim)

    p = sub.add_parser("score", parents=[common], help="score hypotheses against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--alpha", type=_ranged_float(0.0), default=0.25)
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.add_argument("--lp-units", choices=("words", "subwords"), default="words")
    p.add_argument("--raw", action="store_true", help="report raw values instead of x100")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("filter-pairs", parents=[common], help="filter paraphrase pairs by similarity and overlap")
    p.add_argument("--pairs", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--sim-min", type=_ranged_float(-1.0, 1.0), default=0.5)
    p.add_argument("--trigram-max", type=_ranged_float(0.0, 1.0), default=0.2)
    p.set_defaults(func=cmd_filter_pairs)

    def add_toy_corpus_flags(p):
        p.add_argument("--train-src", required=True)
        p.add_argument("--train-ref", required=True)
        p.add_argument("--valid-src", required=True)
        p.add_argument("--valid-ref", required=True)

    def add_optimizer_flags(p, default_epochs):
        p.add_argument("--lr", type=_ranged_float(0.0), default=0.25)
        p.add_argument("--momentum", type=_ranged_float(0.0), default=0.99)
        p.add_argument("--clip-norm", type=_ranged_float(0.0, lo_open=True), default=0.1)
        p.add_argument("--anneal-factor", type=_ranged_float(1.0), default=10.0)
        p.add_argument("--anneal-floor", type=_ranged_float(0.0, lo_open=True), default=1e-4)
        p.add_argument("--smoothing", type=_ranged_float(0.0, 1.0), default=0.1)
        p.add_argument("--epochs", type=_nonneg_int, default=default_epochs)

    p = sub.add_parser("mle-train", parents=[common], help="label-smoothed MLE phase for the toy model")
    add_toy_corpus_flags(p)
    add_optimizer_flags(p, default_epochs=200)
    p.set_defaults(func=cmd_mle_train)

    def add_risk_flags(p):
        add_toy_corpus_flags(p)
        p.add_argument("--model", required=True, help="toy model from mle-train")
        p.add_argument("--emb", required=True)
        p.add_argument("--cost", type=_cost_kind, default=CostKind.SIMILE)
        p.add_argument("--gamma", type=_ranged_float(0.0, 1.0), default=0.3, help="weight on the MLE term")
        add_optimizer_flags(p, default_epochs=10)
        p.add_argument("--alpha", type=_ranged_float(0.0), default=0.25)
        p.add_argument("--max-ngram", type=_positive_int, default=4)

    p = sub.add_parser("risk-train", parents=[common], help="minimum-risk fine-tuning")
    add_risk_flags(p)
    p.add_argument("--k", type=_positive_int, default=8)
    p.add_argument("--dump-nbest", action="store_true",
                   help="also write the selected model's validation n-best lists")
    p.set_defaults(func=cmd_risk_train)

    p = sub.add_parser("sweep-nbest", parents=[common], help="risk-train once per n-best size")
    add_risk_flags(p)
    p.add_argument("--k-values", type=_int_list, default=[2, 4, 8, 16])
    p.set_defaults(func=cmd_sweep_nbest)

    p = sub.add_parser("analyze-hist", parents=[common], help="histogram candidate costs from an n-best file")
    p.add_argument("--refs", required=True)
    p.add_argument("--nbest", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--costs", type=lambda s: [_cost_kind(v) for v in s.split(",") if v], default=[CostKind.BLEU, CostKind.SIMILE])
    p.add_argument("--bin-width", type=_ranged_float(0.0, 1.0, lo_open=True), default=0.02)
    p.add_argument("--alpha", type=_ranged_float(0.0), default=0.25)
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.add_argument("--lp-units", choices=("words", "subwords"), default="words")
    p.set_defaults(func=cmd_analyze_hist)

    p = sub.add_parser("analyze-pairs", parents=[common], help="pairwise score-diversity inside n-best lists")
    p.add_argument("--refs", required=True)
    p.add_argument("--nbest", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--alpha", type=_ranged_float(0.0), default=0.25)
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.add_argument("--lp-units", choices=("words", "subwords"), default="words")
    p.set_defaults(func=cmd_analyze_pairs)

    p = sub.add_parser("analyze-f1", parents=[common], help="frequency/tag-bucketed lexical F1")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps-a", required=True)
    p.add_argument("--hyps-b")
    p.add_argument("--tags")
    p.set_defaults(func=cmd_analyze_f1)

    p = sub.add_parser("compare-metrics", parents=[common], help="sort sentences by |BLEU gap| - |SIM gap|")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps-a", required=True)
    p.add_argument("--hyps-b", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.add_argument("--show", type=_positive_int, default=5)
    p.set_defaults(func=cmd_compare_metrics)

    p = sub.add_parser("correlate", parents=[common], help="correlate a metric with human judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--bpe")
    p.add_argument("--metric", choices=("sim", "simile", "simile-sym", "bleu", "bleu-sym"), default="sim")
    p.add_argument("--alpha", type=_ranged_float(0.0), default=0.25)
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.add_argument("--lp-units", choices=("words", "subwords"), default="words")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("bootstrap", parents=[common], help="paired bootstrap significance test")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps-a", required=True)
    p.add_argument("--hyps-b", required=True)
    p.add_argument("--metric", choices=("bleu", "sim"), default="bleu")
    p.add_argument("--emb")
    p.add_argument("--bpe")
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--max-ngram", type=_positive_int, default=4)
    p.set_defaults(func=cmd_bootstrap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except DataFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"data error: missing file {e.filename}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
