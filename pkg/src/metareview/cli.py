"""Command-line entry point: ``metareview <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import Vocab, build_vocab
from .checkpoint import load_checkpoint, save_checkpoint
from .conversation import load_jsonl, save_jsonl
from .corpus import corpus_novelty, corpus_stats, detect_conflict, split_dataset
from .errors import MetaReviewError, NonFiniteLoss
from .evaluation import AccClassifier, evaluate_run, generate_texts, train_acc_classifier, write_report
from .relations import RelationKind, build_relation

log = logging.getLogger("metareview")

TOY_DUMP = "toy_openreview.json"
SMOKE_CONFIG = "smoke_config.json"
LOG_FIELDS = ["step", "L_g", "L_c", "L_r", "L_o", "L_a", "total"]


def bundled(name: str) -> Path:
    return Path(str(resources.files("metareview") / "data" / name))


def _emit(rows: list[dict], fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(rows if len(rows) != 1 else rows[0], indent=2) + "\n")
        return
    writer = csv.DictWriter(out, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)


def cmd_ingest(args) -> int:
    from .openreview import convert_openreview_dump

    raw = json.loads(Path(args.dump).read_text(encoding="utf-8"))
    result = convert_openreview_dump(raw)
    for w in result.warnings:
        log.warning(w)
    if result.skipped_notes:
        log.info("skipped notes: %s", dict(result.skipped_notes))
    save_jsonl(result.samples, args.out)
    print(f"wrote {len(result.samples)} samples to {args.out}")
    return 0 if result.samples else 1


def cmd_stats(args) -> int:
    corpus = load_jsonl(args.data)
    row = corpus_stats(corpus).to_dict()
    if args.novelty:
        row.update({f"novel_{n}gram_pct": v for n, v in corpus_novelty(corpus).items()})
    _emit([row], args.report, sys.stdout)
    return 0


def cmd_conflicts(args) -> int:
    rows = []
    for s in load_jsonl(args.data):
        lab = detect_conflict(s)
        rows.append({"paper_id": s.paper_id, "label": "CF" if lab.is_cf else "Non-CF",
                     "max_pair_diff": lab.max_pair_diff, "n_official_reviews": lab.n_official_reviews})
    _emit(rows, args.report, sys.stdout)
    return 0


def cmd_relations(args) -> int:
    samples = load_jsonl(args.sample)
    sample = samples[args.index]
    kind = RelationKind.from_label(args.kind)
    print("# " + " ".join(d.doc_id for d in sample.documents))
    print(build_relation(sample, kind).to_grid())
    return 0


def cmd_split(args) -> int:
    ratios = tuple(float(x) for x in args.ratios.split(","))
    out = Path(args.out_dir)
    parts = split_dataset(load_jsonl(args.data), ratios, args.seed)
    for name, part in zip(("train", "val", "test"), parts):
        save_jsonl(part, out / f"{name}.jsonl")
        print(f"{name}: {len(part)}")
    return 0


def _train_config(path):
    from .training import TrainConfig

    return TrainConfig.from_file(path) if path else TrainConfig()


def cmd_train(args) -> int:
    from .training import Trainer, build_model, prepare

    config = _train_config(args.config)
    if args.max_steps is not None:
        config = type(config).from_dict({**config.to_dict(), "max_steps": args.max_steps})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_jsonl(args.data)
    vocab = build_vocab(corpus, config.vocab_size)
    vocab.save(out / "vocab.txt")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")
    examples = [prepare(s, vocab, config.max_in, config.max_out) for s in corpus]
    model = build_model(config, len(vocab))
    trainer = Trainer(model, config)
    order_rng = np.random.default_rng([config.seed, 2])
    order: list[int] = []
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for step in range(1, config.max_steps + 1):
            batch = []
            while len(batch) < min(config.batch_size, len(examples)):
                if not order:
                    order = list(order_rng.permutation(len(examples)))
                batch.append(examples[order.pop()])
            try:
                rec = trainer.train_step(batch)
            except NonFiniteLoss as exc:
                dump = out / f"nonfinite_step{step}.json"
                dump.write_text(json.dumps(exc.diagnostics, indent=2, default=str), encoding="utf-8")
                save_checkpoint(out / "checkpoint_last_good.npz", model, step - 1, trainer.optimizer, config, vocab)
                log.error("non-finite loss at step %d; diagnostics in %s", step, dump)
                return 2
            writer.writerow(rec.as_row(step))
            if step % args.log_every == 0 or step == config.max_steps:
                log.info("step %d total %.4f L_g %.4f lr %.2e", step, rec.total, rec.L_g, rec.lr)
    save_checkpoint(out / "checkpoint.npz", model, config.max_steps, trainer.optimizer, config, vocab,
                    {"final_total": rec.total, "final_L_g": rec.L_g})
    # the acceptance classifier only ever sees gold meta-reviews of the training data
    clf = train_acc_classifier([s.meta_review for s in corpus], [s.acceptance for s in corpus], seed=config.seed)
    clf.save(out / "acc_classifier.json")
    print(f"saved checkpoint, vocab and classifier to {out}")
    return 0


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if args.vocab:
        ckpt.vocab = Vocab.load(args.vocab)
    samples = load_jsonl(args.data)
    texts = generate_texts(ckpt, samples, args.beam_size, args.length_penalty)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        for s, t in zip(samples, texts):
            fh.write(json.dumps({"paper_id": s.paper_id, "generation": t}) + "\n")
    print(f"wrote {len(texts)} generations to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    samples = load_jsonl(args.data)
    clf_path = Path(args.classifier) if args.classifier else Path(args.checkpoint).with_name("acc_classifier.json")
    if clf_path.exists():
        clf = AccClassifier.load(clf_path)
    else:
        if not args.train_data:
            log.error("no classifier at %s; pass --classifier or --train-data", clf_path)
            return 1
        train = load_jsonl(args.train_data)
        clf = train_acc_classifier([s.meta_review for s in train], [s.acceptance for s in train])
    generate_fn = None
    if args.generations:
        by_id = {}
        with open(args.generations, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    by_id[rec["paper_id"]] = rec["generation"]
        generate_fn = lambda ss: [by_id[s.paper_id] for s in ss]  # noqa: E731
    reports = evaluate_run(args.checkpoint, samples, clf, args.split_conflicts, generate_fn)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name(f"eval_report.{args.report}")
    written = write_report(reports, out, args.report)
    clf.save(out.with_name(out.stem + "_classifier.json"))
    for r in reports.values():
        row = r.aggregate_row()
        print(f"{row['partition']:>7}  n={row['n']:<4d} P={row['precision']:.2f} R={row['recall']:.2f} "
              f"F1={row['f1']:.2f} ACC={row['acc']:.3f}")
    print("report: " + ", ".join(str(p) for p in written))
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck import check_gradients, multitask_loss_fn
    from .synthetic import smoke_corpus
    from .training import TrainConfig, build_model, prepare

    corpus = load_jsonl(args.data) if args.data else smoke_corpus()
    sample = corpus[args.index]
    config = TrainConfig(seed=args.seed, d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_dim=16,
                         dropout_rate=0.0, max_in=32, max_out=12)
    vocab = build_vocab(corpus, 40)
    model = build_model(config, len(vocab))
    ex = prepare(sample, vocab, config.max_in, config.max_out)
    result = check_gradients(model, multitask_loss_fn(ex, config), step=args.step, max_entries=args.max_entries)
    for group, err in sorted(result.per_group.items()):
        print(f"{group:<14} {err:.3e}")
    ok = result.max_error <= args.tol
    print(f"max relative error {result.max_error:.3e} over {result.n_entries} entries: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_make_toy_corpus(args) -> int:
    from .synthetic import smoke_corpus, to_openreview_notes

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(to_openreview_notes(smoke_corpus(args.seed)), indent=1), encoding="utf-8")
    print(f"wrote toy dump to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metareview", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="convert an OpenReview-style JSON dump to JSONL samples")
    s.add_argument("--dump", default=str(bundled(TOY_DUMP)))
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("stats", help="corpus statistics")
    s.add_argument("--data", required=True)
    s.add_argument("--report", choices=("csv", "json"), default="csv")
    s.add_argument("--novelty", action="store_true", help="also report novel n-gram percentages")
    s.set_defaults(fn=cmd_stats)

    s = sub.add_parser("conflicts", help="per-sample CF / Non-CF labels")
    s.add_argument("--data", required=True)
    s.add_argument("--report", choices=("csv", "json"), default="csv")
    s.set_defaults(fn=cmd_conflicts)

    s = sub.add_parser("relations", help="print one relation matrix as a 0/1 grid")
    s.add_argument("--sample", required=True, help="JSONL file")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--kind", required=True, choices=[k.label for k in RelationKind])
    s.set_defaults(fn=cmd_relations)

    s = sub.add_parser("split", help="seeded train/val/test split")
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--ratios", default="0.8,0.1,0.1")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_split)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="JSON training config (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--log-every", type=int, default=20)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("generate", help="beam-search meta-reviews")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--vocab")
    s.add_argument("--beam-size", type=int)
    s.add_argument("--length-penalty", type=float)
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("evaluate", help="overlap and ACC report")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split-conflicts", action="store_true")
    s.add_argument("--report", choices=("csv", "json"), default="csv")
    s.add_argument("--out")
    s.add_argument("--classifier", help="defaults to acc_classifier.json next to the checkpoint")
    s.add_argument("--train-data", help="gold meta-reviews to fit a classifier when none is saved")
    s.add_argument("--generations", help="JSONL from `generate`; skips decoding")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("grad-check", help="finite-difference gradient check on a tiny model")
    s.add_argument("--data")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-entries", type=int)
    s.set_defaults(fn=cmd_grad_check)

    s = sub.add_parser("make-toy-corpus", help="write the synthetic 20-sample OpenReview dump")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=7)
    s.set_defaults(fn=cmd_make_toy_corpus)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except MetaReviewError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
