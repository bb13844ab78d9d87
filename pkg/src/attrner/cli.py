"""Command-line entry point: ``attrner <command> [options]``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .corpus import read_corpus, serialize_corpus, with_derived_labels, write_corpus
from .errors import AttrNerError
from .heads import TemplateSet
from .injection import SITES, InjectionMode
from .model.config import ModelConfig
from .model.params import load_checkpoint
from .network import RUN_KINDS
from .heads import HEAD_KINDS


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--data", help="directory holding train.txt, dev.txt, test.txt")
    p.add_argument("--out", help="output directory (or file, for single-output commands)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--mode", choices=SITES)
    p.add_argument("--channels", help="comma list drawn from label,pos")
    p.add_argument("--run-kind", choices=RUN_KINDS)
    p.add_argument("--head", choices=HEAD_KINDS)


def _configs(args):
    from .pipeline import TrainConfig, load_config

    train, model = TrainConfig.desk(), ModelConfig()
    if args.config:
        train, model = load_config(args.config, train, model)
    upd = {}
    for flag, key in (("mode", "mode"), ("channels", "channels"), ("run_kind", "run_kind"),
                      ("head", "head_kind")):
        v = getattr(args, flag, None)
        if v is not None:
            upd[key] = v
    if args.seed is not None:
        upd["seeds"] = (args.seed,)
    return replace(train, **upd), model


def _corpora(data_dir, splits=("train", "dev", "test")):
    if not data_dir:
        raise AttrNerError("--data is required")
    train = with_derived_labels(read_corpus(os.path.join(data_dir, "train.txt"), "train"))
    out = {"train": train}
    for split in splits[1:]:
        c = read_corpus(os.path.join(data_dir, f"{split}.txt"), split, train.scheme)
        out[split] = c if all(s.sentence_label for s in c) else with_derived_labels(c)
    return out


def _write(text: str, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_train(args):
    from .pipeline import prepare_vocab, run_experiment, write_results

    cfg, model = _configs(args)
    corpora = _corpora(args.data)
    out = args.out or "runs"
    os.makedirs(out, exist_ok=True)
    templates = TemplateSet.load(args.templates) if args.templates else None
    if templates is None and cfg.run_kind == "pipeline":
        from .corpus import label_inventory
        templates = TemplateSet.default(label_inventory(corpora["train"].scheme))
    vocab = prepare_vocab(corpora["train"], templates)
    vocab.save(os.path.join(out, "vocab.txt"))
    if templates is not None:
        with open(os.path.join(out, "templates.txt"), "w", encoding="utf-8") as fh:
            fh.write(templates.dumps())
    result = run_experiment(cfg, model, corpora, out, templates, vocab)
    write_results([result], os.path.join(out, "results.txt"))
    print(f"{cfg.mode}/{cfg.channels_label}/{cfg.run_kind}/{cfg.head_kind}: "
          f"test F1 {100 * result.mean:.2f}±{100 * result.std:.2f}")
    return 0


def cmd_evaluate(args):
    from .classifier import classify_sentences
    from .corpus import Vocabulary
    from .pipeline import evaluate_ner

    params, meta = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.loads(meta["vocab"])
    path = args.input or os.path.join(args.data or ".", f"{args.split}.txt")
    corpus = with_derived_labels(read_corpus(path, args.split, vocab.scheme))
    labels = None
    if args.classifier:
        clf, cmeta = load_checkpoint(args.classifier)
        labels, _ = classify_sentences(corpus.sentences, clf, TemplateSet.loads(cmeta["templates"]), vocab)
    prf, _ = evaluate_ner(params, corpus, vocab, meta["head_kind"], meta.get("constrained", True), labels)
    src = "predicted" if labels else "gold"
    _write(f"split={args.split}\tlabels={src}\tP={100 * prf.precision:.2f}\tR={100 * prf.recall:.2f}"
           f"\tF1={100 * prf.f1:.2f}\ttp={prf.tp}\tfp={prf.fp}\tfn={prf.fn}\n", args.out)
    return 0


def cmd_tag(args):
    from .corpus import Vocabulary, parse_column_file
    from .pipeline import tag_to_text

    _, meta = load_checkpoint(args.checkpoint)
    scheme = Vocabulary.loads(meta["vocab"]).scheme
    with open(args.input, encoding="utf-8") as fh:
        corpus = parse_column_file(fh, "input", scheme)
    _write(tag_to_text(corpus.sentences, args.classifier, args.checkpoint), args.out)
    return 0


def cmd_classify(args):
    from .classifier import classify_sentences
    from .corpus import Vocabulary

    params, meta = load_checkpoint(args.checkpoint)
    if meta.get("kind") != "classifier":
        raise AttrNerError(f"{args.checkpoint} is not a classifier checkpoint")
    vocab = Vocabulary.loads(meta["vocab"])
    templates = TemplateSet.loads(meta["templates"])
    corpus = read_corpus(args.input, "input", vocab.scheme)
    labels, probs = classify_sentences(corpus.sentences, params, templates, vocab)
    cands = [lab for lab in vocab.id_to_label if lab in templates.templates]
    lines = ["#index\tlabel\t" + "\t".join(cands)]
    for i, (lab, row) in enumerate(zip(labels, probs)):
        lines.append(f"{i}\t{lab}\t" + "\t".join(f"{p:.6f}" for p in row))
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_derive_labels(args):
    corpus = with_derived_labels(read_corpus(args.input, "input"))
    if args.out:
        write_corpus(corpus, args.out)
    else:
        sys.stdout.write(serialize_corpus(corpus))
    return 0


def cmd_gradcheck(args):
    from .model.gradcheck import grad_check

    if args.mode:
        cells = [(args.mode, args.channels or ("label" if args.mode == "text" else "label,pos"))]
    else:
        cells = [("none", None), ("text", "label"), ("embedding", "label,pos"),
                 ("attention", "label,pos"), ("classifier", "label,pos")]
    kinds = [args.run_kind] if args.run_kind else ["ner-only", "joint"]
    heads = [args.head] if args.head else list(HEAD_KINDS)
    seed = 0 if args.seed is None else args.seed
    ok = True
    lines = []
    for site, ch in cells:
        mode = InjectionMode.parse(site, ch)
        for kind in kinds:
            for head in heads:
                r = grad_check(seed=seed, mode=mode, tolerance=args.tolerance, run_kind=kind, head_kind=head)
                ok &= r.passed
                lines.append(f"{'PASS' if r.passed else 'FAIL'}\t{mode}\t{kind}\t{head}\t"
                             f"max_rel={r.max_rel_error:.3e}\tworst={r.worst_parameter}")
    _write("\n".join(lines) + "\n", args.out)
    return 0 if ok else 1


def cmd_oracle(args):
    from .crf import backend, oracle_sweep

    if args.backend:
        backend.use(args.backend)
    r = oracle_sweep(args.instances, 0 if args.seed is None else args.seed)
    ok = r.passed(args.tolerance)
    _write(f"{'PASS' if ok else 'FAIL'}\tbackend={backend.NAME}\tinstances={r.instances}\t"
           f"max_logZ_err={r.max_log_z_error:.3e}\tmax_grad_err={r.max_grad_error:.3e}\t"
           f"viterbi_mismatches={r.viterbi_mismatches}\tscore_mismatches={r.score_mismatches}\n", args.out)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrner", description="Attribute-injected NER toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and test one experiment cell over the configured seeds")
    _common(p)
    p.add_argument("--templates", help="label<TAB>template file (pipeline runs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="span micro-F1 of an NER checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--classifier", help="inject labels predicted by this classifier checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--input", help="column file to evaluate instead of <data>/<split>.txt")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tag", help="tag raw sentences (tag column '_')")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="NER checkpoint")
    p.add_argument("--classifier", help="classifier checkpoint for label-injected models")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("classify", help="predict sentence labels with a classifier checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("derive-labels", help="annotate a corpus with derived sentence labels")
    _common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_derive_labels)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    _common(p)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle", help="CRF dynamic programs vs brute-force enumeration")
    _common(p)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--backend", choices=("python", "cython"))
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AttrNerError, OSError) as exc:
        print(f"attrner {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
