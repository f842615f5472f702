"""``doclayout`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .graph import GraphConfig
from .layout import (
    LayoutError,
    ToyCorpusSpec,
    atomic_write_text,
    default_classes,
    generate_toy_corpus,
    parse_corpus,
    write_corpus,
)
from .metrics import TokenizerConfig, layout_perplexity
from .model import FORMAT_VERSION, CheckpointError, TrainingConfig, fine_tune, load_checkpoint, save_checkpoint, train
from .numeric import NumericFailure
from .synthesis import (
    ValidationRuleConfig,
    rejection_sample,
    render_svg,
    report_to_text,
    sample_layouts,
    validate_corpus,
)

log = logging.getLogger("doclayout")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- config


_SECTIONS = {
    "graph": GraphConfig,
    "training": TrainingConfig,
    "validation": ValidationRuleConfig,
    "tokenizer": TokenizerConfig,
}


def load_config(path):
    """CliConfig JSON -> dict of section objects; unknown keys are rejected."""
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    extra = set(raw) - set(_SECTIONS)
    if extra:
        raise ValueError(f"unknown key {sorted(extra)[0]}")
    out = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ValueError(f"{name}: expected an object")
        if cls is TrainingConfig:
            out[name] = TrainingConfig.from_dict(section)
            continue
        known = set(cls.__dataclass_fields__)
        bad = set(section) - known
        if bad:
            raise ValueError(f"unknown key {name}.{sorted(bad)[0]}")
        try:
            out[name] = cls(**section)
        except TypeError as exc:
            raise ValueError(f"{name}: {exc}") from None
    return out


def _dump(obj):
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


# ---------------------------------------------------------------- subcommands


def cmd_gen_toy(args):
    spec = ToyCorpusSpec(classes=default_classes(args.classes), per_class=args.per_class,
                         jitter=args.jitter, seed=args.seed, n_docs=args.n_docs)
    write_corpus(generate_toy_corpus(spec), args.out)


def cmd_train(args):
    cfg = load_config(args.config)
    docs = parse_corpus(args.corpus)
    ckpt = train(docs, cfg["graph"], cfg["training"])
    save_checkpoint(ckpt, args.out)
    if args.plot:
        from .plotting import figure_path, plot_loss_trace
        plot_loss_trace(ckpt.loss_trace, figure_path(args.out))


def cmd_fine_tune(args):
    ckpt = load_checkpoint(args.checkpoint)
    docs = parse_corpus(args.corpus)
    overrides = {"epochs": args.epochs}
    if args.lr is not None:
        overrides["lr"] = args.lr
    save_checkpoint(fine_tune(ckpt, docs, **overrides), args.out)


def cmd_generate(args):
    ckpt = load_checkpoint(args.checkpoint)
    if args.validate:
        rules = load_config(args.config)["validation"]
        max_draws = args.max_draws if args.max_draws is not None else 10 * args.n
        layouts, stats = rejection_sample(ckpt, args.n, rules, args.seed, max_draws)
        root, _ = os.path.splitext(args.out)
        atomic_write_text(root + ".stats.json", _dump(stats))
    else:
        layouts = sample_layouts(ckpt, args.n, args.seed)
    write_corpus([s.document for s in layouts], args.out)


def cmd_validate(args):
    rules = load_config(args.config)["validation"]
    report = validate_corpus(parse_corpus(args.corpus), rules)
    atomic_write_text(args.report, report_to_text(report))
    if args.plot:
        from .plotting import figure_path, plot_validation
        plot_validation(report.to_dict(), figure_path(args.report))


def cmd_perplexity(args):
    fit = parse_corpus(args.fit)
    ev = parse_corpus(args.eval)
    if not fit:
        raise ValueError(f"{args.fit}: fit corpus is empty")
    report = layout_perplexity(fit, ev, args.grid, args.alpha).to_dict()
    atomic_write_text(args.report, _dump(report))
    if args.plot:
        from .plotting import figure_path, plot_perplexity
        plot_perplexity(report, figure_path(args.report))


def cmd_render(args):
    os.makedirs(args.out_dir, exist_ok=True)
    for doc in parse_corpus(args.corpus):
        atomic_write_text(os.path.join(args.out_dir, f"{doc.id}.svg"), render_svg(doc))


def cmd_eval_downstream(args):
    from .downstream import compare_augmentation

    real = parse_corpus(args.real)
    synth = parse_corpus(args.synthetic)
    test = parse_corpus(args.test)
    for name, docs in (("real", real), ("test", test)):
        missing = [d.id for d in docs if d.label is None]
        if missing:
            raise ValueError(f"--{name}: document {missing[0]!r} has no label")
    report = compare_augmentation(real, synth, test, list(range(args.seeds)),
                                  TokenizerConfig(args.grid)).to_dict()
    atomic_write_text(args.report, _dump(report))
    if args.plot:
        from .plotting import figure_path, plot_eval_report
        plot_eval_report(report, figure_path(args.report))


def cmd_grad_check(args):
    from .model.gradcheck import run_grad_check

    err, n_params, seconds = run_grad_check(args.seed)
    print(f"max relative error: {err:.3e} over {n_params} parameters ({seconds:.1f} s)")
    if not err < 1e-4:
        raise NumericFailure(f"gradient check failed: max relative error {err:.3e} >= 1e-4")


# ---------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="doclayout", description="Graph-based synthetic document layouts.")
    p.add_argument("--version", action="version", version=f"checkpoint format {FORMAT_VERSION}")
    p.add_argument("--quiet", action="store_true", help="suppress epoch lines")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-toy", help="write a deterministic toy corpus")
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--per-class", type=int, default=100)
    s.add_argument("--jitter", type=float, default=0.02)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--n-docs", type=int, default=None, help="truncate the round-robin stream")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_toy)

    s = sub.add_parser("train", help="train a generator checkpoint")
    s.add_argument("--corpus", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", action="store_true", help="also write the loss curve as PNG")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fine-tune", help="continue training on a new corpus")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--lr", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fine_tune)

    s = sub.add_parser("generate", help="sample synthetic layouts")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--validate", action="store_true", help="keep only rule-passing layouts")
    s.add_argument("--config")
    s.add_argument("--max-draws", type=int)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("validate", help="check a corpus against the layout rules")
    s.add_argument("--corpus", required=True)
    s.add_argument("--config")
    s.add_argument("--report", required=True)
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("perplexity", help="bigram layout perplexity of --eval under --fit")
    s.add_argument("--fit", required=True)
    s.add_argument("--eval", required=True)
    s.add_argument("--grid", type=int, default=8)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--report", required=True)
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_perplexity)

    s = sub.add_parser("render", help="write one SVG per document")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("eval-downstream", help="classification with and without synthetic data")
    s.add_argument("--real", required=True)
    s.add_argument("--synthetic", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--grid", type=int, default=8)
    s.add_argument("--report", required=True)
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_eval_downstream)

    s = sub.add_parser("grad-check", help="finite-difference check of the full model")
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LayoutError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
