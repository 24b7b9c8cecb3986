#!/usr/bin/env python3
"""Train generators, create synthetic features and run the evaluation tables.

Usage:
    python scripts/ganser.py synth-corpus --out data/corpus.csv --seed 7
    python scripts/ganser.py train aae --corpus data/corpus.csv --out-dir runs/aae
    python scripts/ganser.py train gan-cond-improved --corpus data/corpus.csv \\
        --aae-checkpoint runs/aae/model.ckpt --out-dir runs/cond
    python scripts/ganser.py generate --checkpoint runs/cond/model.ckpt --n 100 --class angry --out synth.csv
    python scripts/ganser.py experiment table1 --corpus data/corpus.csv --out-dir runs/table1
    python scripts/ganser.py gradcheck

Every run directory gets config.txt, the resolved configuration; passing it
back with --config reproduces the run. Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

import argparse
import logging
import sys
from pathlib import Path

# Add project root to path so we can import src modules
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

import numpy as np

from src.aae import decoder_weights, encode, train_aae
from src.charts import aae_loss_chart, code_scatter_chart, loss_curve_chart, save_chart
from src.checkpoint import load_aae, load_checkpoint_kind, load_gan, save_aae, save_gan
from src.corpus import (
    FeatureCorpus,
    SynthCorpusSpec,
    generate_synth_corpus,
    load_corpus,
    load_spec,
    save_corpus,
    split_by_session,
)
from src.database import get_session, init_db, record_report
from src.experiments import TABLES, run_table, write_reports
from src.gan import generate, label_codes, train_conditional_gan, train_vanilla_gan
from src.gmm import default_prior
from src.nn_core import TrainingDivergedError, random_gradient_sweep
from src.settings import RunConfig, format_key_values, load_run_config

logger = logging.getLogger("ganser")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

TRAIN_KINDS = ("aae", "gan-vanilla", "gan-cond-baseline", "gan-cond-improved")
GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    """Bad flags, missing inputs or a missing prerequisite."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"Error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _add_run_options(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="Flat key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key (repeatable)")
    parser.add_argument("--corpus", help="Training corpus CSV")
    parser.add_argument("--test-corpus", help="Second corpus (table3)")
    parser.add_argument("--aae-checkpoint", help="Trained AAE checkpoint")
    parser.add_argument("--out-dir", help="Run output directory")
    parser.add_argument("--seed", type=int, help="Master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description="Synthetic emotion-feature generation and evaluation.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth-corpus", help="Generate a synthetic feature corpus")
    synth.add_argument("--spec", help="Corpus spec file (default recipe if omitted)")
    synth.add_argument("--preset", choices=["default", "balanced", "emobase-scale"], default="default",
                       help="Built-in recipe when no spec file is given")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="Output corpus CSV")

    train = sub.add_parser("train", help="Train an AAE or a GAN")
    train.add_argument("kind", choices=TRAIN_KINDS)
    _add_run_options(train)

    gen = sub.add_parser("generate", help="Sample rows from a GAN checkpoint")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--class", dest="class_name", help="Class to generate (conditional checkpoints)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="Output corpus CSV")

    experiment = sub.add_parser("experiment", help="Run a table analog end to end")
    experiment.add_argument("table", choices=list(TABLES))
    _add_run_options(experiment)

    grad = sub.add_parser("gradcheck", help="Finite-difference check of random networks")
    grad.add_argument("--configs", type=int, default=20)
    grad.add_argument("--seed", type=int, default=0)
    return parser


def _overrides(args) -> dict[str, str]:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in (("corpus", "corpus"), ("test_corpus", "test_corpus"),
                      ("aae_checkpoint", "aae_checkpoint"), ("out_dir", "out_dir"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    return overrides


def _resolve_config(args) -> RunConfig:
    try:
        return load_run_config(args.config, _overrides(args))
    except (ValueError, FileNotFoundError) as e:
        raise UsageError(str(e)) from None


def _load_input_corpus(path: str, what: str) -> FeatureCorpus:
    if not path:
        raise UsageError(f"No {what} given (use --{what.replace('_', '-')} or set '{what}' in the config)")
    if not Path(path).exists():
        raise UsageError(f"{what} file not found: {path}")
    return load_corpus(path)


def _prepare_out_dir(config: RunConfig) -> Path:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(config.to_text(), encoding="utf-8")
    return out_dir


def _validation_split(corpus: FeatureCorpus, val_session: int) -> tuple[FeatureCorpus, FeatureCorpus | None]:
    """Hold out one session for validation curves (the highest when val_session is 0)."""
    if len(corpus.session_ids) < 2:
        return corpus, None
    session = val_session or corpus.session_ids[-1]
    try:
        return split_by_session(corpus, session)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_synth_corpus(args) -> int:
    if args.spec:
        if not Path(args.spec).exists():
            raise UsageError(f"Spec file not found: {args.spec}")
        try:
            spec = load_spec(args.spec)
        except ValueError as e:
            raise UsageError(str(e)) from None
    elif args.preset == "balanced":
        spec = SynthCorpusSpec.balanced()
    elif args.preset == "emobase-scale":
        spec = SynthCorpusSpec.emobase_scale()
    else:
        spec = SynthCorpusSpec()

    corpus = generate_synth_corpus(spec, args.seed)
    out = Path(args.out)
    save_corpus(corpus, out)

    manifest = {"rows": len(corpus), "feature_dim": corpus.feature_dim, "seed": args.seed}
    manifest.update({f"class.{name}": count for name, count in corpus.class_counts().items()})
    manifest.update({f"session.{s}": int(np.sum(corpus.sessions == s)) for s in corpus.session_ids})
    out.with_suffix(".manifest.txt").write_text(format_key_values(manifest), encoding="utf-8")
    print(f"Wrote {len(corpus)} rows ({corpus.feature_dim} features) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _resolve_config(args)
    needs_aae = args.kind in ("gan-vanilla", "gan-cond-improved")
    if needs_aae and not config.aae_checkpoint:
        raise UsageError(f"train {args.kind} needs --aae-checkpoint (run 'train aae' first)")
    if needs_aae and not Path(config.aae_checkpoint).exists():
        raise UsageError(f"AAE checkpoint not found: {config.aae_checkpoint} (run 'train aae' first)")
    corpus = _load_input_corpus(config.corpus, "corpus")
    out_dir = _prepare_out_dir(config)
    checkpoint = out_dir / "model.ckpt"

    if args.kind == "aae":
        prior = default_prior(list(corpus.class_names))
        model, history = train_aae(corpus, prior, config.aae_settings(), config.seed)
        save_aae(model, checkpoint)
        history.save_csv(out_dir / "loss_history.csv")
        save_chart(aae_loss_chart(history), out_dir / "loss_curves.html")
        save_chart(code_scatter_chart(encode(model, corpus.features), corpus.labels, "Training codes"),
                   out_dir / "codes.html")
        print(f"AAE final reconstruction loss: {history.final_reconstruction_loss:.4f}")
        print(f"Checkpoint: {checkpoint}")
        return EXIT_OK

    train, val = _validation_split(corpus, config.val_session)
    if args.kind == "gan-vanilla":
        aae = load_aae(config.aae_checkpoint)
        val_codes = None if val is None else encode(aae, val.features)
        model, history = train_vanilla_gan(encode(aae, train.features), val_codes, config.schedule("vanilla"),
                                           config.seed, code_prior=aae.prior)
        samples, _ = generate(model, 1000, config.seed)
        save_chart(code_scatter_chart(samples, label_codes(model, samples), "Generated codes"),
                   out_dir / "samples.html")
    elif args.kind == "gan-cond-baseline":
        prior = default_prior(list(corpus.class_names))
        model, history = train_conditional_gan(train, val, prior, config.schedule("baseline"), seed=config.seed)
    else:
        aae = load_aae(config.aae_checkpoint)
        model, history = train_conditional_gan(train, val, aae.prior, config.schedule("improved"),
                                               decoder_weights(aae), config.seed)

    save_gan(model, checkpoint)
    history.save_csv(out_dir / "loss_history.csv")
    save_chart(loss_curve_chart(history, f"{args.kind} losses"), out_dir / "loss_curves.html")
    last = history.split("train")[-1]
    print(f"{args.kind}: final train disc_loss {last.disc_loss:.4f}, gen_loss {last.gen_loss:.4f}")
    print(f"Generator updates: {history.gen_updates}, discriminator updates: {history.disc_updates}")
    print(f"Checkpoint: {checkpoint}")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.n < 0:
        raise UsageError(f"--n must be non-negative, got {args.n}")
    if not Path(args.checkpoint).exists():
        raise UsageError(f"Checkpoint not found: {args.checkpoint}")
    if load_checkpoint_kind(args.checkpoint) != "gan":
        raise UsageError(f"{args.checkpoint} is not a GAN checkpoint")
    model = load_gan(args.checkpoint)

    if model.conditional:
        if args.class_name is not None and args.class_name not in model.class_names:
            raise UsageError(f"Unknown class '{args.class_name}' (checkpoint classes: {list(model.class_names)})")
        samples, labels = generate(model, args.n, args.seed, args.class_name)
        class_names = model.class_names
    else:
        if args.class_name is not None:
            raise UsageError("--class is only valid for conditional checkpoints")
        if model.code_prior is None:
            raise UsageError("Vanilla checkpoint has no code prior to label samples with")
        samples, _ = generate(model, args.n, args.seed)
        labels = label_codes(model, samples)
        class_names = model.code_prior.class_names

    corpus = FeatureCorpus(
        ids=tuple(f"gen_{i:06d}" for i in range(args.n)),
        sessions=np.ones(args.n, dtype=np.int64),
        labels=tuple(labels),
        features=samples.reshape(args.n, model.data_dim),
        class_names=class_names,
    )
    save_corpus(corpus, args.out)
    print(f"Wrote {args.n} generated rows ({model.data_dim} features) to {args.out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _resolve_config(args)
    if args.table == "table3" and not config.test_corpus:
        raise UsageError("table3 needs a second corpus (--test-corpus)")
    corpus = _load_input_corpus(config.corpus, "corpus")
    test_corpus = _load_input_corpus(config.test_corpus, "test_corpus") if args.table == "table3" else None
    out_dir = _prepare_out_dir(config)

    reports = run_table(args.table, corpus, config.experiment_settings(), test_corpus)
    write_reports(reports, out_dir, len(corpus.class_names))

    # Cross-corpus runs carry GAN losses against the test corpus
    for name, history in (reports[0].validation_histories if reports else {}).items():
        history.save_csv(out_dir / f"loss_history_{name}.csv")
        save_chart(loss_curve_chart(history, f"{name} GAN losses"), out_dir / f"loss_curves_{name}.html")

    engine = init_db(str(out_dir / "results.db"))
    session = get_session(engine)
    try:
        for report in reports:
            record_report(session, report, args.table)
    finally:
        session.close()

    print((out_dir / "summary.txt").read_text(encoding="utf-8"), end="")
    print(f"Reports written to {out_dir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    result = random_gradient_sweep(n_configs=args.configs, seed=args.seed)
    for dims, kind, error in result.per_config:
        print(f"  {kind:<14} {str(dims):<28} {error:.3e}")
    print(f"Max relative error: {result.max_error:.3e}")
    return EXIT_OK if result.max_error < GRADCHECK_TOLERANCE else EXIT_RUNTIME


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "train": cmd_train,
    "generate": cmd_generate,
    "experiment": cmd_experiment,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as e:
        print(f"Error: training diverged at step {e.step}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
