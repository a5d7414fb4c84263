"""hwrec command line: synth, preprocess, subunits, features, train, eval, compare.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
Failures print one line ``error<TAB>kind<TAB>message`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import (CLASSIFIER_KINDS, DataError, NumericError, load_model, parse_dataset,
                   save_model, write_dataset)
from .features import FEATURE_KINDS, extract
from .preprocess import PreprocessConfig, preprocess
from .subunits import SegmentationConfig, extract_subunits

BASELINES = ("SOS", "SS", "FD", "FNN", "SVM")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for per-class/per-pair fits")
    p.add_argument("--config", help="file of key=value lines; flags given explicitly win")


def _add_train_options(p):
    g = p.add_argument_group("classifier options (unset means the per-feature default)")
    g.add_argument("--ridge", type=float, help="relative ridge for SOS/FD/SUB covariances")
    g.add_argument("--n-ef", type=int, help="SS retained dimension")
    g.add_argument("--hidden", type=int, help="FNN hidden units")
    g.add_argument("--epochs", type=int, help="FNN epochs")
    g.add_argument("--lr", type=float, help="FNN learning rate")
    g.add_argument("--momentum", type=float, help="FNN momentum")
    g.add_argument("--beta", type=float, help="SVM box constraint")
    g.add_argument("--upsilon", type=float, help="SVM RBF width")
    g.add_argument("--kernel", choices=("rbf", "linear"), help="SVM kernel")
    g.add_argument("--tol", type=float, help="SVM KKT tolerance or SUB relative tolerance")
    g.add_argument("--nh", type=int, help="SUB mixture components per class")
    g.add_argument("--max-iters", type=int, help="SUB EM iteration cap")
    g.add_argument("--smoothing", type=float, help="SUB pseudo-count for sub-unit count weights")


TRAIN_OPTION_KEYS = ("ridge", "n_ef", "hidden", "epochs", "lr", "momentum", "beta", "upsilon",
                     "kernel", "tol", "nh", "max_iters", "smoothing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hwrec", description="Online handwritten character recognition.")
    sub = parser.add_subparsers(dest="command", metavar="{synth,preprocess,subunits,features,"
                                "train,eval,compare}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic stroke corpus")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--train", type=int, default=133, help="training samples per class")
    p.add_argument("--test", type=int, default=29, help="test samples per class")
    p.add_argument("--noise", type=float, default=0.01, help="per-point jitter (template units)")
    p.add_argument("--max-strokes", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    _add_common(p)

    p = sub.add_parser("preprocess", help="normalize, resample and smooth characters")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=128)
    p.add_argument("--delta", type=float, default=0.02)
    _add_common(p)

    p = sub.add_parser("subunits", help="write sub-unit boundaries per character")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--turn-threshold", type=float, default=float(np.pi / 3))
    p.add_argument("--min-points", type=int, default=6)
    p.add_argument("--max-subunits", type=int, default=12)
    _add_common(p)

    p = sub.add_parser("features", help="extract feature vectors")
    p.add_argument("--type", required=True, choices=FEATURE_KINDS)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="fit a classifier and save the model")
    p.add_argument("--classifier", required=True, type=str.upper, choices=CLASSIFIER_KINDS)
    p.add_argument("--features", default="hpod", choices=FEATURE_KINDS)
    p.add_argument("--in", dest="input", required=True, help="training dataset")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--log", help="training log (tab-separated); default stderr")
    _add_train_options(p)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a saved model on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", help="per-class text report")
    p.add_argument("--records", help="line-delimited JSON with the full report")
    p.add_argument("--figures", help="directory for the confusion-matrix figure")
    _add_common(p)

    p = sub.add_parser("compare", help="train and evaluate several classifiers")
    p.add_argument("--in", dest="input", required=True, help="training dataset")
    p.add_argument("--test", required=True, help="test dataset")
    p.add_argument("--classifiers", default="", help="comma list, e.g. sos,fd,sub")
    p.add_argument("--all-baselines", action="store_true", help="SOS, SS, FD, FNN and SVM")
    p.add_argument("--sub", action="store_true", help="also run SUB (on hpod features)")
    p.add_argument("--features", default="hpod", help="comma list of feature kinds")
    p.add_argument("--report", help="text table output")
    p.add_argument("--records", help="line-delimited JSON, one record per run")
    p.add_argument("--figures", help="directory for accuracy and confusion figures")
    _add_train_options(p)
    _add_common(p)
    return parser


def _read_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    """Parse flags; keys from --config act as defaults that explicit flags override."""
    parser = build_parser()
    path = _config_path(argv)
    command = next((t for t in argv if t in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    conf = _read_config(path)
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    unknown = set(conf) - set(actions) - {"config", "help"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    defaults = {}
    for key, text in conf.items():
        if key == "config":
            continue
        a = actions[key]
        if isinstance(a, argparse._StoreTrueAction):
            value = text.lower() in ("1", "true", "yes", "on")
        else:
            try:
                value = a.type(text) if a.type else text
            except (TypeError, ValueError):
                raise UsageError(f"config key {key}: bad value {text!r}") from None
            if a.choices is not None and value not in a.choices:
                raise UsageError(f"config key {key}: {value!r} not in {list(a.choices)}")
        defaults[key] = value
        a.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _echo(args):
    for key, value in sorted(vars(args).items()):
        print(f"config\t{key}={value}", file=sys.stderr)


def _train_options(args) -> dict:
    return {k: getattr(args, k) for k in TRAIN_OPTION_KEYS if getattr(args, k, None) is not None}


def _options_for(kind: str, args) -> dict:
    from .pipeline import OPTION_DEFAULTS

    # shared flags apply only to classifiers that use them
    return {k: v for k, v in _train_options(args).items() if k in OPTION_DEFAULTS[kind]}


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- subcommands -------------------------------------------------------------


def cmd_synth(args):
    from .evaluation import SynthConfig, synth_generate

    cfg = SynthConfig(args.classes, args.train, args.test, args.noise, args.max_strokes, args.seed)
    train, test = synth_generate(cfg)
    out = Path(args.out_dir)
    write_dataset(train, out / "train.jsonl")
    write_dataset(test, out / "test.jsonl")
    print(f"wrote {len(train)} train and {len(test)} test characters to {out}")


def cmd_preprocess(args):
    cfg = PreprocessConfig(delta=args.delta, target_points=args.points)
    ds = parse_dataset(args.input).map(lambda c: preprocess(c, cfg))
    write_dataset(ds, args.out)
    print(f"preprocessed {len(ds)} characters")


def _load_preprocessed(path, role="train", labels=None):
    from .pipeline import preprocess_dataset

    return preprocess_dataset(parse_dataset(path, role, labels))


def cmd_subunits(args):
    cfg = SegmentationConfig(args.turn_threshold, args.min_points, args.max_subunits)
    ds = _load_preprocessed(args.input)
    lines = []
    for c, k in ds.samples():
        units = extract_subunits(c, cfg)
        rec = {"label": ds.labels[k - 1],
               "subunits": [{"stroke": u.source_stroke, "start": u.start,
                             "end": u.start + len(u) - 1} for u in units]}
        lines.append(json.dumps(rec) + "\n")
    _write_text(args.out, "".join(lines))
    print(f"segmented {len(ds)} characters")


def cmd_features(args):
    ds = _load_preprocessed(args.input)
    lines = [json.dumps({"label": ds.labels[k - 1], "values": extract(args.type, c).values.tolist()})
             + "\n" for c, k in ds.samples()]
    _write_text(args.out, "".join(lines))
    print(f"extracted {len(lines)} {args.type} vectors")


def _training_log(model, fh):
    if model.kind == "SUB":
        print("class\titeration\tlog_likelihood\tobjective", file=fh)
        for k, tr in enumerate(model.traces, 1):
            for it, (ll, obj) in enumerate(zip(tr.log_likelihood, tr.objective)):
                print(f"{k}\t{it}\t{ll!r}\t{obj!r}", file=fh)
    elif model.kind == "FNN":
        print("epoch\tloss", file=fh)
        for e, loss in enumerate(model.traces, 1):
            print(f"{e}\t{loss!r}", file=fh)


def cmd_train(args):
    from .pipeline import fit_classifier

    train = _load_preprocessed(args.input)
    try:
        model = fit_classifier(args.classifier, args.features, train,
                               _train_options(args), args.seed, args.jobs)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None
    print(f"config\tresolved={json.dumps(model.options, sort_keys=True)}", file=sys.stderr)
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        with open(args.log, "w", encoding="utf-8") as fh:
            _training_log(model, fh)
    else:
        _training_log(model, sys.stderr)
    save_model(model.to_bundle(), args.model)
    print(f"trained {model.kind} on {args.features} ({len(train)} characters) -> {args.model}")


def cmd_eval(args):
    from .evaluation import evaluate, format_report
    from .pipeline import TrainedModel

    model = TrainedModel.from_bundle(load_model(args.model))
    test = _load_preprocessed(args.test, "test", model.labels)
    report = evaluate(lambda chars: model.predict(chars) + 1, test)
    text = format_report(report, model.labels)
    if args.report:
        _write_text(args.report, text)
    if args.records:
        rec = {"classifier": model.kind, "features": model.feature, **report.to_dict()}
        _write_text(args.records, json.dumps(rec, sort_keys=True) + "\n")
    if args.figures:
        from .plotting import plot_confusion

        plot_confusion(report, model.labels, Path(args.figures) / "confusion.png",
                       f"{model.kind}/{model.feature}")
    print(f"accuracy\t{report.overall_accuracy:.6f}\t{report.n_test}")


def cmd_compare(args):
    from .evaluation import format_records, format_table, run_experiment

    kinds = [k.strip().upper() for k in args.classifiers.split(",") if k.strip()]
    if args.all_baselines:
        kinds = list(BASELINES) + [k for k in kinds if k not in BASELINES]
    if args.sub and "SUB" not in kinds:
        kinds.append("SUB")
    if not kinds:
        raise UsageError("no classifiers selected (use --classifiers or --all-baselines)")
    bad = [k for k in kinds if k not in CLASSIFIER_KINDS]
    if bad:
        raise UsageError(f"unknown classifiers: {bad}")
    feats = [f.strip() for f in args.features.split(",") if f.strip()]
    bad = [f for f in feats if f not in FEATURE_KINDS]
    if bad or not feats:
        raise UsageError(f"unknown feature kinds: {bad or feats}")

    train = _load_preprocessed(args.input)
    test = _load_preprocessed(args.test, "test", train.labels)
    runs = []
    for kind in kinds:
        for f in (["hpod"] if kind == "SUB" else feats):
            if (kind, f) not in runs:
                runs.append((kind, f))
    results = []
    for kind, f in runs:
        res, _ = run_experiment(train, test, kind, f, _options_for(kind, args), args.seed, args.jobs)
        results.append(res)
        print(f"done\t{kind}\t{f}\t{res.test.overall_accuracy:.6f}", file=sys.stderr)
    table = format_table(results)
    if args.report:
        _write_text(args.report, table)
    if args.records:
        _write_text(args.records, format_records(results))
    if args.figures:
        from .plotting import plot_accuracy, plot_confusion

        fig_dir = Path(args.figures)
        plot_accuracy(results, fig_dir / "accuracy.png")
        for r in results:
            plot_confusion(r.test, train.labels, fig_dir / f"confusion_{r.classifier}_{r.feature}.png",
                           f"{r.classifier}/{r.feature}")
    sys.stdout.write(table)


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "subunits": cmd_subunits,
            "features": cmd_features, "train": cmd_train, "eval": cmd_eval,
            "compare": cmd_compare}


def _fail(kind: str, message: str, code: int) -> int:
    message = " ".join(str(message).split())
    print(f"error\t{kind}\t{message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        _echo(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except DataError as exc:
        return _fail("data", exc, 3)
    except NumericError as exc:
        return _fail("numeric", exc, 4)
    except OSError as exc:
        return _fail("data", f"{exc.strerror}: {exc.filename}", 3)
    except ValueError as exc:
        return _fail("usage", exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
