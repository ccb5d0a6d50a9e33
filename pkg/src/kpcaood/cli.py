"""Command-line entry point: gen-synth / fit / score / eval workflows.

Exit codes: 0 success, 1 usage or parameter errors, 2 data/numeric/file
errors. Matrix paths ending in ``.csv`` are read and written as CSV;
everything else uses the binary format. Reruns with identical flags and
seed produce byte-identical output files.
"""

import argparse
import os
import sys

from .dataio import (
    ROLE_LOGITS,
    SYNTHETIC_KINDS,
    DatasetBundle,
    gen_synthetic,
    read_matrix,
    write_matrix,
)
from .detectors import (
    DEFAULT_N_LANDMARKS,
    DEFAULT_N_RFF,
    LOGIT_METHODS,
    METHODS,
    DetectorConfig,
    fit_detector,
    load_model,
    save_model,
    score_with_rejects,
)
from .errors import KpcaoodError, ParameterError, UsageError
from .linalg import SeededRng
from .metrics import evaluate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _fmt(path: str) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def _read(path: str, role: str = "features"):
    return read_matrix(path, _fmt(path), role)


def _gamma(text: str):
    if text == "median":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise UsageError(f"--gamma expects a number or 'median', got {text!r}") from exc


def _add_fit_flags(p):
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--gamma", type=_gamma, default="median",
                   help="gaussian width, or 'median' for the self-tuning heuristic")
    p.add_argument("--num-features", type=int, default=DEFAULT_N_RFF,
                   help="random-feature count for kpca-rff")
    p.add_argument("--num-landmarks", type=int, default=DEFAULT_N_LANDMARKS,
                   help="landmark count for kpca-nys")
    p.add_argument("--evr", type=float, default=None,
                   help="explained-variance-ratio threshold (per-method default)")
    p.add_argument("--sampling", default="low-energy",
                   choices=("low-energy", "high-energy", "uniform"))
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--clip-percentile", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)


def _build_parser():
    parser = _Parser(prog="kpcaood", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic detection bundle")
    p.add_argument("--kind", required=True, choices=SYNTHETIC_KINDS)
    p.add_argument("--n-ind", type=int, required=True)
    p.add_argument("--n-ood", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("fit", help="fit a detector and write a model file")
    p.add_argument("--features", help="training feature matrix")
    p.add_argument("--logits", help="training logit matrix")
    p.add_argument("--model", required=True, help="output model path")
    _add_fit_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("score", help="score samples with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--features")
    p.add_argument("--logits")
    p.add_argument("--out", required=True, help="output CSV of row,score")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="evaluate a model against OoD sets")
    p.add_argument("--model", required=True)
    p.add_argument("--features", help="in-distribution test features")
    p.add_argument("--logits", help="in-distribution test logits")
    p.add_argument("--ood", action="append", default=[], metavar="NAME=PATH",
                   help="named OoD matrix; repeatable")
    p.add_argument("--out", required=True, help="output JSON report path")
    p.add_argument("--oracle", action="store_true",
                   help="add exact-KPCA mean-absolute-error columns")
    p.add_argument("--train-features", help="training features (required with --oracle)")
    p.add_argument("--dump-scores", help="optional CSV of dataset,row,score")
    p.set_defaults(func=_cmd_eval)
    return parser


def _cmd_gen_synth(args):
    bundle = gen_synthetic(args.kind, args.n_ind, args.n_ood, args.dim, args.seed)
    os.makedirs(args.out, exist_ok=True)

    def emit(name, fm):
        if fm is not None:
            write_matrix(fm, os.path.join(args.out, name + ".kpcf"))

    emit("train_features", bundle.ind_train)
    emit("train_logits", bundle.ind_train_logits)
    emit("test_features", bundle.ind_test)
    emit("test_logits", bundle.ind_test_logits)
    for name, fm in bundle.ood_sets.items():
        emit(f"ood_{name}_features", fm)
        emit(f"ood_{name}_logits", bundle.ood_logits.get(name))
    print(f"wrote {args.kind} bundle to {args.out}")


def _cmd_fit(args):
    config = DetectorConfig(
        method=args.method,
        gamma=args.gamma,
        n_rff=args.num_features,
        n_landmarks=args.num_landmarks,
        evr_threshold=args.evr,
        sampling=args.sampling,
        temperature=args.temperature,
        clip_percentile=args.clip_percentile,
    )
    if args.method not in LOGIT_METHODS and not args.features:
        raise UsageError(f"fit --method {args.method} requires --features")
    bundle = DatasetBundle(
        ind_train=_read(args.features) if args.features else None,
        ind_train_logits=_read(args.logits, ROLE_LOGITS) if args.logits else None,
    )
    model = fit_detector(config, bundle, SeededRng(args.seed))
    save_model(model, args.model)
    print(f"wrote {args.method} model to {args.model}")


def _cmd_score(args):
    model = load_model(args.model)
    features = _read(args.features) if args.features else None
    logits = _read(args.logits, ROLE_LOGITS) if args.logits else None
    if model.method in LOGIT_METHODS and logits is None:
        raise UsageError(f"score with a {model.method} model requires --logits")
    if model.method not in LOGIT_METHODS and features is None:
        raise UsageError(f"score with a {model.method} model requires --features")
    values, kept, rejected = score_with_rejects(model, features, logits)
    for idx in rejected:
        print(f"rejected row {idx}: zero-norm feature vector", file=sys.stderr)
    with open(args.out, "w") as fh:
        for idx, value in zip(kept, values):
            fh.write(f"{idx},{float(value)!r}\n")
    print(f"wrote {len(kept)} scores to {args.out}"
          + (f" ({len(rejected)} rows rejected)" if len(rejected) else ""))


def _parse_ood(pairs):
    out = {}
    for pair in pairs:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--ood expects NAME=PATH, got {pair!r}")
        out[name] = path
    return out


def _cmd_eval(args):
    model = load_model(args.model)
    ood_paths = _parse_ood(args.ood)
    if not ood_paths:
        raise UsageError("eval requires at least one --ood NAME=PATH")
    logit_model = model.method in LOGIT_METHODS
    if logit_model:
        if not args.logits:
            raise UsageError(f"eval with a {model.method} model requires --logits")
        ind_test = _read(args.logits, ROLE_LOGITS)
        ood_sets = {n: _read(p, ROLE_LOGITS) for n, p in ood_paths.items()}
        bundle = DatasetBundle(ind_test=ind_test, ood_sets=ood_sets,
                               ind_test_logits=ind_test, ood_logits=ood_sets)
    else:
        if not args.features:
            raise UsageError(f"eval with a {model.method} model requires --features")
        train = None
        if args.oracle:
            if not args.train_features:
                raise UsageError("--oracle requires --train-features")
            train = _read(args.train_features)
        bundle = DatasetBundle(
            ind_train=train,
            ind_test=_read(args.features),
            ood_sets={n: _read(p) for n, p in ood_paths.items()},
        )
    report = evaluate(model, bundle, oracle=args.oracle,
                      keep_scores=bool(args.dump_scores))
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    if args.dump_scores:
        with open(args.dump_scores, "w") as fh:
            for name, scores in report.scores.items():
                for idx, value in enumerate(scores):
                    fh.write(f"{name},{idx},{float(value)!r}\n")
    print(f"wrote report to {args.out} "
          f"(average fpr95 {report.average_fpr95:.4f}, auroc {report.average_auroc:.4f})")


def run(argv) -> int:
    """Parse argv and execute; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
        args.func(args)
        return 0
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KpcaoodError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
