"""``sida`` command line: gen | train | eval | ablate | mi-bench | gradcheck.

Exit status is 0 on success, 1 on runtime or data errors (including a
failing verification suite) and 2 on usage or config errors. Every failure
writes one ``error[<kind>]: <reason>`` line to stderr.
"""

import argparse
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import checks, config, model, trainer
from .data import FeatureFileError, generate_pair, load_feature_csv, load_pair, write_pair
from .mi import ExpClampWarning

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SUMMARY_HEADER = "seed,task,flags,acc_mean,acc_std,epochs,wall_ms"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def flags_label(cfg):
    parts = [name for name, on in (("mi", cfg.mi_enabled), ("sd", cfg.sd_enabled)) if on]
    return "+".join(parts) or "base"


def _run_config(args):
    cfg = config.load_config(args.config) if args.config else config.build({})
    if getattr(args, "seed", None) is not None:
        cfg = config.with_seed(cfg, args.seed)
        cfg.seeds = (args.seed,)
    if getattr(args, "epochs", None) is not None:
        cfg.train = cfg.train.replace(epochs=args.epochs)
    if getattr(args, "source", None) or getattr(args, "target", None):
        if not (args.source and args.target):
            raise UsageError("--source and --target go together")
        cfg.source_path, cfg.target_path = args.source, args.target
    return cfg


def _data_loader(cfg):
    if cfg.from_files:
        pair = load_pair(cfg.source_path, cfg.target_path)
        return lambda seed: pair
    return lambda seed: generate_pair(config.with_seed(cfg, seed).data)


def _metrics_lines(seed, flags, reports, timing):
    out = []
    for r in reports:
        d = r.as_dict()
        if not timing:
            d["wall_ms"] = 0
        out.append(json.dumps({"seed": seed, "flags": flags, **d}, sort_keys=False))
    return out


def _summary_row(seeds, task, flags, metrics, epochs, wall_ms):
    seed_txt = " ".join(str(s) for s in seeds)
    if metrics.accuracies:
        mean, std = repr(metrics.acc_mean), repr(metrics.acc_std)
    else:
        mean = std = "nan"
    return f"{seed_txt},{task},{flags},{mean},{std},{epochs},{wall_ms}"


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _train_cell(cfg, train_cfg, seeds):
    """Train one (flags) cell on every seed; returns metrics and models."""
    load = _data_loader(cfg)
    lines, accs, models = [], [], []
    flags = flags_label(train_cfg)
    for s in seeds:
        enc, clf, m, W = trainer.train(train_cfg.replace(seed=s), load(s))
        lines.append(m.reports)
        accs.extend(m.accuracies)
        models.append((s, enc, clf, W))
    return flags, trainer.RunMetrics(list(seeds), lines, accs), models


def cmd_gen(args):
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair = generate_pair(cfg.data)
    write_pair(out, pair)
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'} ({len(pair.source)} + {len(pair.target)} rows)")
    return EXIT_OK


def cmd_train(args):
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    flags, metrics, models = _train_cell(cfg, cfg.train, cfg.seeds)
    wall = round((time.perf_counter() - t0) * 1e3) if args.timing else 0
    lines = []
    for s, reports in zip(metrics.seeds, metrics.reports):
        lines += _metrics_lines(s, flags, reports, args.timing)
    _write_text(out / "metrics.jsonl", "\n".join(lines) + "\n")
    row = _summary_row(metrics.seeds, cfg.task, flags, metrics, cfg.train.epochs, wall)
    _write_text(out / "summary.csv", SUMMARY_HEADER + "\n" + row + "\n")
    for s, enc, clf, W in models:
        model.save_checkpoint(out / f"checkpoint-seed{s}.txt", enc, clf)
        if args.dump_weights and W is not None:
            header = ",".join(f"class{j}" for j in range(W.shape[1]))
            body = "\n".join(",".join(repr(float(v)) for v in row_) for row_ in W)
            _write_text(out / f"weights-seed{s}.csv", header + "\n" + body + "\n")
    if metrics.accuracies:
        print(f"{flags}: target accuracy {100 * metrics.acc_mean:.2f} +- {100 * metrics.acc_std:.2f} "
              f"over seeds {list(metrics.seeds)}")
    print(f"metrics in {out}")
    return EXIT_OK


def cmd_eval(args):
    enc, clf = model.load_checkpoint(args.checkpoint)
    target = load_feature_csv(args.target, "target")
    if target.hidden_y is None:
        raise ValueError(f"{args.target}: evaluation needs a label column")
    acc, per_class, risk = trainer.evaluate(enc, clf, target)
    result = {"accuracy": acc, "per_class": {str(k): v for k, v in per_class.items()}, "risk": risk}
    text = json.dumps(result)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "eval.json", text + "\n")
    print(text)
    return EXIT_OK


def cmd_ablate(args):
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = [trainer.ablation_config(cfg.train, mi_on, sd_on) for mi_on, sd_on in trainer.ABLATION_ROWS]
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_cell, [cfg] * 4, cells, [cfg.seeds] * 4))
    else:
        results = [_train_cell(cfg, c, cfg.seeds) for c in cells]
    wall = round((time.perf_counter() - t0) * 1e3) if args.timing else 0
    lines, rows, table = [], [], []
    for (mi_on, sd_on), (flags, metrics, _) in zip(trainer.ABLATION_ROWS, results):
        for s, reports in zip(metrics.seeds, metrics.reports):
            lines += _metrics_lines(s, flags, reports, args.timing)
        rows.append(_summary_row(metrics.seeds, cfg.task, flags, metrics, cfg.train.epochs, wall))
        table.append((mi_on, sd_on, metrics))
    _write_text(out / "metrics.jsonl", "\n".join(lines) + "\n")
    _write_text(out / "summary.csv", SUMMARY_HEADER + "\n" + "\n".join(rows) + "\n")
    print(trainer.format_ablation(table))
    return EXIT_OK


def _suite(args, results):
    print(checks.format_results(results))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / f"{args.command}.csv", checks.results_csv(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"error[check]: failed: {'; '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_mi_bench(args):
    return _suite(args, checks.quiet(checks.mi_bench, seed=args.seed or 0))


def cmd_gradcheck(args):
    return _suite(args, checks.quiet(checks.gradcheck, seeds=args.seeds))


def build_parser():
    epilog = "config keys ([section] key = default  (provenance) meaning):\n" + config.describe_schema()
    p = _Parser(prog="sida", description="Surrogate-distribution domain adaptation on numpy.",
                epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="config file (defaults apply to absent keys)")
        sp.add_argument("--seed", type=int, help="run only this seed (overrides [run] seeds)")
        sp.add_argument("--out", required=out_required, help="output directory")

    def training(sp):
        sp.add_argument("--source", help="source feature CSV (overrides [data])")
        sp.add_argument("--target", help="target feature CSV (overrides [data])")
        sp.add_argument("--epochs", type=int, help="override [train] epochs")
        sp.add_argument("--timing", action="store_true", help="record wall-clock times (breaks byte-identical output)")

    fmt = argparse.RawDescriptionHelpFormatter
    sp = sub.add_parser("gen", help="write a synthetic source/target pair (target labels kept for evaluation)", epilog=epilog, formatter_class=fmt)
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="train on every configured seed", epilog=epilog, formatter_class=fmt)
    common(sp)
    training(sp)
    sp.add_argument("--dump-weights", action="store_true", help="write the final surrogate matrix per seed")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint on a labeled target CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--target", required=True, help="target CSV with a label column")
    sp.add_argument("--out", help="also write eval.json here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="run the MI x SD ablation grid", epilog=epilog, formatter_class=fmt)
    common(sp)
    training(sp)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("mi-bench", help="check the MI estimator against exact values")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="also write mi-bench.csv here")
    sp.set_defaults(func=cmd_mi_bench)

    sp = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    sp.add_argument("--seeds", type=int, default=50)
    sp.add_argument("--out", help="also write gradcheck.csv here")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def _fail(kind, message, code):
    print(f"error[{kind}]: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail("usage", e, EXIT_USAGE)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", ExpClampWarning)
            return args.func(args)
    except UsageError as e:
        return _fail("usage", e, EXIT_USAGE)
    except config.ConfigError as e:
        return _fail("config", e, EXIT_USAGE)
    except FileNotFoundError as e:
        return _fail("missing-file", f"{e.filename or e}: not found", EXIT_RUNTIME)
    except FeatureFileError as e:
        return _fail("data", e, EXIT_RUNTIME)
    except trainer.NonFiniteLossError as e:
        return _fail("non-finite", e, EXIT_RUNTIME)
    except (ValueError, OSError, FloatingPointError) as e:
        return _fail("runtime", e, EXIT_RUNTIME)


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
