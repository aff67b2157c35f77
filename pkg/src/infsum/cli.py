"""Command line entry point: ``train``, ``verify`` and ``meminfo``."""

import argparse
import logging
import sys

from .data import ParseError, TaskConfigError, load_libsvm
from .harness import ALGORITHMS, RunConfig, memory_report, run_experiment
from .tasks import EvalSpec


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="infsum", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a gamma sweep and write <out>.csv and <out>.summary.json")
    t.add_argument("--task", choices=["erm", "auc"], default="erm")
    t.add_argument("--data", required=True, help="LIBSVM training file (.gz accepted)")
    t.add_argument("--test", help="LIBSVM test file; enables the test AUC column")
    t.add_argument("--algo", default="ssag",
                   help="one or more of %s, comma separated" % ",".join(ALGORITHMS))
    t.add_argument("--loss", default="logistic", help="logistic | sqhinge | squared (erm only)")
    t.add_argument("--noise", default="dropout:0.3", help="none | dropout:<p> | gauss:<sigma>")
    t.add_argument("--lambda", dest="lambda2", type=float, default=1e-6, help="l2 weight")
    t.add_argument("--l1", type=float, default=0.0, help="l1 weight; > 0 enables the prox step")
    t.add_argument("--c", type=float, default=None, help="stepsize numerator (default 2/lambda)")
    t.add_argument("--gammas", type=_float_list, default=(100.0,), help="comma-separated gamma grid")
    t.add_argument("--beta-exp", type=float, default=0.75, help="exponent of the moving-average weights")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--reps", type=int, default=5)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--iterate-averaging", action="store_true")
    t.add_argument("--base-eta", type=float, default=0.1, help="adagrad base stepsize")
    t.add_argument("--eval-perturbations", type=int, default=5,
                   help="perturbations per sample when estimating the objective")
    t.add_argument("--eval-seed", type=int, default=0)
    t.add_argument("--max-pairs", type=int, default=100_000, help="pair budget for the auc objective")
    t.add_argument("--jobs", type=int, default=1, help="cells run in parallel processes")
    t.add_argument("--timing", action="store_true",
                   help="record wall time (output then differs between reruns)")
    t.add_argument("--out", required=True, help="output prefix")

    v = sub.add_parser("verify", help="run the acceptance checks and print one line per criterion")
    v.add_argument("--only", type=_int_list, default=None, help="comma-separated criterion numbers")

    m = sub.add_parser("meminfo", help="extra storage beyond SGD, in bytes")
    m.add_argument("--algo", required=True, choices=ALGORITHMS)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--d", type=int, required=True)
    m.add_argument("--iterate-averaging", action="store_true")
    return p


def cmd_train(args):
    config = RunConfig(
        train_path=args.data,
        task=args.task,
        algorithms=args.algo,
        test_path=args.test,
        loss=args.loss,
        noise=args.noise,
        lambda2=args.lambda2,
        lambda1=args.l1,
        c=args.c,
        gammas=args.gammas,
        beta_exponent=args.beta_exp,
        epochs=args.epochs,
        repetitions=args.reps,
        master_seed=args.seed,
        eval=EvalSpec(args.eval_perturbations, args.eval_seed, args.max_pairs),
        iterate_averaging=args.iterate_averaging,
        base_eta=args.base_eta,
        out_prefix=args.out,
        jobs=args.jobs,
        record_timing=args.timing,
    )
    train_set = load_libsvm(args.data)
    test_set = load_libsvm(args.test, expected_dim=train_set.dim) if args.test else None
    for a in config.algorithms:
        b = memory_report(a, train_set.n, train_set.dim, config.iterate_averaging)
        print(f"{a}: {b} bytes of extra storage (n={train_set.n}, d={train_set.dim})")
    records = run_experiment(config, train_set, test_set)
    print(f"wrote {len(records)} rows to {args.out}.csv and {args.out}.summary.json")
    return 0


def cmd_verify(args):
    from .verification import run_all

    results = run_all(args.only, out=sys.stdout)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def cmd_meminfo(args):
    b = memory_report(args.algo, args.n, args.d, args.iterate_averaging)
    print(f"{args.algo}: {b} bytes ({b / 2**20:.2f} MiB) beyond sgd")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"train": cmd_train, "verify": cmd_verify, "meminfo": cmd_meminfo}[args.command]
    try:
        return handler(args)
    except (ParseError, TaskConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
