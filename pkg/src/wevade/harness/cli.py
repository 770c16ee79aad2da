"""Command-line interface: ``wevade <subcommand> ...``."""

import argparse
import csv
import json
import sys

import numpy as np

from ..blackbox import (
    BlackBoxConfig,
    DetectorOracle,
    hopskipjump,
    wevade_b_q,
    wevade_b_s,
)
from ..codecs.base import load_codec
from ..codecs.qim import DwtDctQimCodec, calibrate_delta
from ..codecs.training import TrainConfig, train
from ..detection import (
    BoundInputs,
    Detector,
    bound_surrogate,
    calibrate_tau,
    fpr,
)
from ..errors import DomainError, InfeasibleError, TrainingFailure
from ..imaging import load_image, save_image
from ..metrics import format_bits, parse_bits, random_watermark
from ..postprocess.tuning import KINDS, tune_to_evasion
from ..whitebox import WhiteBoxConfig, wevade_w
from .config import AttackSpec, ExperimentConfig
from .corpus import (
    TEST_STREAM,
    TRAIN_STREAM,
    SyntheticCorpus,
    ingest,
    list_images,
    write_synthetic,
)
from .experiment import config_from_manifest, emit, run_experiment


def _watermark(args, n):
    if args.watermark:
        bits = parse_bits(args.watermark)
        if bits.size != n:
            raise SystemExit(f"watermark has {bits.size} bits, codec expects {n}")
        return bits
    return random_watermark(n, np.random.default_rng(args.seed))


def _detector(args, codec):
    if args.groundtruth is None:
        raise SystemExit("--groundtruth is required to build the detector")
    gt = parse_bits(args.groundtruth)
    tau = args.tau if args.tau is not None else calibrate_tau(codec.n, args.eta, args.mode)
    return Detector(gt, tau, args.mode, codec)


def _training_images(args, count):
    if args.dataset:
        return ingest(args.dataset, count, seed=args.seed)[1]
    return SyntheticCorpus(count, seed=args.seed, stream=TRAIN_STREAM)


def cmd_train_codec(args):
    if args.kind == "qim":
        delta = args.delta
        if delta is None:
            images = list(_training_images(args, args.train_count))
            delta = calibrate_delta(images, n=args.n, seed=args.seed)
        codec = DwtDctQimCodec(n=args.n, delta=delta, key=args.key)
        codec.save(args.out)
        print(f"delta={delta}")
        return 0
    cfg = TrainConfig(n=args.n, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed, adversarial=args.adversarial)
    data = _training_images(args, args.train_count)
    holdout = list(SyntheticCorpus(args.holdout, seed=args.seed, stream=TEST_STREAM)) if args.holdout else None
    try:
        codec = train(data, cfg, holdout=holdout)
    except TrainingFailure as exc:
        exc.codec.save(args.out)
        print(f"training failure: {exc}", file=sys.stderr)
        return 2
    codec.save(args.out)
    if holdout is not None:
        print(f"holdout_ba={codec.report.holdout_ba}")
    return 0


def cmd_embed(args):
    codec = load_codec(args.codec)
    w = _watermark(args, codec.n)
    save_image(codec.embed(load_image(args.input), w), args.output)
    print(format_bits(w))
    return 0


def cmd_decode(args):
    codec = load_codec(args.codec)
    soft = codec.decode_soft(load_image(args.input))
    print(format_bits(soft > 0.5))
    if args.soft:
        print(" ".join(f"{v:.6f}" for v in soft))
    return 0


def cmd_detect(args):
    codec = load_codec(args.codec)
    v = _detector(args, codec).detect(load_image(args.input))
    print(f"{v.label}\tba={v.ba:.6f}")
    return 0


def cmd_calibrate(args):
    try:
        print(repr(calibrate_tau(args.n, args.eta, args.mode)))
    except InfeasibleError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


def cmd_attack(args):
    codec = load_codec(args.codec)
    image_w = load_image(args.input)
    if args.attack in ("w-i", "w-ii", "b-s"):
        wcfg = WhiteBoxConfig(max_iter=args.max_iter, epsilon=args.epsilon, loss=args.loss, seed=args.seed)
        if args.attack == "b-s":
            res = wevade_b_s(load_codec(args.surrogate), image_w, wcfg)
        else:
            res = wevade_w(codec, image_w, "I" if args.attack == "w-i" else "II", wcfg)
    else:
        oracle = DetectorOracle(_detector(args, codec))
        bcfg = BlackBoxConfig(max_q=args.max_q, es=args.es, seed=args.seed)
        res = (wevade_b_q if args.attack == "b-q" else hopskipjump)(oracle, image_w, bcfg)
        if args.query_log:
            with open(args.query_log, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["query", "verdict", "phase"])
                for q, verdict, phase in oracle.log:
                    writer.writerow([q, "AI-generated" if verdict else "non-AI-generated", phase])
    save_image(res.image, args.output)
    print(
        json.dumps(
            {
                "linf": res.linf,
                "l2": res.l2,
                "ssim": res.ssim,
                "constraint_satisfied": bool(res.constraint_satisfied),
                "iterations": res.iterations,
                "queries": res.queries,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_tune_baseline(args):
    codec = load_codec(args.codec)
    paths = list_images(args.dataset)[: args.count]
    images = [load_image(p) for p in paths]
    gt = parse_bits(args.groundtruth)
    detector = _detector(args, codec)
    marked = [codec.embed(img, gt) for img in images]
    try:
        res = tune_to_evasion(args.kind, detector, marked, args.target_rate, seed=args.seed)
    except InfeasibleError as exc:
        best = exc.best
        print(f"infeasible: {exc}", file=sys.stderr)
        if best is not None:
            print(json.dumps({"param": best.spec.param, "rate": best.rate, "mean_linf": best.mean_linf}))
        return 1
    print(json.dumps({"param": res.spec.param, "rate": res.rate, "mean_linf": res.mean_linf}))
    return 0


def cmd_bounds(args):
    """One row per tau; ``bound`` is the surrogate bound, which equals the
    white-box bound at the default beta = gamma = 1."""
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["n", "tau", "epsilon", "beta", "gamma", "mode", "bound", "fpr"])
    for tau in args.tau:
        try:
            f = fpr(tau, args.n, args.mode)
        except DomainError:
            f = float("nan")
        b = BoundInputs(args.n, tau, epsilon=args.epsilon, beta=args.beta, gamma=args.gamma)
        writer.writerow(
            [args.n, repr(tau), repr(args.epsilon), repr(args.beta), repr(args.gamma), args.mode,
             repr(bound_surrogate(b, args.mode)), repr(f)]
        )
    return 0


def cmd_run(args):
    if args.manifest:
        cfg = config_from_manifest(args.manifest)
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        if not args.codec:
            raise SystemExit("run needs --config, --manifest or --codec")
        cfg = ExperimentConfig(codec=args.codec)
    overrides = {}
    for key in ("codec", "output", "dataset", "samples", "seed", "workers", "surrogate", "eta"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.attack:
        overrides["attacks"] = [AttackSpec(name=a) for a in args.attack]
    if overrides:
        doc = cfg.to_dict()
        doc.update({k: ([a.__dict__ for a in v] if k == "attacks" else v) for k, v in overrides.items()})
        cfg = ExperimentConfig.from_dict(doc)
    result = run_experiment(cfg)
    paths = emit(result, cfg.output)
    for p in paths.values():
        print(p)
    return 0 if result.ok else 1


def cmd_synth(args):
    write_synthetic(args.out, args.count, seed=args.seed, stream=TEST_STREAM if args.stream == "test" else TRAIN_STREAM)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="wevade", description="Watermark embedding, detection and evasion attacks.")
    sub = p.add_subparsers(dest="command", required=True)

    def detector_flags(sp):
        sp.add_argument("--groundtruth", required=True, help="ground-truth bitstring")
        sp.add_argument("--mode", choices=("single", "double"), default="double")
        sp.add_argument("--tau", type=float, default=None, help="threshold; default: calibrated from --eta")
        sp.add_argument("--eta", type=float, default=1e-4)

    sp = sub.add_parser("train-codec", help="train a spread-spectrum codec or calibrate a QIM codec")
    sp.add_argument("--kind", choices=("spread", "qim"), default="spread")
    sp.add_argument("--n", type=int, default=30)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dataset", default=None, help="image directory; default: synthetic training stream")
    sp.add_argument("--train-count", type=int, default=10000)
    sp.add_argument("--holdout", type=int, default=200)
    sp.add_argument("--epochs", type=int, default=1)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=TrainConfig.lr)
    sp.add_argument("--adversarial", action="store_true")
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--key", type=int, default=DwtDctQimCodec(1).key)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train_codec)

    sp = sub.add_parser("embed", help="embed a watermark into an image")
    sp.add_argument("--codec", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--watermark", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("decode", help="decode the watermark of an image")
    sp.add_argument("--codec", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--soft", action="store_true", help="also print the soft bits")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("detect", help="run a single- or double-tail detector")
    sp.add_argument("--codec", required=True)
    sp.add_argument("--input", required=True)
    detector_flags(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("calibrate", help="threshold for a target false positive rate")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--eta", type=float, default=1e-4)
    sp.add_argument("--mode", choices=("single", "double"), default="double")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("attack", help="attack one watermarked image")
    sp.add_argument("--codec", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--attack", choices=("w-i", "w-ii", "b-s", "b-q", "hsj"), default="w-ii")
    sp.add_argument("--surrogate", default=None)
    sp.add_argument("--groundtruth", default=None)
    sp.add_argument("--mode", choices=("single", "double"), default="double")
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--eta", type=float, default=1e-4)
    sp.add_argument("--epsilon", type=float, default=0.01)
    sp.add_argument("--loss", default="l2")
    sp.add_argument("--max-iter", type=int, default=WhiteBoxConfig.max_iter)
    sp.add_argument("--max-q", type=int, default=BlackBoxConfig.max_q)
    sp.add_argument("--es", type=int, default=BlackBoxConfig.es)
    sp.add_argument("--query-log", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("tune-baseline", help="tune a post-processor to a target evasion rate")
    sp.add_argument("--codec", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--target-rate", type=float, required=True)
    detector_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_tune_baseline)

    sp = sub.add_parser("bounds", help="false positive rates and evasion lower bounds")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--tau", type=float, nargs="+", required=True)
    sp.add_argument("--mode", choices=("single", "double"), default="double")
    sp.add_argument("--epsilon", type=float, default=0.01)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("run", help="run a full experiment")
    sp.add_argument("--config", default=None)
    sp.add_argument("--manifest", default=None, help="re-run the configuration recorded in a manifest")
    sp.add_argument("--codec", default=None)
    sp.add_argument("--output", default=None)
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--surrogate", default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--attack", action="append", default=None)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("synth", help="write a synthetic image corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--stream", choices=("train", "test"), default="test")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
