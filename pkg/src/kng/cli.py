"""Command line interface.

Exit codes: 0 success, 1 usage or validation problem, 2 I/O or file-format
problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    MetricUndefinedError,
    NumericError,
    StateError,
    ValidationError,
)
from .harness import SessionPlan, aggregate_repeats, run_sessions, evaluate_once
from .model import (
    KngConfig,
    init_model,
    load_model,
    model_from_bytes,
    model_to_bytes,
    save_model,
)
from .rng import MASK64
from .scoring import ScoreConfig, image_score, score_map
from .synth import SynthSpec, generate_synthetic
from .tensor_io import load_manifest, read_tensor, write_tensor
from .model import prepare_features


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; the contract wants 1
        raise _Usage(message)


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def _build_parser() -> _Parser:
    p = _Parser(prog="kng", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ambient-dim", type=int, default=100)
    sp.add_argument("--grid", type=_size, default=(14, 14))
    sp.add_argument("--n-train", type=int, default=10)
    sp.add_argument("--n-sessions", type=int, default=20)
    sp.add_argument("--session-size", type=int, default=50)
    sp.add_argument("--anomaly-ratio", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)

    ip = sub.add_parser("init", help="build a model from a training manifest")
    ip.add_argument("--train", required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--k", type=int, required=True)
    ip.add_argument("--dim", type=int, default=100)
    ip.add_argument("--epochs", type=int, default=10)
    ip.add_argument("--age-max", type=int, default=25)
    ip.add_argument("--epsilon", type=float, default=0.01)
    ip.add_argument("--threshold-mode", default="mean",
                    choices=["min", "mean", "max", "none"])
    ip.add_argument("--batch-size", type=int, default=10)
    ip.add_argument("--seed", type=int, default=0)

    cp = sub.add_parser("score", help="score one feature tensor")
    cp.add_argument("--model", required=True)
    cp.add_argument("--features", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--sigma", type=float, default=4.0)
    cp.add_argument("--target-size", type=_size, default=None)

    st = sub.add_parser("stream", help="run the session protocol on a stream")
    st.add_argument("--model", required=True)
    st.add_argument("--manifest", required=True)
    st.add_argument("--mode", default="online", choices=["online", "offline"])
    st.add_argument("--report", default=None)
    st.add_argument("--session-size", type=int, default=50)
    st.add_argument("--batch-size", type=int, default=None,
                    help="defaults to the model's configured batch size")
    st.add_argument("--shuffle-seed", type=int, default=0)
    st.add_argument("--sigma", type=float, default=4.0)
    st.add_argument("--target-size", type=_size, default=None)
    st.add_argument("--fpr-limit", type=float, default=0.3)
    st.add_argument("--repeats", type=int, default=1)
    st.add_argument("--save-model", default=None)

    ev = sub.add_parser("eval", help="single-pass evaluation, no updates")
    ev.add_argument("--model", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--report", default=None)
    ev.add_argument("--sigma", type=float, default=4.0)
    ev.add_argument("--target-size", type=_size, default=None)
    ev.add_argument("--fpr-limit", type=float, default=0.3)

    ins = sub.add_parser("inspect", help="dump model stats as JSON")
    ins.add_argument("--model", required=True)
    return p


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _cmd_synth(args) -> int:
    spec = SynthSpec(ambient_dim=args.ambient_dim, grid=args.grid,
                     n_train=args.n_train, n_sessions=args.n_sessions,
                     session_size=args.session_size,
                     anomaly_ratio=args.anomaly_ratio, seed=args.seed)
    train, stream = generate_synthetic(spec, args.out)
    print(train)
    print(stream)
    return 0


def _cmd_init(args) -> int:
    cfg = KngConfig(k=args.k, dim=args.dim, epochs=args.epochs,
                    age_max=args.age_max, epsilon=args.epsilon,
                    threshold_mode=args.threshold_mode,
                    batch_size=args.batch_size, seed=args.seed)
    items = load_manifest(args.train)
    bad = [it.id for it in items if it.label == "anomalous"]
    if bad:
        raise ValidationError(
            f"training manifest contains anomalous items: {bad[:5]}")
    tensors = [read_tensor(it.features) for it in items]
    model = init_model(tensors, cfg)
    save_model(model, args.out)
    print(args.out)
    return 0


def _cmd_score(args) -> int:
    model = load_model(args.model)
    feats = read_tensor(args.features)
    if feats.ndim != 3:
        raise ValidationError(f"{args.features}: features must be rank 3")
    feats = prepare_features(model, feats)
    cfg = ScoreConfig(sigma=args.sigma, target_size=args.target_size)
    m = score_map(model, feats, cfg)
    write_tensor(m, args.out)
    print(json.dumps({"image_score": image_score(m)}))
    return 0


def _cmd_stream(args) -> int:
    if args.repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {args.repeats}")
    if args.save_model and args.repeats != 1:
        raise ValidationError("--save-model only makes sense with --repeats 1")
    base = load_model(args.model)
    items = load_manifest(args.manifest)
    cfg = ScoreConfig(sigma=args.sigma, target_size=args.target_size)
    batch_size = args.batch_size or base.config.batch_size
    blob = model_to_bytes(base)

    reports = []
    model = base
    for r in range(args.repeats):
        if args.repeats > 1:
            model = model_from_bytes(blob)
        plan = SessionPlan(shuffle_seed=(args.shuffle_seed + r) & MASK64,
                           session_size=args.session_size,
                           batch_size=batch_size, mode=args.mode)
        reports.append(run_sessions(model, items, plan, cfg, args.fpr_limit))
    doc = reports[0] if args.repeats == 1 else aggregate_repeats(reports)
    _emit(doc, args.report)
    if args.save_model:
        save_model(model, args.save_model)
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    items = load_manifest(args.manifest)
    cfg = ScoreConfig(sigma=args.sigma, target_size=args.target_size)
    _emit(evaluate_once(model, items, cfg, args.fpr_limit), args.report)
    return 0


def _cmd_inspect(args) -> int:
    from .harness import model_hash

    model = load_model(args.model)
    t = model.thresholds
    finite = t[np.isfinite(t)]
    doc = {
        "config": {
            "k": model.config.k, "dim": model.config.dim,
            "epochs": model.config.epochs, "age_max": model.config.age_max,
            "epsilon": model.config.epsilon,
            "threshold_mode": model.config.threshold_mode,
            "batch_size": model.config.batch_size, "seed": model.config.seed,
        },
        "selection": {
            "source_dim": model.selection.source_dim,
            "target_dim": model.selection.target_dim,
            "seed": model.selection.seed,
        },
        "counts": {
            "total": int(model.counts.sum()),
            "min": int(model.counts.min()),
            "max": int(model.counts.max()),
            "empty_neurons": int((model.counts == 0).sum()),
        },
        "graph": {
            "edges": len(model.graph.edges),
            "event_counter": model.graph.event_counter,
        },
        "thresholds": {
            "finite": len(finite),
            "infinite": int(len(t) - len(finite)),
            "min": float(finite.min()) if len(finite) else None,
            "mean": float(finite.mean()) if len(finite) else None,
            "max": float(finite.max()) if len(finite) else None,
        },
        "hash": model_hash(model),
    }
    _emit(doc, None)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "init": _cmd_init,
    "score": _cmd_score,
    "stream": _cmd_stream,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, StateError, NumericError, MetricUndefinedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
