"""Command-line entry point.

Commands: entropy, cost, gradcheck, train-toy, eval-toy, ablate. Every
output goes only to paths given by flags; reports write a matplotlib figure
next to their delimited output. Randomness funnels through one seed:
explicit --seed beats the config file, which beats the ENTROGRU_SEED
environment variable, which beats the default of 42.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

DEFAULT_SEED = 42


def _resolve_seed(args, config_seed=None):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get("ENTROGRU_SEED")
    if env is not None:
        return int(env)
    return DEFAULT_SEED


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands -----------------------------------------------------------------


def cmd_entropy(args) -> int:
    from .entropy import ie_map, local_unary_entropy, morphological_open, to_grayscale
    from .imagefile import read_pnm, write_entropy_pgm
    from .tensor_io import save_tensor

    img = read_pnm(args.input)
    gray = to_grayscale(img) if img.ndim == 3 else img
    if args.passes == 2:
        m = ie_map(gray, window=args.window, opening=not args.no_open)
    else:
        m = local_unary_entropy(gray, window=args.window)
        if not args.no_open:
            m = morphological_open(m)
    write_entropy_pgm(args.output, m, window=args.window)
    if args.raw:
        save_tensor(args.output + ".raw", m)
    print(f"entropy map {m.shape[1]}x{m.shape[0]} -> {args.output} "
          f"(max {m.max():.4f} bits)")
    return 0


def cmd_cost(args) -> int:
    from .cost import variant_comparison_report
    from .figures import save_cost_figure

    cfg = _load_json(args.config)
    rows = variant_comparison_report(args.output, cfg)
    save_cost_figure(rows, os.path.splitext(args.output)[0] + ".png")
    for r in rows:
        print(f"{r['variant']:>14}: {r['params']:>12,} params, "
              f"{r['macs']:>15,} MACs, ratio {r['ratio']:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_standard_checks

    seed = _resolve_seed(args)
    reports = run_standard_checks(tolerance=args.tolerance, seed=seed)
    ok = True
    for rep in reports:
        print(rep)
        ok = ok and rep.passed
    print(f"gradcheck: {sum(r.passed for r in reports)}/{len(reports)} ops passed "
          f"at {args.tolerance:g}")
    return 0 if ok else 1


def _train_config(args):
    from .detect.train import TrainConfig

    raw = _load_json(args.config)
    seed = _resolve_seed(args, raw.get("seed"))
    raw["seed"] = seed
    known = {f for f in TrainConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig.from_dict(raw)


def cmd_train_toy(args) -> int:
    from .detect.model import save_model
    from .detect.train import train_and_eval
    from .figures import save_eval_figure, save_loss_figure
    from .detect.data import CLASS_NAMES

    cfg = _train_config(args)
    result = train_and_eval(cfg)
    out = args.output
    os.makedirs(out, exist_ok=True)
    save_model(os.path.join(out, "model"), result["model"])
    with open(os.path.join(out, "loss.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, v in enumerate(result["losses"], start=1):
            writer.writerow([i, f"{v:.8f}"])
    save_loss_figure(result["losses"], os.path.join(out, "loss.png"))
    metrics = dict(result["metrics"])
    metrics["per_class_ap"] = {str(k): v for k, v in metrics["per_class_ap"].items()}
    _write_json(os.path.join(out, "metrics.json"), metrics)
    save_eval_figure(result["metrics"], CLASS_NAMES, os.path.join(out, "map.png"))
    _write_json(os.path.join(out, "config.json"), cfg.to_dict())
    print(f"trained {cfg.epochs} epochs; final loss {result['losses'][-1]:.4f}; "
          f"test mAP {result['metrics']['map']:.4f}; artifacts in {out}")
    return 0


def cmd_eval_toy(args) -> int:
    from .detect.data import CLASS_NAMES
    from .detect.evaluate import evaluate_map
    from .detect.model import load_model
    from .detect.train import TrainConfig, make_benchmark_data
    from .figures import save_eval_figure

    model = load_model(os.path.join(args.model, "model")
                       if os.path.isdir(os.path.join(args.model, "model"))
                       else args.model)
    cfg_path = args.config or os.path.join(args.model, "config.json")
    raw = _load_json(cfg_path if os.path.isfile(cfg_path) else None)
    if not raw:
        raise ValueError("no training config found; pass --config")
    raw["seed"] = _resolve_seed(args, raw.get("seed"))
    cfg = TrainConfig.from_dict(raw)
    _, test_seqs = make_benchmark_data(cfg)
    metrics = evaluate_map(model, test_seqs)
    print(json.dumps({"map": metrics["map"],
                      "per_class_ap": {str(k): v for k, v in
                                       metrics["per_class_ap"].items()},
                      "excluded_classes": metrics["excluded_classes"]},
                     indent=2, sort_keys=True))
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        out_metrics = dict(metrics)
        out_metrics["per_class_ap"] = {str(k): v for k, v in
                                       metrics["per_class_ap"].items()}
        _write_json(os.path.join(args.output, "metrics.json"), out_metrics)
        with open(os.path.join(args.output, "metrics.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "ap"])
            for k in sorted(metrics["per_class_ap"]):
                writer.writerow([CLASS_NAMES[k], f"{metrics['per_class_ap'][k]:.6f}"])
            writer.writerow(["mAP", f"{metrics['map']:.6f}"])
        save_eval_figure(metrics, CLASS_NAMES, os.path.join(args.output, "map.png"))
    return 0


def cmd_ablate(args) -> int:
    from .detect.ablation import run_ablation
    from .figures import save_ablation_figure

    cfg = _train_config(args)
    placements = [p.strip() for p in args.placements.split(",") if p.strip()]
    rows = run_ablation(placements, cfg, module=args.module)
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["placement", "map"])
        for r in rows:
            writer.writerow([r["placement"], f"{r['map']:.6f}"])
    save_ablation_figure(rows, os.path.splitext(args.output)[0] + ".png",
                         module=args.module)
    for r in rows:
        print(f"{r['placement']:>14}: mAP {r['map']:.4f}")
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrogru",
        description="entropy-map attention, squeezed recurrent conv cells, "
                    "cost model and a toy video-detection harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (default: config, then "
                            "ENTROGRU_SEED, then 42)")

    p = sub.add_parser("entropy", help="render an entropy map from a PGM/PPM image")
    p.add_argument("input", help="input image (binary PGM or PPM)")
    p.add_argument("-o", "--output", required=True, help="output PGM path")
    p.add_argument("--window", type=int, default=3, help="sliding window size")
    p.add_argument("--passes", type=int, choices=(1, 2), default=2,
                   help="1 = plain windowed gray entropy, 2 = pair-based map")
    p.add_argument("--no-open", action="store_true",
                   help="skip the morphological opening")
    p.add_argument("--raw", action="store_true",
                   help="also dump the raw float map next to the PGM")
    add_seed(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("cost", help="write the params/MACs comparison table")
    p.add_argument("--config", help="JSON config overriding the documented table setup")
    p.add_argument("-o", "--output", required=True, help="output CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op")
    p.add_argument("--tolerance", type=float, default=1e-5)
    add_seed(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train the toy detector on synthetic clips")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("-o", "--output", default="toy-run", help="output directory")
    add_seed(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval-toy", help="evaluate a trained toy detector")
    p.add_argument("--model", required=True, help="run directory or weight bundle")
    p.add_argument("--config", help="training config JSON (defaults to the run's)")
    p.add_argument("-o", "--output", help="directory for metrics files")
    add_seed(p)
    p.set_defaults(func=cmd_eval_toy)

    p = sub.add_parser("ablate", help="placement ablation over attachment points")
    p.add_argument("--placements", required=True,
                   help="comma-separated placements, e.g. None,stage-1,stage-4")
    p.add_argument("--module", choices=("gru", "ie"), default="gru")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("-o", "--output", required=True, help="output CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
