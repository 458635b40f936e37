"""``lapmo`` command line: laplacian, gradcheck, eval, synth, train, ablate, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .gradcheck import LOSSES, gradcheck
from .harness import AblationConfig, AblationResult, make_pairs, run_ablation, train
from .laplacian import LaplacianVariant, diff_coords, motion_laplacian
from .losses import LossConfig, LossMode
from .metrics import METRICS, aggregate_reports, evaluate_pair
from .motion import MotionSequence, load_motion
from .report import table_rows, to_markdown
from .synth import Projection, SynthConfig, load_corpus, write_corpus
from .tcn import AdamConfig, NetworkSpec, NetworkState, TrainingDiverged, save_checkpoint

METRIC_TITLES = {"mpjpe": "MPJPE (mm)", "mpjve": "MPJVE (mm/frame)", "mpjacce": "MPJAccE (mm/frame^2)"}


def _fail(msg: str, code: int = 2) -> int:
    print(f"lapmo: {msg}", file=sys.stderr)
    return code


def cmd_laplacian(args) -> int:
    seq = load_motion(args.motion)
    if not isinstance(seq, MotionSequence):
        return _fail(f"{args.motion}: need 3D frames")
    L = motion_laplacian(seq.skeleton, seq.T, LaplacianVariant.parse(args.variant))
    text = json.dumps(diff_coords(L, seq).tolist()) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    res = gradcheck(args.loss, args.trials, args.seed, threshold=args.threshold)
    print(f"loss={res.loss} trials={res.trials} max_rel_error={res.max_rel_error:.3e}")
    print("PASS" if res.passed else "FAIL", f"(threshold {res.threshold:g})")
    return 0 if res.passed else 1


def _motion_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {p.name: p for p in sorted(path.glob("*.json")) if p.name != "manifest.json"}
    return {path.name: path}


def _eval_one(gt_path: Path, est_path: Path):
    gts, ests = _motion_files(gt_path), _motion_files(est_path)
    if gt_path.is_file() and est_path.is_file():
        pairs = [(gts[gt_path.name], ests[est_path.name])]
    else:
        missing = sorted(set(gts) - set(ests))
        if missing:
            raise ValueError(f"{est_path}: no estimate for {missing[:5]}")
        pairs = [(gts[n], ests[n]) for n in gts]
    reports = []
    for g, e in pairs:
        gt, est = load_motion(g), load_motion(e)
        reports.append(evaluate_pair(est, gt, gt.action or "all"))
    return aggregate_reports(reports)


def cmd_eval(args) -> int:
    gt = Path(args.gt)
    labels = args.label or [Path(e).stem if Path(e).is_file() else Path(e).name for e in args.est]
    if len(labels) != len(args.est):
        return _fail("give one --label per --est")
    reports = [(lab, _eval_one(gt, Path(e))) for lab, e in zip(labels, args.est)]
    out = Path(args.out)
    if out.suffix == ".csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for i, m in enumerate(METRICS):
            rows = table_rows(reports, m)
            keys = [k for k in rows[0][1] if k != "Avg"] + ["Avg"]
            if i == 0:
                w.writerow(["metric", "method"] + keys)
            for label, cols in rows:
                w.writerow([m, label] + ["" if cols[k] is None else repr(cols[k]) for k in keys])
        text = buf.getvalue()
    else:
        parts = []
        for m in METRICS:
            parts += [f"## {METRIC_TITLES[m]}", "", to_markdown(table_rows(reports, m), args.digits)]
        text = "\n".join(parts)
    out.write_text(text, encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else SynthConfig()
    manifest = write_corpus(cfg, args.count, args.out, args.test_fraction)
    print(f"wrote {manifest['count']} sequences to {args.out} (config {manifest['config_hash'][:12]})")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    noise = corpus.manifest.get("config", {}).get("noise_std_2d", 0.0)
    pairs = make_pairs(corpus.train, args.projection, args.focal, noise, seed=1)
    spec = NetworkSpec.default(pairs[0][1].J)
    state = NetworkState.init(spec, args.seed)
    loss_cfg = LossConfig(alpha=args.alpha, lam=args.lam, laplacian_variant=LaplacianVariant.parse(args.variant))
    try:
        state, loss = train(
            state, pairs, LossMode.parse(args.mode), loss_cfg, args.epochs, args.batch_size, args.seed,
            AdamConfig(lr=args.lr),
        )
    except TrainingDiverged as exc:
        return _fail(f"training diverged: {exc}", 1)
    save_checkpoint(state, args.out)
    print(f"mode={args.mode} epochs={args.epochs} steps={state.step} final_loss={loss}")
    return 0


def cmd_ablate(args) -> int:
    d = json.loads(Path(args.config).read_text())
    if args.out:
        d["output_dir"] = args.out
    cfg = AblationConfig.from_dict(d)
    if cfg.output_dir is None:
        return _fail("ablation config needs output_dir (or pass --out)")

    def progress(cell):
        if not args.quiet:
            vals = " ".join(f"{k}={cell.metric(k)}" for k in METRICS)
            print(f"[{cell.mode.value} seed {cell.seed}] {cell.status} {vals}", file=sys.stderr)

    result = run_ablation(cfg, progress)
    print(f"wrote {cfg.output_dir}; all cells finite: {result.all_finite}")
    return 0 if result.all_finite else 1


def cmd_report(args) -> int:
    src = Path(args.inp)
    result = AblationResult.from_dict(json.loads((src / "result.json").read_text()))
    out = Path(args.out)
    if out.suffix == ".csv":
        text = result.cells_csv()
    elif out.suffix == ".json":
        text = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        text = result.summary_markdown()
    out.write_text(text, encoding="utf-8")
    return 0 if result.all_finite else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lapmo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("laplacian", help="write differential coordinates of a motion as JSON")
    s.add_argument("--motion", required=True)
    s.add_argument("--variant", choices=[v.value for v in LaplacianVariant], default="comb")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_laplacian)

    s = sub.add_parser("gradcheck", help="compare loss gradients with finite differences")
    s.add_argument("--loss", choices=LOSSES, required=True)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threshold", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("eval", help="metric tables for estimates against ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--est", required=True, action="append", help="file or directory; repeat for more rows")
    s.add_argument("--label", action="append", help="row label per --est")
    s.add_argument("--out", required=True, help="report.md or report.csv")
    s.add_argument("--digits", type=int, default=2)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="write a synthetic Motion-JSON corpus")
    s.add_argument("--config", help="SynthConfig JSON (defaults if omitted)")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one network on a corpus and save a checkpoint")
    s.add_argument("--mode", choices=[m.value for m in LossMode], required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch-size", type=int, default=16)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--lam", type=float, default=1.0)
    s.add_argument("--variant", choices=[v.value for v in LaplacianVariant], default="comb")
    s.add_argument("--projection", choices=[m.value for m in Projection], default="ortho")
    s.add_argument("--focal", type=float, default=1000.0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("ablate", help="run the loss ablation described by a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override output_dir")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="render an ablation output directory")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True, help=".md summary, .csv per-cell table or .json")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
