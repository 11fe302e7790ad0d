"""Command line interface: ``gazelift <subcommand> ...``."""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import torch

from .. import scenes
from ..diffusion import AGGREGATIONS, HypothesisSet, save_hypotheses
from ..errors import GazeLiftError
from ..model import ModelConfig, load_checkpoint, save_checkpoint
from .ablate import DISTANCES, VARIANTS, ablate
from .evaluate import baseline_fixed_bias, baseline_frontal_gaze, evaluate, record_seed, sample_records
from .report import EvalReport, plot_report
from .train import TrainConfig, train

log = logging.getLogger("gazelift")

MODEL_FLAGS = ("d", "L", "C", "grid", "K", "heads", "dce_heads", "ffn_mult")


def _add_train_flags(p):
    d = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", type=f.type, default=getattr(d, f.name))
    m = ModelConfig()
    for name in MODEL_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", type=int, default=getattr(m, name),
                       help="model width option")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    p.add_argument("--config", help="key=value file; its entries override command line flags")


def _configs(args):
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(TrainConfig)}
    mvals = {name: getattr(args, name) for name in MODEL_FLAGS}
    variant = args.variant
    if args.config:
        override = scenes.parse_key_values(Path(args.config).read_text())
        tkeys = {f.name for f in dataclasses.fields(TrainConfig)}
        for k, v in override.items():
            if k in tkeys:
                values[k] = v
            elif k in MODEL_FLAGS:
                mvals[k] = v
            elif k == "variant":
                variant = v
            else:
                raise ValueError(f"unknown config key {k!r}")
    tc = TrainConfig.from_mapping(values)
    mc = ModelConfig.from_mapping(dict(mvals, T=tc.T, **VARIANTS[variant]))
    return tc, mc


def _records(data, split):
    recs = scenes.load_dataset(data)
    return recs if split == "all" else scenes.load_split(data, split, recs)


def cmd_generate_data(args):
    cfg = scenes.SceneConfig.load(args.config) if args.config else scenes.SceneConfig()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    recs = scenes.generate_dataset(args.n, args.seed, cfg, args.out)
    print(f"wrote {len(recs)} records to {args.out}")


def cmd_train(args):
    tc, mc = _configs(args)
    recs = _records(args.data, "train")
    if args.threads:
        torch.set_num_threads(args.threads)
    res = train(recs, tc, mc, progress=lambda e, l: print(f"epoch {e:3d}  loss {l:.6f}", flush=True))
    meta = {f"train_{k}": v for k, v in tc.to_dict().items()}
    save_checkpoint(args.out, res.model, meta)
    log_path = Path(args.loss_log or Path(args.out).with_suffix(".loss.csv"))
    log_path.write_text("step,loss\n" + "".join(f"{i},{l!r}\n" for i, l in enumerate(res.losses)))
    print(f"checkpoint {args.out}  loss log {log_path}  ({res.seconds:.0f} s)")


def cmd_sample(args):
    model, _ = load_checkpoint(args.checkpoint)
    recs = _records(args.data, args.split)
    hyp = sample_records(model, recs, args.H, args.N, args.seed)
    sets = [HypothesisSet(hyp[i], record_seed(args.seed, r.id), args.N, r.id) for i, r in enumerate(recs)]
    save_hypotheses(args.out, sets, {"H": args.H, "N": args.N, "seed": args.seed, "units": "m"})
    print(f"wrote {len(sets)} hypothesis sets to {args.out}")


def cmd_eval(args):
    model, _ = load_checkpoint(args.checkpoint)
    recs = _records(args.data, args.split)
    rep = evaluate(model, recs, args.H, args.N, modes=args.modes, seed=args.seed)
    if args.baselines:
        rep.merge(baseline_fixed_bias(_records(args.data, "train"), recs))
        rep.merge(baseline_frontal_gaze(recs))
    print(rep.table())
    if args.out:
        rep.to_csv(args.out)
        rep.save_samples(Path(args.out).with_suffix(".samples.csv"))


def _grid(text):
    cells = []
    for tok in text.split(","):
        h, n = tok.lower().split("x")
        cells.append((int(h), int(n)))
    return cells


def cmd_ablate(args):
    tc, mc = _configs(args)
    recs = scenes.load_dataset(args.data)
    tr = scenes.load_split(args.data, "train", recs)
    te = scenes.load_split(args.data, "test", recs)
    if args.limit_test:
        te = te[:args.limit_test]
    res = ablate(tr, te, args.variants, args.seeds, tc, mc,
                 distances=args.distances, grid=_grid(args.hn_grid) if args.hn_grid else (),
                 H=tc.H, N=tc.N, out_dir=args.out_dir)
    for r in res.rows:
        print(f"{r['kind']:<9}{r['variant']:<13}seed {r['seed']}  H={r['H']:<3}N={r['N']:<3}"
              f"dist={r['distance']:<5}MAE3D {r['mae3d']:.2f}  object {r['mae3d_object']:.2f}")


def cmd_report(args):
    rep = EvalReport()
    for path in args.samples:
        rep.merge(EvalReport.load_samples(path))
    print(rep.table())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "report.csv")
    plot_report(rep, out / f"report.{args.format}")
    print(f"wrote {out / 'report.csv'} and {out / ('report.' + args.format)}")


def build_parser():
    p = argparse.ArgumentParser(prog="gazelift", description="Joint 3D pose and gaze lifting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="write a synthetic scene dataset and split manifests")
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="scene config file (key=value)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train a denoiser on the train split")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-log")
    t.add_argument("--threads", type=int, default=0)
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in (("sample", cmd_sample, "write hypothesis sets"),
                               ("eval", cmd_eval, "evaluate a checkpoint")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--data", required=True)
        s.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
        s.add_argument("--H", type=int, default=20)
        s.add_argument("--N", type=int, default=20)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=(name == "sample"))
        if name == "eval":
            s.add_argument("--modes", nargs="+", default=list(AGGREGATIONS), choices=AGGREGATIONS)
            s.add_argument("--baselines", action="store_true", help="add fixed-bias and frontal rows")
        s.set_defaults(func=fn)

    a = sub.add_parser("ablate", help="component ablations, distance sweep and H x N grid")
    a.add_argument("--data", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--variants", nargs="+", default=["full", "no_objects", "no_diffusion", "no_context"])
    a.add_argument("--seeds", nargs="+", type=int, default=[0])
    a.add_argument("--distances", nargs="*", type=float, default=[],
                   help=f"gaze joint distances to sweep, e.g. {' '.join(map(str, DISTANCES))}")
    a.add_argument("--hn-grid", default="", help="comma separated HxN cells, e.g. 1x1,20x20")
    a.add_argument("--limit-test", type=int, default=0)
    _add_train_flags(a)
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="merge per-sample CSVs into a table and plot")
    r.add_argument("samples", nargs="+")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--format", default="png", choices=("png", "pdf", "svg"))
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (GazeLiftError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
