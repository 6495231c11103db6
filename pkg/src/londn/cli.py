"""Command-line interface.

Every subcommand takes ``--config`` (a RunConfig JSON file), ``--set
section.key=value`` overrides and ``--seed``; explicit flags win over both.
Exit status is 0 on success, 1 for usage and configuration errors and 2
when the command itself fails.
"""
import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .algorithm import londn_reconstruct
from .config import ConfigError, RunConfig, desk_config, load_config
from .data_model import FormatError, read_complex, read_mask, write_complex, write_mask, write_text_atomic
from .denoiser import load_weights, save_weights
from .experiments import (
    mask_digest,
    noise_rng,
    random_masks,
    run_desk,
    run_varying_mask,
    simulate_scan,
    scan_mask,
    train_global,
)
from .metrics import evaluate
from .mri_forward import adjoint
from .neighbors import NeighborSet, knn, nma
from .phantom import MaskSpec, default_center_lines, gen_dataset, gen_heldout, gen_mask, load_dataset, save_dataset
from .unrolled import reconstruct

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args, base=None):
    """Config file, then ``--set`` overrides, then ``--seed``."""
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = base if base is not None else RunConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = _parse_value(value)
    if args.seed is not None:
        overrides.update({"seed": args.seed, "londn.seed": args.seed, "mask.seed": args.seed})
    return cfg.with_overrides(overrides) if overrides else cfg


def _echo(cfg, directory):
    write_text_atomic(Path(directory) / "run_config.json", cfg.to_json())


def _require_dir(path, what):
    if path is None:
        raise UsageError(f"no {what} given")
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _log(args):
    if args.quiet:
        return None
    return lambda msg: print(msg, file=sys.stderr, flush=True)


def cmd_config(args):
    sys.stdout.write(resolve_config(args).to_json())


def cmd_gen_data(args):
    cfg = resolve_config(args)
    out = Path(args.out or cfg.paths.output or "dataset")
    train, labels = gen_dataset(cfg.phantom, cfg.seed)
    held, held_labels = gen_heldout(cfg.phantom, cfg.seed)
    meta = save_dataset(out, cfg.phantom, cfg.seed, train, labels, held, held_labels)
    _echo(cfg, out)
    print(f"wrote {len(meta['samples'])} samples in {meta['n_clusters']} clusters "
          f"and {len(meta['heldout'])} held-out scans to {out}")


def cmd_gen_mask(args):
    cfg = resolve_config(args)
    accel = cfg.mask.accel if args.accel is None else args.accel
    width = cfg.mask.width if args.width is None else args.width
    if args.center is not None:
        center = args.center
    elif args.accel is None and args.width is None:
        center = cfg.mask.center_lines
    else:
        center = default_center_lines(width, accel)
    spec = MaskSpec(accel=accel, center_lines=center, width=width, seed=cfg.mask.seed)
    mask = gen_mask(spec, height=args.height or width)
    write_mask(args.out, mask)
    print(f"wrote {args.out}: {mask.n_sampled} of {width} columns sampled, {center} center lines")


def _load_dataset(args, cfg):
    root = _require_dir(args.dataset or cfg.paths.dataset, "dataset")
    return load_dataset(root)


def _check_mask_shape(mask, shape):
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match images {shape}")


def cmd_train_global(args):
    cfg = resolve_config(args)
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.batch is not None:
        cfg = replace(cfg, train=replace(cfg.train, batch=args.batch))
    _, train_set, _ = _load_dataset(args, cfg)
    shape = train_set[0][0].shape
    if args.mask == "random":
        spec = replace(cfg.mask, width=shape[1])
        masks = random_masks(spec, len(train_set), cfg.seed, height=shape[0])
    elif args.mask.startswith("fixed:"):
        mask = read_mask(args.mask[len("fixed:"):])
        _check_mask_shape(mask, shape)
        masks = [mask] * len(train_set)
    else:
        raise UsageError(f"--mask must be 'random' or 'fixed:<path>', got {args.mask!r}")
    out = Path(args.out_weights or cfg.paths.weights or "weights")
    out.mkdir(parents=True, exist_ok=True)
    params, losses = train_global(train_set, masks, cfg, out / "loss.csv", _log(args))
    save_weights(out, params, cfg.denoiser)
    lines = ["index,mask"] + [f"{i},{mask_digest(m)}" for i, m in enumerate(masks)]
    write_text_atomic(out / "masks.csv", "\n".join(lines) + "\n")
    _echo(cfg, out)
    print(f"trained {cfg.train.epochs} epochs on {len(train_set)} pairs; final loss "
          f"{losses[-1] if losses else float('nan'):.6g}; weights in {out}")


def _parse_indices(text, n):
    if text in (None, "all"):
        return list(range(n))
    idx = []
    for part in text.split(","):
        a, sep, b = part.partition("-")
        idx += list(range(int(a), int(b) + 1)) if sep else [int(a)]
    bad = [i for i in idx if not 0 <= i < n]
    if bad:
        raise UsageError(f"test indices {bad} out of range (dataset has {n} held-out scans)")
    return idx


def _recon_one(job):
    i, method, gt, smaps, mask, train_set, params, cfg = job
    ksp, model = simulate_scan(gt, smaps, mask, cfg.noise_std, noise_rng(cfg.seed, cfg.noise_std, i))
    trace = {"method": method, "test_index": i, "mask": mask_digest(mask)}
    if method == "zero-filled":
        x = adjoint(model, ksp)
    elif method == "global":
        x = reconstruct(params, cfg.denoiser, cfg.unroll, model, ksp)
    else:
        lcfg = replace(cfg.londn, oracle=(method == "oracle"))
        x, _, tr = londn_reconstruct(
            ksp, model, train_set, lcfg, cfg.denoiser, cfg.unroll, init=params,
            gt=gt if method == "oracle" else None,
        )
        trace.update(tr.to_dict())
    return i, x, trace


def cmd_reconstruct(args):
    cfg = resolve_config(args)
    lc = cfg.londn
    if args.k is not None:
        lc = replace(lc, k=args.k)
    if args.S is not None:
        lc = replace(lc, S=args.S)
    if args.epochs is not None:
        lc = replace(lc, epochs=args.epochs)
    cfg = replace(cfg, londn=lc)
    _, train_set, heldout = _load_dataset(args, cfg)
    if not heldout:
        raise ValueError("dataset has no held-out scans")
    indices = _parse_indices(args.test_index, len(heldout))
    shape = heldout[0][0].shape

    weights = args.weights or cfg.paths.weights
    params = None
    if weights is not None:
        params, wcfg = load_weights(_require_dir(weights, "weights directory"))
        cfg = replace(cfg, denoiser=wcfg)
    elif args.method == "global":
        raise UsageError("--method global needs --weights")

    mask_arg = args.mask or "random"
    if mask_arg == "random":
        spec = replace(cfg.mask, width=shape[1])
        masks = {i: scan_mask(spec, cfg.seed, i, shape[0]) for i in indices}
    else:
        mask = read_mask(mask_arg)
        _check_mask_shape(mask, shape)
        masks = {i: mask for i in indices}

    out = Path(args.out or cfg.paths.output or "recon")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, args.method, heldout[i][0], heldout[i][1], masks[i], train_set, params, cfg) for i in indices]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_recon_one, jobs))
    else:
        results = [_recon_one(j) for j in jobs]
    for i, x, trace in results:
        write_complex(out / f"recon_{i:05d}", x)
        write_text_atomic(out / f"trace_{i:05d}.json", json.dumps(trace, indent=2) + "\n")
    _echo(cfg, out)
    print(f"{args.method}: reconstructed {len(results)} scans into {out}")


def _recon_files(directory):
    d = _require_dir(directory, "recon directory")
    files = sorted(d.glob("recon_*.hdr"))
    if not files:
        raise ValueError(f"no recon_*.hdr files in {d}")
    return [(int(f.stem.split("_")[1]), f.with_suffix("")) for f in files]


def cmd_eval(args):
    cfg = resolve_config(args)
    _require_dir(args.dataset or cfg.paths.dataset, "dataset")
    files = _recon_files(args.recon_dir)
    _, _, heldout = _load_dataset(args, cfg)
    rows, reports = [], []
    for idx, stem in files:
        if idx >= len(heldout):
            raise ValueError(f"{stem} has no matching held-out scan")
        r = evaluate(read_complex(stem)[0], heldout[idx][0])
        reports.append(r)
        rows.append(f"{idx},{r.psnr_db:.6f},{r.ssim:.6f},{r.hfen:.6f}")
    mean = [np.mean([getattr(r, f) for r in reports]) for f in ("psnr_db", "ssim", "hfen")]
    rows.append("mean," + ",".join(f"{v:.6f}" for v in mean))
    text = "image_id,psnr,ssim,hfen\n" + "\n".join(rows) + "\n"
    if args.out_csv:
        write_text_atomic(args.out_csv, text)
    print(f"mean over {len(reports)} scans: PSNR {mean[0]:.3f} dB, SSIM {mean[1]:.4f}, HFEN {mean[2]:.4f}")


def cmd_nma(args):
    cfg = resolve_config(args)
    _require_dir(args.dataset or cfg.paths.dataset, "dataset")
    d = _require_dir(args.trace_dir, "trace directory")
    traces = []
    for f in sorted(d.glob("trace_*.json")):
        t = json.loads(f.read_text())
        if t.get("alternations"):
            traces.append(t)
    if not traces:
        raise ValueError(f"no neighbor traces in {d}")
    _, train_set, heldout = _load_dataset(args, cfg)
    gallery = np.array([g for g, _ in train_set])
    per_search = {}
    for t in traces:
        k = args.k or t["k"]
        metric = args.metric or t["metric"]
        oracle = knn(heldout[t["test_index"]][0], gallery, k, metric)
        sets = [NeighborSet(a["indices"], a["distances"]) for a in t["alternations"]]
        if t.get("final_search"):
            sets.append(NeighborSet(t["final_search"]["indices"], t["final_search"]["distances"]))
        for s, ns in enumerate(sets):
            if ns.k != k:
                ns = NeighborSet(ns.indices[:k], ns.distances[:k])
            per_search.setdefault(s, ([], []))
            per_search[s][0].append(ns)
            per_search[s][1].append(oracle)
    lines = ["search,n_scans,nma"]
    for s in sorted(per_search):
        found, orc = per_search[s]
        value = nma(found, orc, found[0].k)
        label = "initial" if s == 0 else f"after alternation {s}"
        print(f"search {s} ({label}): NMA {value:.2f}% over {len(found)} scans")
        lines.append(f"{s},{len(found)},{value:.6f}")
    if args.out_csv:
        write_text_atomic(args.out_csv, "\n".join(lines) + "\n")


def cmd_experiment(args):
    cfg = resolve_config(args, base=desk_config())
    out = Path(args.out or cfg.paths.output or "experiment")
    log = _log(args)
    if args.which == "desk":
        res = run_desk(cfg, out, jobs=args.jobs, log=log)
        summary = res.summary
    else:
        summary, _ = run_varying_mask(cfg, out, jobs=args.jobs, log=log)
    _echo(cfg, out)
    for method, value in summary.items():
        print(f"{method}: mean PSNR {value:.3f} dB")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. londn.k=10 (repeatable)")
    common.add_argument("--seed", type=int, help="seed for data, masks and training")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers over test scans")
    common.add_argument("--quiet", action="store_true", help="no progress messages")

    parser = _Parser(prog="londn", description="Local neighbor training for unrolled MRI reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", parents=[common], help="print the resolved configuration")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("gen-data", parents=[common], help="generate the clustered phantom dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-mask", parents=[common], help="generate a Cartesian sampling mask")
    p.add_argument("--accel", type=float)
    p.add_argument("--center", type=int, help="center lines (default: scaled from the width)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int, help="rows (default: width)")
    p.add_argument("--out", required=True, help="output .msk file")
    p.set_defaults(func=cmd_gen_mask)

    p = sub.add_parser("train-global", parents=[common], help="train on the whole dataset")
    p.add_argument("--dataset")
    p.add_argument("--mask", required=True, help="'fixed:<path.msk>' or 'random'")
    p.add_argument("--out-weights")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.set_defaults(func=cmd_train_global)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct held-out scans")
    p.add_argument("--method", required=True, choices=["zero-filled", "global", "londn", "oracle"])
    p.add_argument("--dataset")
    p.add_argument("--test-index", help="index, list (0,3), range (0-4) or 'all' (default)")
    p.add_argument("--mask", help="path to a .msk file or 'random' (one mask per scan)")
    p.add_argument("--weights", help="weights directory (required for global, warm start otherwise)")
    p.add_argument("--out")
    p.add_argument("--k", type=int)
    p.add_argument("--S", type=int)
    p.add_argument("--epochs", type=int, help="local epochs per alternation")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM/HFEN of reconstructions")
    p.add_argument("--recon-dir", required=True)
    p.add_argument("--dataset")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nma", parents=[common], help="neighbor-matching accuracy per alternation")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--dataset")
    p.add_argument("--k", type=int)
    p.add_argument("--metric", choices=["L1", "L2", "NCC"])
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_nma)

    p = sub.add_parser("experiment", parents=[common], help="run a desk-scale comparison")
    p.add_argument("which", choices=["desk", "varying-mask"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"londn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, FormatError, KeyError, RuntimeError) as exc:
        print(f"londn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
