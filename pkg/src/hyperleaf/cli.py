"""``hyperleaf`` command line interface.

Subcommands: gen-data, degrade, train, infer, mix, eval, pipeline.  Every
failure ends with a single ``error_code: message`` line on stderr and a
nonzero exit status.
"""
import argparse
import logging
import os
import sys
from dataclasses import asdict

from . import config as cfgmod
from .deadleaves import GenConfig, generate_dataset, load_manifest
from .degrade import PsfConfig, bicubic_upsample_baseline, degrade_pair
from .errors import ConfigError, HyperleafError
from .htf import load_tensor, save_tensor
from .metrics import evaluate
from .mix import reconstruct_hr
from .srnet import NetArch, TrainConfig, infer, latest_checkpoint, load_checkpoint, train
from .tensor import AbundanceMap, check_endmembers, validate_abundance

log = logging.getLogger("hyperleaf")


class UsageError(HyperleafError):
    code = "usage_error"


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _workers() -> int:
    raw = os.environ.get("HYPERLEAF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"HYPERLEAF_THREADS must be an integer, got {raw!r}")


def _header(name, seed):
    log.info("hyperleaf %s seed=%d", name, 0 if seed is None else seed)


def _load_values(path):
    if path and not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    return cfgmod.read_config(path) if path else {}


def _gen_configs(values, seed):
    gen = cfgmod.build(GenConfig, cfgmod.section(values, "gen"), "gen", seed=seed)
    psf = cfgmod.build(PsfConfig, cfgmod.section(values, "psf"), "psf")
    return gen, psf


def _n_images(values, override=None):
    if override is not None:
        return override
    raw = values.get("data.n_images", "1")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"bad value for data.n_images: {raw!r}")


def cmd_gen_data(args):
    values = _load_values(args.config)
    gen, psf = _gen_configs(values, args.seed)
    _header("gen-data", gen.seed)
    n = _n_images(values, args.n_images)
    manifest = generate_dataset(gen, n, psf, args.out, workers=_workers())
    print(os.path.join(args.out, "manifest.txt"))
    return manifest


def cmd_degrade(args):
    _header("degrade", args.seed)
    psf = PsfConfig(sigma=args.sigma, truncation=args.truncation, factor=args.factor,
                    method=args.method)
    x = load_tensor(args.input)
    if args.abundance:
        x = AbundanceMap(x, normalized=True)
    out = degrade_pair(x, psf)
    save_tensor(out, args.output)


def _train_configs(args):
    values = _load_values(args.arch_config)
    if args.train_config and args.train_config != args.arch_config:
        values.update(_load_values(args.train_config))
    arch = cfgmod.build(NetArch, cfgmod.section(values, "arch"), "arch")
    tcfg = cfgmod.build(TrainConfig, cfgmod.section(values, "train"), "train",
                        seed=args.seed, epochs=args.epochs)
    return arch, tcfg


def cmd_train(args):
    arch, tcfg = _train_configs(args)
    _header("train", tcfg.seed)
    manifest = load_manifest(args.manifest)
    resume = args.resume
    if resume == "latest":
        resume = latest_checkpoint(args.ckpt_dir)
    os.makedirs(args.ckpt_dir, exist_ok=True)
    train(manifest, arch, tcfg, ckpt_dir=args.ckpt_dir, resume=resume,
          log_path=os.path.join(args.ckpt_dir, "train_log.csv"))


def _resolve_ckpt(path):
    if os.path.exists(os.path.join(path, "index.txt")):
        return path
    latest = latest_checkpoint(path)
    if latest is None:
        raise ConfigError(f"no checkpoint found in {path}")
    return latest


def cmd_infer(args):
    _header("infer", args.seed)
    params, _, arch, _ = load_checkpoint(_resolve_ckpt(args.ckpt))
    a_lr = AbundanceMap(load_tensor(args.input), normalized=True)
    save_tensor(infer(params, arch, a_lr, tile=args.tile), args.output)


def cmd_mix(args):
    _header("mix", args.seed)
    s = check_endmembers(load_tensor(args.endmembers))
    save_tensor(reconstruct_hr(s, load_tensor(args.abundances)), args.output)


def cmd_eval(args):
    _header("eval", args.seed)
    report = evaluate(load_tensor(args.ref), load_tensor(args.est), ratio=args.ratio,
                      peak=args.peak, csv_path=args.report)
    print(f"mpsnr={report.mpsnr:.4f} msam={report.msam:.4f} mergas={report.mergas:.4f}")


PIPELINE_KEYS = ("work_dir", "lr_abundance", "endmembers", "reference", "n_train", "standardize")


def _pipeline_plan(values, seed):
    pipe = cfgmod.section(values, "pipeline")
    for key in pipe:
        if key not in PIPELINE_KEYS:
            raise ConfigError(f"unknown key pipeline.{key}")
    missing = [k for k in PIPELINE_KEYS[:4] if k not in pipe]
    if missing:
        raise ConfigError(f"missing pipeline keys: {', '.join('pipeline.' + k for k in missing)}")
    gen, psf = _gen_configs(values, seed)
    arch = cfgmod.build(NetArch, cfgmod.section(values, "arch"), "arch")
    tcfg = cfgmod.build(TrainConfig, cfgmod.section(values, "train"), "train", seed=seed)
    if psf.factor != arch.scale:
        raise ConfigError(f"psf.factor={psf.factor} differs from arch.scale={arch.scale}")
    work = pipe["work_dir"]
    return {
        "gen": gen, "psf": psf, "arch": arch, "train": tcfg,
        "n_train": int(pipe.get("n_train", values.get("data.n_images", "100"))),
        "lr_abundance": pipe["lr_abundance"], "endmembers": pipe["endmembers"],
        "reference": pipe["reference"], "work_dir": work,
        "standardize": cfgmod._convert(bool, pipe.get("standardize", "true"), "pipeline.standardize"),
        "data_dir": os.path.join(work, "data"), "ckpt_dir": os.path.join(work, "ckpt"),
        "a_hr": os.path.join(work, "a_hr.htf"), "hsi_hr": os.path.join(work, "hsi_hr.htf"),
        "summary": os.path.join(work, "summary.csv"),
    }


def cmd_pipeline(args):
    values = _load_values(args.config)
    plan = _pipeline_plan(values, args.seed)
    _header("pipeline", plan["gen"].seed)
    steps = [
        f"gen-data: {plan['n_train']} pairs {asdict(plan['gen'])} -> {plan['data_dir']}",
        f"train: {asdict(plan['arch'])} {asdict(plan['train'])} -> {plan['ckpt_dir']}",
        f"infer: {plan['lr_abundance']} -> {plan['a_hr']}",
        f"mix: {plan['endmembers']} x {plan['a_hr']} -> {plan['hsi_hr']}",
        f"eval: {plan['reference']} vs {plan['hsi_hr']} (and bicubic) -> {plan['summary']}"
        + (" [standardized to [0, 1]]" if plan["standardize"] else ""),
    ]
    if args.dry_run:
        for k, step in enumerate(steps, 1):
            print(f"{k}. {step}")
        return None
    os.makedirs(plan["ckpt_dir"], exist_ok=True)
    manifest = generate_dataset(plan["gen"], plan["n_train"], plan["psf"], plan["data_dir"],
                                workers=_workers())
    params, _ = train(manifest, plan["arch"], plan["train"], ckpt_dir=plan["ckpt_dir"],
                      log_path=os.path.join(plan["ckpt_dir"], "train_log.csv"))
    a_lr = AbundanceMap(load_tensor(plan["lr_abundance"]), normalized=True)
    report = validate_abundance(a_lr)
    if not report.anc_ok:
        raise ConfigError(f"{plan['lr_abundance']} has negative abundances")
    a_hr = infer(params, plan["arch"], a_lr)
    save_tensor(a_hr, plan["a_hr"])
    s = check_endmembers(load_tensor(plan["endmembers"]))
    ref = load_tensor(plan["reference"])
    peak = float(ref.max())
    if plan["standardize"] and peak > 1.0:
        # metrics assume [0, 1] data; mixing is linear so S carries the scale
        log.info("standardizing reference and endmembers by 1/%g", peak)
        ref, s = ref / peak, s / peak
    hsi = reconstruct_hr(s, a_hr)
    save_tensor(hsi, plan["hsi_hr"])
    ratio = 1.0 / plan["arch"].scale
    bic = reconstruct_hr(s, bicubic_upsample_baseline(a_lr, plan["arch"].scale))
    rows = {"bicubic": evaluate(ref, bic, ratio), "rdn-dl": evaluate(ref, hsi, ratio)}
    write_summary(plan["summary"], rows)
    for name, r in rows.items():
        print(f"{name}: mpsnr={r.mpsnr:.4f} msam={r.msam:.4f} mergas={r.mergas:.4f}")
    return rows


def write_summary(path, rows):
    """Table layout: one row per metric, one column per method."""
    names = list(rows)
    lines = ["metric," + ",".join(names)]
    for metric in ("mpsnr", "msam", "mergas"):
        lines.append(metric + "," + ",".join(repr(getattr(rows[n], metric)) for n in names))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def build_parser():
    parser = _Parser(prog="hyperleaf", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None,
                       help="seed for every random draw (overrides config files)")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate synthetic HR/LR abundance pairs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int, default=None)

    p = add("degrade", cmd_degrade, "blur and downsample one tensor")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sigma", type=float, default=4.0)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--truncation", type=float, default=6.0)
    p.add_argument("--method", choices=("bicubic", "decimate"), default="bicubic")
    p.add_argument("--abundance", action="store_true",
                   help="treat input as an abundance map and renormalize the output")

    p = add("train", cmd_train, "train the super-resolution network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch-config", default=None)
    p.add_argument("--train-config", default=None)
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint dir, or 'latest'")

    p = add("infer", cmd_infer, "super-resolve a low-resolution abundance map")
    p.add_argument("--ckpt", required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--tile", type=int, default=64)

    p = add("mix", cmd_mix, "mix endmembers (L, N, 1) with abundances (N, H, W)")
    p.add_argument("endmembers")
    p.add_argument("abundances")
    p.add_argument("output")

    p = add("eval", cmd_eval, "compare two cubes with mPSNR, SAM and ERGAS")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--ratio", type=float, default=0.25)
    p.add_argument("--peak", default="fixed:1.0")
    p.add_argument("--report", default=None)

    p = add("pipeline", cmd_pipeline, "gen-data, train, infer, mix and eval in one go")
    p.add_argument("--config", required=True)
    p.add_argument("--dry-run", action="store_true")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not log.handlers:
            handler = _StderrHandler()
            handler.setFormatter(logging.Formatter("%(message)s"))
            log.addHandler(handler)
            log.propagate = False
        log.setLevel(logging.WARNING if args.quiet else logging.INFO)
        args.func(args)
    except HyperleafError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except OSError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
