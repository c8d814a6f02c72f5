"""Command-line driver: ``melcode {featurize,train,encode,decode,eval,sweep}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import Corruption
from .codec import decode, encode, load_model, read_codes, save_model, write_codes
from .errors import MelcodeError
from .evaluation import (
    DEFAULT_ORDER,
    analysis_resynthesis,
    interpolation_probe,
    robustness_probe,
    write_interpolation_report,
    write_report,
)
from .frontend import FrameMatrix, FrontendConfig, featurize, read_features, read_wav, write_features
from .nn import Topology, TrainConfig
from .pipeline import train_codec

log = logging.getLogger("melcode")

FEATURE_EXT = ".mlsf"
CODE_EXT = ".mlse"
MODEL_EXT = ".mlsc"
CONFIG_ENV = "MELCODE_DEFAULT_CONFIG"

REFERENCE_TOPOLOGIES = (
    "257x125x75x50",
    "257x750x50",
    "257x1000x250x50",
    "257x175x125x75x50",
    "257x200x175x125x75x50",
)


class CliError(MelcodeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def list_inputs(path, ext: str) -> list:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise CliError(f"{path}: no such file or directory")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ext and p.is_file())
    if not files:
        raise CliError(f"{path}: no input files (*{ext})")
    return files


def heldout_names(names, fraction: float) -> set:
    """Deterministic hash split: a name is held out iff its digest falls below ``fraction``."""
    held = set()
    for name in names:
        h = int(hashlib.sha256(name.encode()).hexdigest()[:8], 16) / 2 ** 32
        if h < fraction:
            held.add(name)
    return held


def read_list(path) -> list:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


def load_config_file(path) -> dict:
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _jobs_map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def write_manifest(path, args: argparse.Namespace, inputs, outputs, started: float, extra=None) -> None:
    resolved = {k: v for k, v in vars(args).items()
                if k not in ("func", "from_manifest", "argv")}
    blob = json.dumps(resolved, sort_keys=True, default=str)
    manifest = {
        "tool": "melcode",
        "tool_version": __version__,
        "command": args.command,
        "argv": getattr(args, "argv", None),
        "args": json.loads(blob),
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": args.seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {str(p): file_digest(p) for p in outputs if Path(p).exists()},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def frontend_from_args(args) -> FrontendConfig:
    fft = int(args.fft_size)
    return FrontendConfig(float(args.frame_ms), float(args.hop_ms), fft, fft // 2 + 1,
                          float(args.floor_db), not args.no_warp)


# ---------------------------------------------------------------------------
# featurize


def _featurize_one(job):
    src, dst, cfg = job
    try:
        m = featurize(read_wav(src), cfg, Path(src).stem)
        write_features(m, dst)
        return None
    except (MelcodeError, ValueError, OSError) as exc:
        return f"{src}: {exc}"


def cmd_featurize(args) -> int:
    started = time.time()
    cfg = frontend_from_args(args)
    wavs = list_inputs(args.input, ".wav")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(str(w), str(out / (w.stem + FEATURE_EXT)), cfg) for w in wavs]
    errors = [e for e in _jobs_map(_featurize_one, jobs, args.jobs) if e]
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    outputs = [j[1] for j in jobs]
    write_manifest(out / "featurize.manifest.json", args, wavs, outputs, started)
    log.info("featurized %d/%d files", len(wavs) - len(errors), len(wavs))
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# train


def _train_files(args) -> tuple:
    files = list_inputs(args.features, FEATURE_EXT)
    if args.train_list:
        wanted = set(read_list(args.train_list))
        train = [f for f in files if f.name in wanted or f.stem in wanted]
        held = [f for f in files if f not in train]
    else:
        held_names = heldout_names([f.name for f in files], float(args.heldout_fraction))
        train = [f for f in files if f.name not in held_names]
        held = [f for f in files if f.name in held_names]
    if not train:
        raise CliError("training split is empty")
    return train, held


def _train_configs(args) -> tuple:
    pre_lr = float(args.pre_lr if args.pre_lr is not None else args.lr)
    ft_lr = float(args.ft_lr if args.ft_lr is not None else args.lr)
    seed = int(args.seed)
    pre = TrainConfig(int(args.pre_batch), int(args.pre_epochs), pre_lr, seed)
    ft = TrainConfig(int(args.ft_batch), int(args.ft_epochs), ft_lr, seed + 1)
    return pre, ft, Corruption.parse(args.corruption, seed + 2)


def write_loss_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "level", "epoch", "loss"])
        for level, trace in enumerate(result.pretrain_traces):
            for epoch, loss in enumerate(trace):
                w.writerow(["pretrain", level, epoch, repr(loss)])
        for epoch, loss in enumerate(result.finetune_trace):
            w.writerow(["finetune", "", epoch, repr(loss)])


def run_train(args) -> int:
    started = time.time()
    topology = Topology.parse(args.topology)
    pre, ft, corruption = _train_configs(args)
    train, held = _train_files(args)
    mats = [read_features(f) for f in train]
    dims = {m.dim for m in mats}
    if dims != {topology.widths[0]}:
        raise CliError(f"topology {topology} needs {topology.widths[0]}-dim features, corpus has {sorted(dims)}")
    frames = np.concatenate([m.frames for m in mats]).astype(np.float64)
    model_path = Path(args.output)
    loss_path = model_path.with_suffix(".losses.csv")
    manifest_path = model_path.with_suffix(".manifest.json")
    try:
        result = train_codec(frames, topology, corruption, pre, ft, corpus_frontend(args.features),
                             corpus_label=args.label or Path(args.features).name)
        save_model(result.bundle, model_path)
        write_loss_csv(loss_path, result)
        write_manifest(manifest_path, args, train, [model_path, loss_path], started,
                       {"heldout": [f.name for f in held], "train": [f.name for f in train]})
    except BaseException:
        for p in (model_path, loss_path, manifest_path):
            if p.exists():
                p.unlink()
        raise
    log.info("trained %s on %d frames; final fine-tune loss %.6g",
             topology, frames.shape[0], result.finetune_trace[-1])
    return 0


def corpus_frontend(features) -> FrontendConfig:
    """Frontend settings recorded by ``featurize`` next to the features, else defaults."""
    path = Path(features)
    manifest = (path if path.is_dir() else path.parent) / "featurize.manifest.json"
    if not manifest.exists():
        return FrontendConfig()
    return frontend_from_args(argparse.Namespace(**json.loads(manifest.read_text())["args"]))


def cmd_train(args) -> int:
    if args.from_manifest:
        recorded = json.loads(Path(args.from_manifest).read_text())
        if recorded.get("command") != "train":
            raise CliError(f"{args.from_manifest} is not a train manifest")
        params = dict(recorded["args"])
        # "train --from-manifest M [OUTPUT]": the lone positional is the new model path
        override = args.output or args.features
        if override:
            params["output"] = override
        argv = getattr(args, "argv", None)
        args = argparse.Namespace(**params)
        args.argv = argv
        args.from_manifest = None
        args.func = cmd_train
    elif not (args.features and args.output):
        raise CliError("train needs FEATURES and OUTPUT (or --from-manifest)")
    return run_train(args)


# ---------------------------------------------------------------------------
# encode / decode


def _convert(args, ext_in, ext_out, fn) -> int:
    started = time.time()
    bundle = load_model(args.model)
    files = list_inputs(args.input, ext_in)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    failures, outputs = 0, []
    for f in files:
        dst = out / (f.stem + ext_out)
        try:
            fn(bundle, f, dst)
            outputs.append(dst)
        except (MelcodeError, ValueError) as exc:
            failures += 1
            print(f"error: {f}: {exc}", file=sys.stderr)
    write_manifest(out / f"{args.command}.manifest.json", args, [Path(args.model)] + files, outputs, started)
    return 1 if failures else 0


def _encode_file(bundle, src, dst):
    m = read_features(src)
    write_codes(encode(bundle, m), dst, m.source_id)


def _decode_file(bundle, src, dst):
    c = read_codes(src)
    write_features(decode(bundle, c.frames, c.source_id), dst)


def cmd_encode(args) -> int:
    return _convert(args, FEATURE_EXT, CODE_EXT, _encode_file)


def cmd_decode(args) -> int:
    return _convert(args, CODE_EXT, FEATURE_EXT, _decode_file)


# ---------------------------------------------------------------------------
# eval


def load_corpus(path, names=None) -> list:
    files = list_inputs(path, FEATURE_EXT)
    if names:
        wanted = set(names)
        files = [f for f in files if f.name in wanted or f.stem in wanted]
    return [read_features(f) for f in files], files


def cmd_eval(args) -> int:
    started = time.time()
    bundle = load_model(args.model)
    names = read_list(args.files) if args.files else None
    corpus, files = load_corpus(args.features, names)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus_label = args.label or Path(args.features).name
    trained_on = bundle.meta.get("corpus", "")
    title_suffix = f" (model trained on {trained_on!r}, evaluated on {corpus_label!r})"
    if args.probe == "resynth":
        report = analysis_resynthesis(bundle, corpus, args.order)
        outputs = write_report(report, out, "Analysis-resynthesis MCD" + title_suffix)
        print(f"corpus mean MCD: {report.corpus_mean:.4f} dB over {report.total_frames} frames")
    elif args.probe == "robustness":
        corruption = Corruption.parse(args.corruption, args.seed)
        report = robustness_probe(bundle, corpus, corruption, args.order)
        outputs = write_report(report, out, f"Robustness MCD under {corruption}" + title_suffix)
        print(f"corpus mean MCD: {report.corpus_mean:.4f} dB (degradation {report.degradation:+.4f} dB)")
    else:
        report = interpolation_probe(bundle, corpus, args.pairs, args.seed)
        outputs = write_interpolation_report(report, out)
        print(json.dumps(report.summary()))
    write_manifest(out.with_suffix(".manifest.json"), args, [Path(args.model)] + files, outputs, started,
                   {"model_corpus": trained_on, "eval_corpus": corpus_label})
    return 0


# ---------------------------------------------------------------------------
# sweep


SWEEP_KEYS = {
    "topologies", "train", "heldout", "corruption", "pre_batch", "pre_epochs", "ft_batch",
    "ft_epochs", "lr", "pre_lr", "ft_lr", "order", "seed",
}


def parse_sweep_spec(path=None, **overrides) -> dict:
    spec = {
        "topologies": ",".join(REFERENCE_TOPOLOGIES),
        "corruption": "mask:0.3",
        "pre_batch": "20", "pre_epochs": "50", "ft_batch": "100", "ft_epochs": "100",
        "lr": "0.01", "pre_lr": None, "ft_lr": None,
        "order": str(DEFAULT_ORDER), "seed": "0", "train": None, "heldout": None,
    }
    if path:
        loaded = load_config_file(path)
        unknown = set(loaded) - SWEEP_KEYS
        if unknown:
            raise CliError(f"{path}: unknown sweep keys {sorted(unknown)}")
        spec.update(loaded)
    spec.update({k: v for k, v in overrides.items() if v is not None})
    topologies = [t.strip() for t in spec["topologies"].replace(";", ",").split(",") if t.strip()]
    if not topologies:
        raise CliError("sweep spec lists no topologies")
    spec["topologies"] = [Topology.parse(t) for t in topologies]
    if not spec["train"] or not spec["heldout"]:
        raise CliError("sweep needs train and heldout corpus paths")
    return spec


def _sweep_one(job):
    topo, spec = job
    try:
        args = argparse.Namespace(pre_lr=spec["pre_lr"], ft_lr=spec["ft_lr"], lr=spec["lr"],
                                  seed=spec["seed"], pre_batch=spec["pre_batch"],
                                  pre_epochs=spec["pre_epochs"], ft_batch=spec["ft_batch"],
                                  ft_epochs=spec["ft_epochs"], corruption=spec["corruption"])
        pre, ft, corruption = _train_configs(args)
        train_mats, _ = load_corpus(spec["train"])
        held, _ = load_corpus(spec["heldout"])
        frames = np.concatenate([m.frames for m in train_mats]).astype(np.float64)
        result = train_codec(frames, topo, corruption, pre, ft, corpus_frontend(spec["train"]),
                             corpus_label=str(spec["train"]))
        report = analysis_resynthesis(result.bundle, held, int(spec["order"]))
        return {"topology": str(topo), "levels": len(topo.widths), "mcd_db": report.corpus_mean,
                "final_loss": result.finetune_trace[-1], "status": "ok"}
    except (MelcodeError, ValueError, ArithmeticError) as exc:
        return {"topology": str(topo), "levels": len(topo.widths), "mcd_db": float("nan"),
                "final_loss": float("nan"), "status": f"failed: {exc}"}


def depth_width_trend(rows) -> list:
    """Plain-language comparison of deeper vs shallower and wider vs narrower rows."""
    ok = [r for r in rows if r["status"] == "ok"]
    lines = []
    if not ok:
        return ["no successful runs"]
    by_depth = {}
    for r in ok:
        by_depth.setdefault(r["levels"], []).append(r)
    depths = sorted(by_depth)
    if len(depths) > 1:
        shallow = min(by_depth[depths[0]], key=lambda r: r["mcd_db"])
        deep = min(by_depth[depths[-1]], key=lambda r: r["mcd_db"])
        better = "deeper" if deep["mcd_db"] < shallow["mcd_db"] else "shallower"
        lines.append(
            f"depth: best {depths[-1]}-level {deep['topology']} {deep['mcd_db']:.4f} dB vs best "
            f"{depths[0]}-level {shallow['topology']} {shallow['mcd_db']:.4f} dB -> {better} is better"
        )
    for d in depths:
        group = by_depth[d]
        if len(group) > 1:
            group = sorted(group, key=lambda r: sum(Topology.parse(r["topology"]).widths))
            narrow, wide = group[0], group[-1]
            better = "wider" if wide["mcd_db"] < narrow["mcd_db"] else "narrower"
            lines.append(
                f"width at {d} levels: {wide['topology']} {wide['mcd_db']:.4f} dB vs "
                f"{narrow['topology']} {narrow['mcd_db']:.4f} dB -> {better} is better"
            )
    return lines or ["single depth and width; no trend to report"]


def run_sweep(spec: dict, jobs: int = 1) -> list:
    rows = _jobs_map(_sweep_one, [(t, spec) for t in spec["topologies"]], jobs)
    return sorted(rows, key=lambda r: (np.isnan(r["mcd_db"]), r["mcd_db"], r["topology"]))


def cmd_sweep(args) -> int:
    started = time.time()
    spec = parse_sweep_spec(args.spec, train=args.train, heldout=args.heldout)
    rows = run_sweep(spec, args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trend = depth_width_trend(rows)
    lines = ["SDA structure sweep (analysis-resynthesis MCD on held-out data)", ""]
    lines.append(f"{'topology':<28} {'levels':>6} {'mcd_db':>9} {'ft_loss':>10}  status")
    for r in rows:
        lines.append(f"{r['topology']:<28} {r['levels']:>6d} {r['mcd_db']:>9.4f} "
                     f"{r['final_loss']:>10.5g}  {r['status']}")
    lines += ["", "trend:"] + [f"  {t}" for t in trend]
    text = "\n".join(lines) + "\n"
    out.with_suffix(".txt").write_text(text)
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["topology", "levels", "mcd_db", "final_loss", "status"])
        for r in rows:
            w.writerow([r["topology"], r["levels"], repr(r["mcd_db"]), repr(r["final_loss"]), r["status"]])
    print(text, end="")
    inputs = list_inputs(spec["train"], FEATURE_EXT) + list_inputs(spec["heldout"], FEATURE_EXT)
    if args.spec:
        inputs.append(Path(args.spec))
    write_manifest(out.with_suffix(".manifest.json"), args, inputs,
                   [out.with_suffix(".txt"), out.with_suffix(".csv")], started, {"trend": trend})
    return 0 if all(r["status"] == "ok" for r in rows) else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="melcode", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--version", action="version", version=f"melcode {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("featurize", help="WAV file or directory -> Mel log-spectral feature files")
    f.add_argument("input")
    f.add_argument("output")
    f.add_argument("--frame-ms", type=float, default=25.0)
    f.add_argument("--hop-ms", type=float, default=5.0)
    f.add_argument("--fft-size", type=int, default=512)
    f.add_argument("--floor-db", type=float, default=-20.0)
    f.add_argument("--no-warp", action="store_true", help="keep the linear-frequency grid")
    f.set_defaults(func=cmd_featurize)

    t = sub.add_parser("train", help="pretrain, fine-tune and split a codec")
    t.add_argument("features", nargs="?")
    t.add_argument("output", nargs="?")
    t.add_argument("--topology", default="257x125x75x50")
    t.add_argument("--corruption", default="mask:0.3")
    t.add_argument("--pre-batch", type=int, default=20)
    t.add_argument("--pre-epochs", type=int, default=50)
    t.add_argument("--ft-batch", type=int, default=100)
    t.add_argument("--ft-epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--pre-lr", type=float, default=None)
    t.add_argument("--ft-lr", type=float, default=None)
    t.add_argument("--heldout-fraction", type=float, default=0.1)
    t.add_argument("--train-list", default=None, help="file naming the training utterances")
    t.add_argument("--label", default=None, help="corpus label recorded in the model")
    t.add_argument("--from-manifest", default=None, help="re-run a recorded training run")
    t.set_defaults(func=cmd_train)

    for name, fn, what in (("encode", cmd_encode, "features -> codes"),
                           ("decode", cmd_decode, "codes -> features")):
        c = sub.add_parser(name, help=what)
        c.add_argument("model")
        c.add_argument("input")
        c.add_argument("output")
        c.set_defaults(func=fn)

    e = sub.add_parser("eval", help="analysis-resynthesis, robustness or interpolation probe")
    e.add_argument("model")
    e.add_argument("features")
    e.add_argument("--probe", choices=("resynth", "robustness", "interpolation"), default="resynth")
    e.add_argument("--corruption", default="mask:0.3")
    e.add_argument("--order", type=int, default=DEFAULT_ORDER)
    e.add_argument("--pairs", type=int, default=100)
    e.add_argument("--files", default=None, help="file naming the utterances to evaluate")
    e.add_argument("--label", default=None, help="label of the evaluated corpus")
    e.add_argument("--out", default="report")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train and evaluate one codec per topology")
    s.add_argument("spec", nargs="?", help="key=value sweep spec (defaults to the five reference structures)")
    s.add_argument("--train", default=None)
    s.add_argument("--heldout", default=None)
    s.add_argument("--out", default="sweep")
    s.set_defaults(func=cmd_sweep)
    return p


def _apply_config_defaults(parser: argparse.ArgumentParser) -> None:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return
    values = load_config_file(path)
    parser.set_defaults(**{k: v for k, v in values.items() if k in ("seed", "jobs", "verbose")})
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            known = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in values.items() if k in known})


def main(argv=None) -> int:
    parser = build_parser()
    _apply_config_defaults(parser)
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    args.seed, args.jobs, args.verbose = int(args.seed), int(args.jobs), int(args.verbose)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MelcodeError, ValueError, OSError) as exc:
        print(f"melcode {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
