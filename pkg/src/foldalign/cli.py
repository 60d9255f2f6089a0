"""``foldalign`` command-line interface.

Every command reads and writes plain files, so stages can be chained by path:

    simulate -> warp -> train-ae -> encode -> train-reg -> align -> evaluate
                         reconstruct -> centroid-diag        embed
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import alignreg, embed, foldnet, geometry, io, plots
from .alignreg import RegressionSpec, RegTrainConfig
from .autodiff import load_checkpoint, save_checkpoint
from .config import PROFILES, PipelineConfig, load_config
from .foldnet import DecoderSpec, EncoderSpec, TrainConfig
from .geometry import EmbryoSimSpec
from .io import FormatError
from .warp import WarpFamily, WarpSpec, apply_warp

log = logging.getLogger("foldalign")


class CliError(Exception):
    pass


def _cfg(args) -> PipelineConfig:
    return load_config(args.config, profile=args.profile, seed=args.seed)


def _path(value, default) -> Path:
    return Path(value) if value else Path(default)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _ae_meta(cfg: PipelineConfig, trace) -> dict:
    return {
        "kind": "autoencoder",
        "encoder": io.to_jsonable(cfg.encoder),
        "decoder": io.to_jsonable(cfg.decoder),
        "train": io.to_jsonable(cfg.train),
        "loss_trace": [float(v) for v in trace],
    }


def _load_ae(path: Path):
    params, meta = load_checkpoint(_require(path.with_suffix(".json"), "autoencoder checkpoint"))
    if meta.get("kind") != "autoencoder":
        raise CliError(f"{path} is not an autoencoder checkpoint")
    enc = io.load_dataclass(EncoderSpec, meta["encoder"])
    dec = io.load_dataclass(DecoderSpec, meta["decoder"])
    train = io.load_dataclass(TrainConfig, meta["train"])
    return params, enc, dec, train


def _write_trace(out_stem: Path, trace, title: str) -> None:
    epochs = list(range(1, len(trace) + 1))
    io.write_table(out_stem.with_name(out_stem.name + "_loss.csv"), ["epoch", "loss"],
                   [(e, float(v)) for e, v in zip(epochs, trace)])
    plots.line_svg(out_stem.with_name(out_stem.name + "_loss.svg"), {"loss": (epochs, trace)},
                   title=title, xlabel="epoch", ylabel="loss")


# --- commands -------------------------------------------------------------

def cmd_simulate(args, cfg: PipelineConfig) -> None:
    spec = cfg.sim
    if args.spec:
        data = json.loads(_require(Path(args.spec), "simulator spec").read_text())
        spec = io.load_dataclass(EmbryoSimSpec, data)
    out = _path(args.out, Path(cfg.paths.data_dir) / "reference")
    series = geometry.simulate_embryo(spec)
    io.write_series(series, out)
    io.dump_json(spec, out / "sim_spec.json")
    print(f"wrote {len(series)} frames to {out}")


def _warp_specs(args, cfg: PipelineConfig) -> list[WarpSpec]:
    if args.spec:
        data = json.loads(_require(Path(args.spec), "warp spec").read_text())
        items = data if isinstance(data, list) else [data]
        return [io.load_dataclass(WarpSpec, d) for d in items]
    specs = list(cfg.warps) or [WarpSpec(family=f, rng_seed=cfg.rng_seed) for f in WarpFamily]
    if args.family:
        fam = WarpFamily.parse(args.family)
        specs = [s for s in specs if s.family is fam] or [WarpSpec(family=fam, rng_seed=cfg.rng_seed)]
    return specs


def cmd_warp(args, cfg: PipelineConfig) -> None:
    ref_dir = _require(_path(_first(args.inp), Path(cfg.paths.data_dir) / "reference"), "reference series")
    reference = io.read_series(ref_dir)
    out = _path(args.out, Path(cfg.paths.data_dir) / "warped")
    for spec in _warp_specs(args, cfg):
        warped = apply_warp(reference, spec)
        d = out / spec.family.value.lower()
        io.write_series(warped.frames, d)
        io.write_ground_truth(d / "ground_truth.csv", warped.ground_truth)
        io.dump_json(spec, d / "warp_spec.json")
        print(f"{spec.family.value}: wrote {len(warped.frames)} frames to {d}")


def cmd_train_ae(args, cfg: PipelineConfig) -> None:
    inputs = args.inp or [str(Path(cfg.paths.data_dir) / "reference")]
    series = [io.read_series(_require(Path(p), "training series")) for p in inputs]
    train = cfg.train
    if args.loss:
        train = replace(train, loss=args.loss)
    if args.epochs:
        train = replace(train, epochs=args.epochs)
    cfg = replace(cfg, train=train)
    out = _path(args.out, Path(cfg.paths.checkpoint_dir) / "autoencoder")
    out.parent.mkdir(parents=True, exist_ok=True)
    params, trace = foldnet.train_autoencoder(series, cfg.encoder, cfg.decoder, train)
    save_checkpoint(params, out, meta=_ae_meta(cfg, trace))
    _write_trace(out, trace, f"autoencoder ({train.loss.upper()}) loss")
    print(f"trained {train.epochs} epochs, final loss {trace[-1]:.6g}; checkpoint {out.with_suffix('.json')}")


def _transform(args):
    if not (args.center or args.rotate):
        return None
    rng_angles = None
    if args.rotate:
        rng_angles = np.random.default_rng([args.seed or 0, 0xA1])

    def apply(cloud):
        if rng_angles is not None:
            cloud = geometry.rotate(cloud, geometry.random_rotation_angles(rng_angles, args.rotate))
        if args.center:
            cloud = geometry.center(cloud)
        return cloud

    return apply


def cmd_encode(args, cfg: PipelineConfig) -> None:
    series = io.read_series(_require(_path(_first(args.inp), Path(cfg.paths.data_dir) / "reference"), "series"))
    params, enc, _, train = _load_ae(_path(args.model, Path(cfg.paths.checkpoint_dir) / "autoencoder"))
    out = _path(args.out, Path(cfg.paths.output_dir) / "codewords.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    codes = foldnet.encode_series(series, enc, params, train.input_points, cfg.rng_seed, _transform(args))
    io.write_codewords(codes, out)
    print(f"wrote {len(codes)} codewords to {out}")


def cmd_reconstruct(args, cfg: PipelineConfig) -> None:
    series = io.read_series(_require(_path(_first(args.inp), Path(cfg.paths.data_dir) / "reference"), "series"))
    params, enc, dec, train = _load_ae(_path(args.model, Path(cfg.paths.checkpoint_dir) / "autoencoder"))
    out = _path(args.out, Path(cfg.paths.output_dir) / "reconstruction")
    inputs, recons = foldnet.reconstruct_series(series, enc, dec, params, train.input_points, cfg.rng_seed)
    io.write_series(geometry.SeriesFrameSet(tuple(recons), series.minutes_per_frame), out)
    if args.samples_out:
        io.write_series(geometry.SeriesFrameSet(tuple(inputs), series.minutes_per_frame), args.samples_out)
    print(f"wrote {len(recons)} reconstructions to {out}")


def cmd_train_reg(args, cfg: PipelineConfig) -> None:
    codes = io.read_codewords(_require(_path(_first(args.inp), Path(cfg.paths.output_dir) / "codewords.csv"),
                                       "reference codewords"))
    reg_cfg = cfg.reg_train if not args.epochs else replace(cfg.reg_train, epochs=args.epochs)
    out = _path(args.out, Path(cfg.paths.checkpoint_dir) / "regressor")
    out.parent.mkdir(parents=True, exist_ok=True)
    params, trace = alignreg.train_regressor(codes, cfg.regression, reg_cfg)
    meta = {
        "kind": "regressor",
        "regression": io.to_jsonable(cfg.regression),
        "reg_train": io.to_jsonable(reg_cfg),
        "reference_T": max(c.frame_index for c in codes),
        "loss_trace": [float(v) for v in trace],
    }
    save_checkpoint(params, out, meta=meta)
    _write_trace(out, trace, "regression MSE")
    print(f"trained {reg_cfg.epochs} epochs, final MSE {trace[-1]:.6g}; checkpoint {out.with_suffix('.json')}")


def cmd_align(args, cfg: PipelineConfig) -> None:
    codes = io.read_codewords(_require(_path(_first(args.inp), Path(cfg.paths.output_dir) / "query_codewords.csv"),
                                       "query codewords"))
    params, meta = load_checkpoint(_require(
        _path(args.model, Path(cfg.paths.checkpoint_dir) / "regressor").with_suffix(".json"), "regressor checkpoint"))
    if meta.get("kind") != "regressor":
        raise CliError("model is not a regressor checkpoint")
    T = int(args.reference_frames or meta["reference_T"])
    result = alignreg.predict_alignment(codes, params, T)
    gt = None
    if args.ground_truth:
        gt = io.read_ground_truth(_require(Path(args.ground_truth), "ground truth"))
        if gt.size != len(result):
            raise CliError(f"ground truth has {gt.size} rows but {len(result)} query frames")
    out = _path(args.out, Path(cfg.paths.output_dir) / "alignment.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_alignment(out, result.query_frames, result.raw, result.postprocessed, gt)
    frames = result.query_frames.tolist()
    curves = {"raw": (frames, result.raw.tolist()), "monotone": (frames, result.postprocessed.tolist())}
    if gt is not None:
        curves["ground truth"] = (frames, gt.tolist())
    plots.line_svg(out.with_suffix(".svg"), curves, title="temporal alignment",
                   xlabel="query frame", ylabel="reference frame index")
    msg = f"wrote alignment of {len(result)} frames to {out}"
    if gt is not None:
        msg += f"; error {alignreg.alignment_error(result.postprocessed, gt):.2f} frames (monotone)"
    print(msg)


def _labelled(items: list[str]) -> list[tuple[str, Path]]:
    out = []
    for item in items:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            path = item
            label = Path(item).stem
        out.append((label, Path(path)))
    return out


def evaluate_table(entries: list[tuple[str, dict]], minutes_per_frame: float) -> tuple[list[str], list[list]]:
    header = ["sequence"] + [label for label, _ in entries] + ["Average"]
    rows = []
    for col, name in (("monotone_index", "monotone"), ("raw_index", "raw")):
        errs = [alignreg.alignment_error(data[col], data["ground_truth_index"], minutes_per_frame)
                for _, data in entries]
        rows.append([name] + errs + [float(np.mean(errs))])
    return header, rows


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    if not args.inp:
        raise CliError("evaluate needs at least one --in LABEL=alignment.csv")
    entries = []
    for label, path in _labelled(args.inp):
        data = io.read_alignment(_require(path, "alignment file"))
        if "ground_truth_index" not in data:
            raise CliError(f"{path}: no ground_truth_index column")
        entries.append((label, data))
    header, rows = evaluate_table(entries, args.minutes_per_frame)
    width = max(10, *(len(h) for h in header))
    print("Average temporal alignment error (minutes)")
    print("".join(h.ljust(width) for h in header))
    for row in rows:
        print(row[0].ljust(width) + "".join(f"{v:.2f}".ljust(width) for v in row[1:]))
    if args.out:
        io.write_table(args.out, header, rows)


def cmd_embed(args, cfg: PipelineConfig) -> None:
    codes = io.read_codewords(_require(_path(_first(args.inp), Path(cfg.paths.output_dir) / "codewords.csv"),
                                       "codewords"))
    if args.method == "pca":
        res = embed.pca_embed(codes)
    else:
        perplexity = args.perplexity or min(cfg.tsne_perplexity, (len(codes) - 1) / 3)
        res = embed.tsne_embed(codes, perplexity, args.iterations or cfg.tsne_iterations, cfg.rng_seed)
    out = _path(args.out, Path(cfg.paths.output_dir) / f"embedding_{args.method}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_table(out, ["frame", "x", "y"],
                   [(int(f), float(x), float(y)) for f, (x, y) in zip(res.frame_indices, res.coords)])
    plots.scatter_svg(out.with_suffix(".svg"), res.coords[:, 0], res.coords[:, 1], res.frame_indices,
                      title=f"codewords ({res.method})", xlabel="dim 1", ylabel="dim 2")
    extra = f", KL {res.kl_divergence:.4f}" if res.kl_divergence is not None else ""
    print(f"wrote {res.method} embedding of {len(codes)} codewords to {out}{extra}")


def centroid_curves(inputs: geometry.SeriesFrameSet, recons: geometry.SeriesFrameSet) -> dict[str, np.ndarray]:
    if len(inputs) != len(recons):
        raise CliError(f"series lengths differ: {len(inputs)} vs {len(recons)}")
    ci = np.array([f.centroid() for f in inputs])
    cr = np.array([f.centroid() for f in recons])
    return {
        "frame": np.arange(1, len(inputs) + 1),
        "input_mean_x": ci[:, 0], "input_mean_y": ci[:, 1],
        "recon_mean_x": cr[:, 0], "recon_mean_y": cr[:, 1],
    }


def cmd_centroid_diag(args, cfg: PipelineConfig) -> None:
    if not args.inp or not args.recon:
        raise CliError("centroid-diag needs --in <input series> and --recon <reconstruction series>")
    inputs = io.read_series(_require(Path(args.inp[0]), "input series"))
    recons = io.read_series(_require(Path(args.recon), "reconstruction series"))
    curves = centroid_curves(inputs, recons)
    out = _path(args.out, Path(cfg.paths.output_dir) / "centroid.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = list(curves)
    io.write_table(out, cols, [[int(curves["frame"][i])] + [float(curves[c][i]) for c in cols[1:]]
                               for i in range(len(curves["frame"]))])
    frames = curves["frame"].tolist()
    panels = [
        {"input": (frames, curves["input_mean_x"].tolist()), "reconstruction": (frames, curves["recon_mean_x"].tolist())},
        {"input": (frames, curves["input_mean_y"].tolist()), "reconstruction": (frames, curves["recon_mean_y"].tolist())},
    ]
    plots.line_svg(out.with_suffix(".svg"), {}, panels=panels, title="mean x (left) / mean y (right)",
                   xlabel="frame", ylabel="mean coordinate")
    ex = float(np.mean(np.abs(curves["input_mean_x"] - curves["recon_mean_x"])))
    ey = float(np.mean(np.abs(curves["input_mean_y"] - curves["recon_mean_y"])))
    print(f"mean |dx| {ex:.4f}, mean |dy| {ey:.4f}; wrote {out}")


def cmd_pipeline(args, cfg: PipelineConfig) -> None:
    """Run every stage with default paths under ``--out`` (a working directory)."""
    root = _path(args.out, "run")
    data, ckpt, outd = root / "data", root / "checkpoints", root / "out"
    ns = lambda **kw: argparse.Namespace(**{**vars(args), "inp": None, "out": None, "spec": None, **kw})  # noqa: E731
    cmd_simulate(ns(out=str(data / "reference")), cfg)
    cmd_warp(ns(inp=[str(data / "reference")], out=str(data / "warped"), family=None), cfg)
    cmd_train_ae(ns(inp=[str(data / "reference")], out=str(ckpt / "autoencoder"), loss=None, epochs=None), cfg)
    enc_kw = dict(model=str(ckpt / "autoencoder"), center=False, rotate=0.0)
    cmd_encode(ns(inp=[str(data / "reference")], out=str(outd / "reference_codewords.csv"), **enc_kw), cfg)
    cmd_train_reg(ns(inp=[str(outd / "reference_codewords.csv")], out=str(ckpt / "regressor"), epochs=None), cfg)
    labelled = []
    for fam in WarpFamily:
        d = data / "warped" / fam.value.lower()
        codes = outd / f"{fam.value.lower()}_codewords.csv"
        cmd_encode(ns(inp=[str(d)], out=str(codes), **enc_kw), cfg)
        aligned = outd / f"{fam.value.lower()}_alignment.csv"
        cmd_align(ns(inp=[str(codes)], out=str(aligned), model=str(ckpt / "regressor"),
                     ground_truth=str(d / "ground_truth.csv"), reference_frames=None), cfg)
        labelled.append(f"{fam.value}={aligned}")
    cmd_evaluate(ns(inp=labelled, out=str(outd / "evaluation.csv"), minutes_per_frame=1.0), cfg)
    cmd_embed(ns(inp=[str(outd / "reference_codewords.csv")], out=str(outd / "embedding_tsne.csv"),
                 method="tsne", perplexity=None, iterations=None), cfg)
    cmd_reconstruct(ns(inp=[str(data / "reference")], out=str(outd / "reconstruction"),
                       model=str(ckpt / "autoencoder"), samples_out=str(outd / "samples")), cfg)
    cmd_centroid_diag(ns(inp=[str(outd / "samples")], recon=str(outd / "reconstruction"),
                         out=str(outd / "centroid.csv")), cfg)


def _first(values):
    return values[0] if values else None


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="global RNG seed (overrides every sub-config seed)")
    common.add_argument("--profile", choices=PROFILES, help="default set (paper or desk)")
    common.add_argument("--in", dest="inp", action="append", help="input path (repeatable where noted)")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="foldalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a simulated reference series")
    p.add_argument("--spec", help="simulator spec JSON (EmbryoSimSpec fields)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("warp", parents=[common], help="time-warp a reference series with ground truth")
    p.add_argument("--spec", help="warp spec JSON (object or list of WarpSpec fields)")
    p.add_argument("--family", help="only this family (Cos, Sin, Gaussian, Faster)")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("train-ae", parents=[common], help="train the autoencoder (--in repeatable)")
    p.add_argument("--loss", choices=["mcd", "cd"])
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_ae)

    for name, func, helptext in (("encode", cmd_encode, "series -> codeword CSV"),
                                 ("reconstruct", cmd_reconstruct, "series -> reconstructed series")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", help="autoencoder checkpoint (.json)")
        if name == "encode":
            p.add_argument("--center", action="store_true", help="center each sampled cloud")
            p.add_argument("--rotate", type=float, default=0.0, help="random rotation range in degrees")
        else:
            p.add_argument("--samples-out", help="also write the sampled input clouds here")
        p.set_defaults(func=func)

    p = sub.add_parser("train-reg", parents=[common], help="train the frame-index regressor")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_reg)

    p = sub.add_parser("align", parents=[common], help="align query codewords to the reference")
    p.add_argument("--model", help="regressor checkpoint (.json)")
    p.add_argument("--ground-truth", help="ground_truth.csv from warp")
    p.add_argument("--reference-frames", type=int, help="reference length T (default: from checkpoint)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("evaluate", parents=[common], help="per-family alignment error table (--in LABEL=CSV ...)")
    p.add_argument("--minutes-per-frame", type=float, default=1.0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", parents=[common], help="2-D embedding of codewords")
    p.add_argument("--method", choices=["pca", "tsne"], default="tsne")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("centroid-diag", parents=[common], help="mean x/y per frame: input vs reconstruction")
    p.add_argument("--recon", help="reconstruction series directory")
    p.set_defaults(func=cmd_centroid_diag)

    p = sub.add_parser("pipeline", parents=[common], help="run all stages into one working directory")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _cfg(args)
        args.func(args, cfg)
    except (CliError, FormatError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"foldalign {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
