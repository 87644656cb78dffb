"""Command-line interface.

Every subcommand resolves its flags into a plain config dict, executes,
and writes a run manifest (JSON) alongside its primary output so any
artifact can be re-derived byte-identically with `rerun`.

Formats: JSON for configs/manifests, CSV for numeric dumps, PNG for
images.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .contextual import AggregationForm, ContextualConfig, kernel, spcx
from .degrade import DegradationConfig, degrade
from .hpc import ToyGenerator, encode_mods, hpc_forward
from .imageio import load_png, make_rng, save_png
from .metrics import EmbeddingSet, deg, psnr, ssim, topk_accuracy
from .objective import (DiscriminatorStub, IdentityExtractor, LossWeights,
                        RandomProjectionExtractor, l_rec)
from .optimize import OptimizeConfig, optimize_image
from .pk import PkMode, pk_decompose, pk_recompose


def write_manifest(path, subcommand: str, cfg: dict) -> None:
    manifest = {"tool": "turbrestore", "version": __version__,
                "subcommand": subcommand, "config": cfg}
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _contextual_cfg(cfg: dict) -> ContextualConfig:
    return ContextualConfig(
        rate=cfg["rate"],
        mode=PkMode(cfg["mode"]),
        bandwidth=cfg["bandwidth"],
        form=AggregationForm(cfg["form"]),
        mean_shift=cfg.get("mean_shift", False),
    )


def run_pk(cfg: dict) -> int:
    img = load_png(cfg["input"])
    coll = pk_decompose(img, cfg["rate"], PkMode(cfg["mode"]))
    print(f"count={coll.count} dim={coll.dim} mode={coll.mode.value} rate={coll.rate}")
    if cfg.get("dump"):
        import os
        os.makedirs(cfg["dump"], exist_ok=True)
        h, w, c = coll.source_shape
        if coll.mode is PkMode.BLOCK:
            sub_shape = (coll.rate, coll.rate, c)
        else:
            sub_shape = (h // coll.rate, w // coll.rate, c)
        for i, vec in enumerate(coll.vectors):
            save_png(vec.reshape(sub_shape), f"{cfg['dump']}/sub_{i:04d}.png")
        write_manifest(f"{cfg['dump']}/manifest.json", "pk", cfg)
    return 0


def run_distance(cfg: dict) -> int:
    a = load_png(cfg["input_a"])
    b = load_png(cfg["input_b"])
    ccfg = _contextual_cfg(cfg)
    value = spcx(a, b, ccfg)
    print(f"{value:.12g}")
    if cfg.get("dump_kernel"):
        from .contextual import (_prepare_vectors, _cosine_distances,
                                 normalize_distances)
        d = _cosine_distances(_prepare_vectors(a, ccfg), _prepare_vectors(b, ccfg))
        mat = kernel(normalize_distances(d, ccfg.epsilon), ccfg.bandwidth)
        np.savetxt(cfg["dump_kernel"], mat, delimiter=",")
    if cfg.get("out"):
        with open(cfg["out"], "w") as f:
            json.dump({"spcx": value}, f)
            f.write("\n")
        write_manifest(cfg["out"] + ".manifest.json", "distance", cfg)
    return 0


def run_degrade(cfg: dict) -> int:
    img = load_png(cfg["input"])
    dcfg = DegradationConfig(
        elastic_alpha=cfg["alpha"], elastic_sigma=cfg["sigma"],
        blur_sigma=cfg["blur_sigma"], noise_std=cfg["noise_std"],
        seed=cfg["seed"], order=cfg["order"],
    )
    save_png(degrade(img, dcfg), cfg["output"])
    write_manifest(cfg["output"] + ".manifest.json", "degrade", cfg)
    return 0


def run_loss(cfg: dict) -> int:
    from .hpc import make_result_set
    target = load_png(cfg["target"])
    preds = [load_png(p) for p in cfg["preds"]]
    pred_set = make_result_set(preds)
    ccfg = _contextual_cfg(cfg)
    weights = LossWeights(adv=cfg["lambda_adv"], per=cfg["lambda_per"],
                          id=cfg["lambda_id"])
    if cfg["extractor"] == "identity":
        phi = eta = IdentityExtractor()
    else:
        phi = RandomProjectionExtractor(target.shape, seed=cfg["feat_seed"])
        eta = RandomProjectionExtractor(target.shape, seed=cfg["feat_seed"] + 1)
    disc = DiscriminatorStub(target.shape, seed=cfg["disc_seed"])
    _, breakdown = l_rec(pred_set, target, ccfg, weights, phi, eta, disc)
    out_json = json.dumps(breakdown, sort_keys=True)
    print(out_json)
    if cfg.get("out"):
        with open(cfg["out"], "w") as f:
            f.write(out_json + "\n")
        write_manifest(cfg["out"] + ".manifest.json", "loss", cfg)
    return 0


def run_optimize(cfg: dict) -> int:
    target = load_png(cfg["target"])
    if cfg["init"] == "random":
        rng = make_rng(cfg["seed"])
        init = rng.uniform(0.0, 1.0, size=target.shape)
    else:
        init = load_png(cfg["init_path"])
    oc = OptimizeConfig(
        loss=cfg["loss"], steps=cfg["steps"], step_size=cfg["lr"],
        contextual=_contextual_cfg(cfg) if cfg["loss"] == "spcx" else None,
        log_every=cfg["log_every"],
    )
    final, trace = optimize_image(init, target, oc)
    save_png(final, cfg["out"])
    if cfg.get("trace"):
        with open(cfg["trace"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "loss"])
            w.writerows(trace)
    write_manifest(cfg["out"] + ".manifest.json", "optimize", cfg)
    print(f"final_loss={trace[-1][1]:.12g}")
    return 0


def run_generate(cfg: dict) -> int:
    import os
    os.makedirs(cfg["out_dir"], exist_ok=True)
    gen = ToyGenerator(g=cfg["g"], seed=cfg["seed"])
    latent_rng = make_rng(cfg["latent_seed"])
    latent = latent_rng.normal(0.0, 1.0, size=gen.latent_dim)
    feat = latent_rng.normal(0.0, 1.0, size=gen.latent_dim)
    mods = encode_mods(feat, cfg["g"], gen.channels, seed=cfg["seed"])
    result = hpc_forward(gen, latent, mods)
    for i, out in enumerate(result.outputs):
        save_png(out, f"{cfg['out_dir']}/pseudo_{i:02d}.png")
    save_png(result.mean_image, f"{cfg['out_dir']}/mean.png")
    var = result.uncertainty.mean(axis=2)
    span = var.max() - var.min()
    shown = (var - var.min()) / span if span > 0 else np.zeros_like(var)
    save_png(shown[:, :, None], f"{cfg['out_dir']}/uncertainty.png")
    np.savetxt(f"{cfg['out_dir']}/uncertainty.csv", var, delimiter=",")
    write_manifest(f"{cfg['out_dir']}/manifest.json", "generate", cfg)
    print(f"wrote {len(result.outputs)} outputs to {cfg['out_dir']}")
    return 0


def run_metrics(cfg: dict) -> int:
    ref = load_png(cfg["ref"])
    test = load_png(cfg["test"])
    row = {"psnr": psnr(ref, test), "ssim": ssim(ref, test)}
    print(f"psnr={row['psnr']:.6f} ssim={row['ssim']:.6f}")
    if cfg.get("out"):
        with open(cfg["out"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["psnr", "ssim"])
            w.writerow([f"{row['psnr']:.12g}", f"{row['ssim']:.12g}"])
        write_manifest(cfg["out"] + ".manifest.json", "metrics", cfg)
    return 0


def load_embeddings(path) -> EmbeddingSet:
    """CSV rows: label,v1,...,vD."""
    labels, vectors = [], []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            labels.append(row[0])
            vectors.append([float(v) for v in row[1:]])
    return EmbeddingSet(tuple(labels), np.array(vectors, dtype=np.float64))


def run_verify(cfg: dict) -> int:
    probes = load_embeddings(cfg["probes"])
    gallery = load_embeddings(cfg["gallery"])
    strict = cfg.get("strict", True)
    gallery_by_label = {lab: vec for lab, vec in zip(gallery.labels, gallery.vectors)}
    degs = [deg(v, gallery_by_label[lab])
            for lab, v in zip(probes.labels, probes.vectors)
            if lab in gallery_by_label]
    row = {
        "top1": topk_accuracy(probes, gallery, 1, strict=strict),
        "top3": topk_accuracy(probes, gallery, 3, strict=strict),
        "top5": topk_accuracy(probes, gallery, 5, strict=strict),
        "mean_deg": sum(degs) / len(degs) if degs else 0.0,
    }
    print(json.dumps(row, sort_keys=True))
    if cfg.get("out"):
        with open(cfg["out"], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["top1", "top3", "top5", "mean_deg"])
            w.writerow([f"{row[k]:.12g}" for k in ("top1", "top3", "top5", "mean_deg")])
        write_manifest(cfg["out"] + ".manifest.json", "verify", cfg)
    return 0


def run_selftest(cfg: dict) -> int:
    checks = []
    rng = make_rng(1234)
    img = rng.uniform(0.0, 1.0, size=(16, 16, 3))

    coll = pk_decompose(img, 4, PkMode.BLOCK)
    checks.append(("pk roundtrip bit-exact",
                   np.array_equal(pk_recompose(coll), img)))

    d = np.abs(rng.uniform(0.0, 2.0, size=(6, 6)))
    a = kernel(d, 0.2)
    checks.append(("kernel rows sum to 1",
                   np.allclose(a.sum(axis=1), 1.0, atol=1e-9)))

    ccfg = ContextualConfig(rate=4)
    checks.append(("spcx self-distance small", spcx(img, img, ccfg) <= 0.05))

    dcfg = DegradationConfig(elastic_alpha=2.0, elastic_sigma=2.0,
                             blur_sigma=1.0, noise_std=0.01, seed=7)
    checks.append(("degrade deterministic",
                   np.array_equal(degrade(img, dcfg), degrade(img, dcfg))))
    checks.append(("degrade identity at zero params",
                   np.array_equal(degrade(img, DegradationConfig()), img)))

    checks.append(("psnr self cap", psnr(img, img) == 100.0))
    checks.append(("ssim self unity", abs(ssim(img, img) - 1.0) <= 1e-9))

    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok = ok and passed
    print(f"{sum(p for _, p in checks)}/{len(checks)} checks passed")
    return 0 if ok else 1


RUNNERS = {
    "pk": run_pk,
    "distance": run_distance,
    "degrade": run_degrade,
    "loss": run_loss,
    "optimize": run_optimize,
    "generate": run_generate,
    "metrics": run_metrics,
    "verify": run_verify,
    "selftest": run_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="turbrestore",
        description="Sub-image contextual distances, turbulence degradation, "
                    "multi-output generation, and restoration metrics.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_contextual_flags(sp, rate_default=None):
        sp.add_argument("--rate", type=int, required=rate_default is None,
                        default=rate_default,
                        help="sub-image rate r (32 for 512x512 inputs)")
        sp.add_argument("--mode", choices=["block", "phase"], default="block",
                        help="decomposition reading (default block)")
        sp.add_argument("--form", choices=["max", "sum"], default="max",
                        help="aggregation form (default max; sum is constant)")
        sp.add_argument("--bandwidth", type=float, default=0.2,
                        help="kernel bandwidth h (default 0.2)")
        sp.add_argument("--mean-shift", action="store_true",
                        help="subtract each collection's mean vector first")

    sp = sub.add_parser("pk", help="decompose an image into sub-images")
    sp.add_argument("--input", required=True)
    sp.add_argument("--rate", type=int, required=True)
    sp.add_argument("--mode", choices=["block", "phase"], default="block")
    sp.add_argument("--dump", help="directory for per-sub-image PNGs")

    sp = sub.add_parser("distance", help="sub-image contextual distance")
    sp.add_argument("--input-a", required=True)
    sp.add_argument("--input-b", required=True)
    add_contextual_flags(sp)
    sp.add_argument("--dump-kernel", help="CSV path for the kernel matrix A")
    sp.add_argument("--out", help="JSON output path (manifest written beside it)")

    sp = sub.add_parser("degrade", help="turbulence-style degradation")
    sp.add_argument("--config", help="JSON config file with these flag keys")
    sp.add_argument("--alpha", type=float, default=34.0,
                    help="elastic displacement magnitude, pixels (default 34 "
                         "for 512x512; scale with image size)")
    sp.add_argument("--sigma", type=float, default=4.0,
                    help="elastic field smoothing std (default 4)")
    sp.add_argument("--blur-sigma", type=float, default=3.0,
                    help="PSF Gaussian std (default 3)")
    sp.add_argument("--noise-std", type=float, default=0.01,
                    help="additive noise std (default 0.01)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--order", choices=["blur-warp", "warp-blur"],
                    default="blur-warp")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)

    sp = sub.add_parser("loss", help="composite reconstruction loss breakdown")
    sp.add_argument("--target", required=True)
    sp.add_argument("--pred", action="append", required=True, dest="preds",
                    help="predicted image (repeatable)")
    add_contextual_flags(sp)
    sp.add_argument("--lambda-adv", type=float, default=1.0,
                    help="adversarial weight (default 1)")
    sp.add_argument("--lambda-per", type=float, default=0.1,
                    help="perceptual weight (default 0.1)")
    sp.add_argument("--lambda-id", type=float, default=10.0,
                    help="identity weight (default 10)")
    sp.add_argument("--extractor", choices=["identity", "randproj"],
                    default="identity")
    sp.add_argument("--feat-seed", type=int, default=0)
    sp.add_argument("--disc-seed", type=int, default=0)
    sp.add_argument("--out", help="JSON output path")

    sp = sub.add_parser("optimize", help="pixel-space restoration by descent")
    sp.add_argument("--loss", choices=["spcx", "l2"], default="spcx")
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--lr", type=float, default=1.0)
    add_contextual_flags(sp, rate_default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init", choices=["random", "input"], default="random")
    sp.add_argument("--init-path", help="PNG init when --init input")
    sp.add_argument("--log-every", type=int, default=10)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", help="CSV path for the loss trace")

    sp = sub.add_parser("generate", help="multi-output generation with uncertainty")
    sp.add_argument("--g", type=int, default=3,
                    help="group depth; 2^g outputs (default 3)")
    sp.add_argument("--seed", type=int, default=0, help="generator weight seed")
    sp.add_argument("--latent-seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)

    sp = sub.add_parser("metrics", help="PSNR/SSIM between two images")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out", help="CSV output path")

    sp = sub.add_parser("verify", help="top-k verification from embedding CSVs")
    sp.add_argument("--probes", required=True)
    sp.add_argument("--gallery", required=True)
    sp.add_argument("--lenient", action="store_true",
                    help="count probes missing from the gallery as misses")
    sp.add_argument("--out", help="CSV output path")

    sub.add_parser("selftest", help="run the quick property checks")

    sp = sub.add_parser("rerun", help="re-execute a run from its manifest")
    sp.add_argument("--manifest", required=True)
    return p


def _args_to_cfg(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "subcommand"}
    if args.subcommand == "degrade" and cfg.get("config"):
        with open(cfg["config"]) as f:
            file_cfg = json.load(f)
        allowed = {"alpha", "sigma", "blur_sigma", "noise_std", "seed", "order",
                   "input", "output"}
        unknown = set(file_cfg) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    if args.subcommand == "verify":
        cfg["strict"] = not cfg.pop("lenient", False)
    return cfg


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.subcommand == "rerun":
            with open(args.manifest) as f:
                manifest = json.load(f)
            sub = manifest["subcommand"]
            if sub not in RUNNERS:
                raise ValueError(f"manifest names unknown subcommand {sub!r}")
            return RUNNERS[sub](manifest["config"])
        return RUNNERS[args.subcommand](_args_to_cfg(args))
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {args.subcommand}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
