"""Command-line entry point: ``filterlearn <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error. Tables go to stdout as TSV.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import decoder, iqa, modelfile, synthdata, texture, whitening
from .imageio import ImageFormatError, load_image, sample_random_patches

IMAGE_SUFFIXES = {".ppm", ".png", ".bmp"}
log = logging.getLogger("filterlearn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _images_in(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no images (.ppm/.png/.bmp) in {directory}")
    return [load_image(p) for p in paths]


def _sample(images, per_image, side, seed):
    rng = np.random.default_rng(seed)
    return np.concatenate([sample_random_patches(im, per_image, side, rng) for im in images], axis=1)


def _training_config(args) -> decoder.TrainingConfig:
    return decoder.TrainingConfig(rho=args.rho, beta=args.beta, lam=args.lam,
                                  max_iterations=args.max_iterations)


def _tsv(rows, header):
    print("\t".join(header))
    for row in rows:
        print("\t".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))


def _load_scorer(path):
    model = modelfile.load(path)
    if isinstance(model, (iqa.UniqueModel, iqa.MsUniqueModel)):
        return model
    raise ValueError(f"{path} holds a {type(model).__name__}, not a quality model")


def cmd_train_filters(args):
    images = _images_in(args.input_dir)
    patches = _sample(images, args.patches_per_image, args.side, args.seed)
    eps = whitening.default_epsilon(args.k) if args.epsilon is None else args.epsilon
    u, chain = whitening.iterated_whiten(patches, args.k, eps)
    fs = decoder.train(u, args.h, _training_config(args), args.seed,
                       provenance={"k": args.k, "epsilon": eps, "side": args.side,
                                   "patches_per_image": args.patches_per_image})
    kind = args.kind
    if kind == "auto":
        kind = "unique" if fs.d == iqa.PATCH_DIM and args.k >= 1 else "filterset"
    obj = iqa.UniqueModel(fs, k=args.k, epsilon=eps, training_chain=chain) if kind == "unique" else fs
    modelfile.save(args.out, obj, binary=not args.text)
    rho_hat = decoder.sparsity_stats(fs, u)
    print(f"final_objective\t{fs.provenance['final_objective']:.6g}")
    print(f"mean_rho_hat\t{rho_hat.mean():.6g}")


def cmd_train_msunique(args):
    images = _images_in(args.input_dir)
    patches = _sample(images, args.patches_per_image, iqa.PATCH_SIDE, args.seed)
    h_values = [int(v) for v in args.h_values.split(",")]
    model = iqa.train_msunique(patches, h_values, args.edge_weight, args.k, args.epsilon,
                               _training_config(args), args.seed)
    modelfile.save(args.out, model, binary=not args.text)
    for fs, mask in zip(model.filter_sets, model.edge_masks):
        print(f"h={fs.h}\tfinal_objective={fs.provenance['final_objective']:.6g}\tedge_filters={int(mask.sum())}")


def cmd_train_texture(args):
    images = _images_in(args.input_dir)
    cfg = texture.TextureTrainingConfig(epsilon=args.epsilon, decoder=_training_config(args))
    model = texture.train_texture_model(images, cfg, args.seed)
    modelfile.save(args.out, model, binary=not args.text)
    print("dims\t" + ",".join(str(v) for v in model.dims))


def cmd_iqa_score(args):
    model = _load_scorer(args.model)
    print(f"{iqa.score(load_image(args.ref), load_image(args.dist), model):.6f}")


def cmd_iqa_eval(args):
    model = _load_scorer(args.model)
    res = iqa.evaluate(iqa.load_manifest(args.manifest), model)
    _tsv([list(res.values())], list(res))


def _load_texture_model(path):
    model = modelfile.load(path)
    if not isinstance(model, texture.TextureModel):
        raise ValueError(f"{path} does not hold a texture model")
    return model


def _load_index(path):
    index = modelfile.load(path)
    if not isinstance(index, texture.RetrievalIndex):
        raise ValueError(f"{path} does not hold a retrieval index")
    return index


def cmd_texture_index(args):
    model = _load_texture_model(args.model)
    index = texture.build_index(texture.load_corpus(args.manifest), model)
    modelfile.save(args.out, index, binary=not args.text)
    print(f"entries\t{len(index.entries)}")


def cmd_texture_query(args):
    index = _load_index(args.index)
    result, ids = texture.query(index, args.query_id, args.prefilter, return_ids=True)
    _tsv([(i + 1, image_id, lab) for i, (image_id, lab) in enumerate(zip(ids, result.ranked_labels))],
         ["rank", "image_id", "label"])


def cmd_texture_eval(args):
    res = texture.evaluate_index(_load_index(args.index), args.prefilter)
    _tsv([list(res.values())], list(res))


def cmd_robustness(args):
    model = _load_texture_model(args.model)
    sigmas = [float(s) for s in args.sigmas.split(",")]
    rows = texture.robustness_sweep(texture.load_corpus(args.manifest), model, sigmas, args.seed, args.prefilter)
    _tsv([[f"{r['sigma']:g}", r["P@1"], r["MRR"], r["MAP"]] for r in rows], ["sigma", "P@1", "MRR", "MAP"])


def cmd_synth(args):
    out = Path(args.out_dir)
    kinds = ["textures", "natural", "iqa"] if args.kind == "all" else [args.kind]
    for kind in kinds:
        if kind == "textures":
            path = synthdata.write_texture_corpus(out / "textures", seed=args.seed)
        elif kind == "natural":
            path = synthdata.write_natural_images(out / "natural", count=args.count, seed=args.seed)
        else:
            path = synthdata.write_iqa_corpus(out / "iqa", seed=args.seed)
        print(f"{kind}\t{path}")


def cmd_curet_prepare(args):
    path = texture.prepare_curet(args.in_dir, args.out_dir, args.condition, args.size, args.samples)
    print(f"manifest\t{path}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="filterlearn", description="Adaptive filter sets for IQA and texture retrieval.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def training_flags(sp, epsilon_default=None):
        sp.add_argument("--input-dir", required=True)
        sp.add_argument("--patches-per-image", type=int, default=100)
        sp.add_argument("--epsilon", type=float, default=epsilon_default)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--rho", type=float, default=0.035)
        sp.add_argument("--beta", type=float, default=5.0)
        sp.add_argument("--lam", type=float, default=3e-3)
        sp.add_argument("--max-iterations", type=int, default=400)
        sp.add_argument("--text", action="store_true", help="decimal arrays instead of base64")
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("train-filters", help="train one filter set from a directory of images")
    training_flags(sp)
    sp.add_argument("--side", type=int, default=8)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--h", type=int, default=iqa.UNIQUE_H)
    sp.add_argument("--kind", choices=["auto", "filterset", "unique"], default="auto")
    sp.set_defaults(func=cmd_train_filters)

    sp = sub.add_parser("train-msunique", help="train the five MS-UNIQUE filter sets")
    training_flags(sp)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--h-values", default=",".join(str(h) for h in iqa.MSUNIQUE_H))
    sp.add_argument("--edge-weight", type=float, default=2.0)
    sp.set_defaults(func=cmd_train_msunique)

    sp = sub.add_parser("train-texture", help="train the hierarchical texture model")
    training_flags(sp, texture.TextureTrainingConfig.epsilon)
    sp.set_defaults(func=cmd_train_texture)

    sp = sub.add_parser("iqa-score", help="quality score of one reference/distorted pair")
    sp.add_argument("--model", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--dist", required=True)
    sp.set_defaults(func=cmd_iqa_score)

    sp = sub.add_parser("iqa-eval", help="RMSE/OR/Pearson/Spearman over a manifest")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.set_defaults(func=cmd_iqa_eval)

    sp = sub.add_parser("texture-index", help="index a texture corpus")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--text", action="store_true")
    sp.set_defaults(func=cmd_texture_index)

    sp = sub.add_parser("texture-query", help="rank the index for one query image")
    sp.add_argument("--index", required=True)
    sp.add_argument("--query-id", required=True)
    sp.add_argument("--prefilter", type=float, default=0.5)
    sp.set_defaults(func=cmd_texture_query)

    sp = sub.add_parser("texture-eval", help="P@1/MRR/MAP over all queries of an index")
    sp.add_argument("--index", required=True)
    sp.add_argument("--prefilter", type=float, default=0.5)
    sp.set_defaults(func=cmd_texture_eval)

    sp = sub.add_parser("robustness", help="retrieval metrics under Gaussian noise")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--sigmas", default="0,5,25,50,75,100")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--prefilter", type=float, default=0.5)
    sp.set_defaults(func=cmd_robustness)

    sp = sub.add_parser("synth", help="write synthetic corpora")
    sp.add_argument("--kind", choices=["textures", "natural", "iqa", "all"], default="all")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=20, help="natural images to write")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("curet-prepare", help="cut CUReT images into 128x128 retrieval samples")
    sp.add_argument("--in-dir", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--condition", type=int, default=55)
    sp.add_argument("--size", type=int, default=128)
    sp.add_argument("--samples", type=int, default=3)
    sp.set_defaults(func=cmd_curet_prepare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (OSError, ValueError, ImageFormatError, FloatingPointError) as exc:
        print(f"filterlearn: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
