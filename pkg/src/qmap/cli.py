"""Command line entry point.

Every subcommand takes ``--seed`` (required) and ``--config FILE``, an INI
file whose section named after the subcommand (or ``[DEFAULT]``) supplies
defaults for the long options; flags given on the command line win.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure.  Diagnostics go to stderr, results to files or stdout.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .metrics import InsufficientData, records_to_csv

log = logging.getLogger("qmap")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def _ints(text):
    out = []
    for tok in str(text).replace(",", " ").split():
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmap", description="Quantized MAP denoising experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI file with defaults for this command")
        sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("sweep-iid", help="scalar Q-MAP and MMSE sweep on a spike-and-slab model")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--sigmas", help="comma separated noise levels")
    sp.add_argument("--bits", help="bit depths, e.g. '12' or '8,10,12' or '6-12'")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--lambda-rule", choices=["sigma^1.5", "fixed"])
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", help="CSV path for Q-MAP rows; MMSE rows go to <stem>.mmse.csv")
    sp.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                    help="write 0 in the wall_time_s column so reruns are byte-identical")

    sp = sub.add_parser("sweep-markov", help="pairwise Q-MAP sweep on a Markov model")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--sigmas")
    sp.add_argument("--bits")
    sp.add_argument("--lengths", help="path lengths n")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--lambda-rule", choices=["sigma^1.5", "fixed"])
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out")
    sp.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                    help="write 0 in the wall_time_s column so reruns are byte-identical")

    sp = sub.add_parser("id", help="quantized entropies and information-dimension slope")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--bits")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--analytic", action="store_true", default=None,
                    help="use model bin probabilities instead of samples")

    sp = sub.add_parser("train", help="learn a patch prior from a PGM corpus")
    common(sp)
    sp.add_argument("--corpus")
    sp.add_argument("--patches", type=int, help="patches per image")
    sp.add_argument("--out")

    sp = sub.add_parser("denoise-image", help="denoise a PGM with Q-MAP and hard thresholding")
    common(sp)
    sp.add_argument("--prior")
    sp.add_argument("--input")
    sp.add_argument("--clean", help="reference image when the input is already noisy")
    sp.add_argument("--sigma", type=float, help="noise to add, in 8-bit units (0 = input is noisy)")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--out-dir")
    sp.add_argument("--reference", action="store_true", default=None,
                    help="also print the published Cameraman rows")

    sp = sub.add_parser("make-corpus", help="write a training corpus and benchmark images")
    common(sp)
    sp.add_argument("--out-dir")
    sp.add_argument("--tile", type=int)
    return p


DEFAULTS = {
    "sweep-iid": dict(sigmas="0.1,0.05,0.02,0.01", bits="12", trials=100000,
                      lambda_rule="sigma^1.5", lam=None, workers=1, out="sweep_iid.csv",
                      timing=True),
    "sweep-markov": dict(sigmas="0.02", bits="8", lengths="256", trials=200,
                         lambda_rule="sigma^1.5", lam=None, workers=1, out="sweep_markov.csv",
                         timing=True),
    "id": dict(bits="6-12", samples=1000000, analytic=False),
    "train": dict(patches=128, out="prior.txt"),
    "denoise-image": dict(clean=None, sigma=25.0, lam=ex.DEFAULT_IMAGE_LAMBDA,
                          threshold=ex.DEFAULT_THRESHOLD, stride=1, out_dir=".", reference=False),
    "make-corpus": dict(out_dir="corpus", tile=128),
}

_TYPES = {"trials": int, "workers": int, "samples": int, "patches": int, "stride": int, "tile": int,
          "lam": float, "sigma": float, "threshold": float}
_BOOLS = {"analytic", "reference", "timing"}


def _resolve(args) -> dict:
    """Merge built-in defaults, the config file and command-line flags."""
    cmd = args.command
    vals = dict(DEFAULTS.get(cmd, {}))
    if args.config is not None:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise OSError(f"cannot read config file {args.config}")
        sec = cp[cmd] if cp.has_section(cmd) else cp["DEFAULT"]
        for key, raw in sec.items():
            name = key.replace("-", "_")
            if name == "lambda":
                name = "lam"
            if name == "seed":
                continue
            try:
                if name in _BOOLS:
                    vals[name] = sec.getboolean(key)
                else:
                    vals[name] = _TYPES.get(name, str)(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    for key, v in vars(args).items():
        if key in ("command", "config", "verbose") or v is None:
            continue
        vals[key] = v
    vals["seed"] = args.seed
    return vals


def _need(vals, *keys):
    missing = [k for k in keys if vals.get(k) in (None, "")]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join(missing))


def _load_model(path, kind):
    from .sources import MarkovModel, SpikeSlabModel, load_model

    model = load_model(path)
    want = SpikeSlabModel if kind == "iid" else MarkovModel
    if not isinstance(model, want):
        raise ConfigError(f"{path} does not describe a {'spike-and-slab' if kind == 'iid' else 'Markov'} model")
    return model


def cmd_sweep_iid(v) -> int:
    _need(v, "model")
    model = _load_model(v["model"], "iid")
    res = ex.sweep_iid(model, _floats(v["sigmas"]), _ints(v["bits"]), int(v["trials"]), v["seed"],
                       v["lambda_rule"], v.get("lam"), int(v["workers"]), timing=bool(v["timing"]))
    out = Path(v["out"])
    records_to_csv(res.qmap, out)
    records_to_csv(res.mmse, out.with_name(out.stem + ".mmse.csv"))
    log.info("wrote %s and %s", out, out.with_name(out.stem + ".mmse.csv"))
    return EXIT_OK


def cmd_sweep_markov(v) -> int:
    _need(v, "model")
    model = _load_model(v["model"], "markov")
    recs = ex.sweep_markov(model, _floats(v["sigmas"]), _ints(v["bits"]), _ints(v["lengths"]),
                           int(v["trials"]), v["seed"], v["lambda_rule"], v.get("lam"),
                           int(v["workers"]), timing=bool(v["timing"]))
    records_to_csv(recs, v["out"])
    log.info("wrote %s", v["out"])
    return EXIT_OK


def cmd_id(v) -> int:
    _need(v, "model")
    from .sources import load_model

    model = load_model(v["model"])
    rep = ex.entropy_report(model, _ints(v["bits"]), int(v["samples"]), v["seed"],
                            analytic=bool(v["analytic"]))
    sys.stdout.write(rep.text())
    return EXIT_OK


def cmd_train(v) -> int:
    _need(v, "corpus")
    from .image import read_corpus, train_prior

    corpus = read_corpus(v["corpus"])
    if not corpus:
        raise ConfigError(f"no readable PGM images in {v['corpus']}")
    prior = train_prior(corpus, int(v["patches"]), v["seed"])
    prior.save(v["out"])
    p = prior.rank_probabilities()
    lines = [f"images {len(corpus)}", f"patches {prior.total}", f"stored codewords {len(prior)}",
             "top-k share of stored mass:"]
    for frac in (0.001, 0.01, 0.1):
        lines.append(f"  top {frac:.1%} codewords: {prior.top_share(frac):.4f}")
    for k in (1, 10, 100, 1000):
        if k <= p.size:
            lines.append(f"  top {k} codewords: {float(p[:k].sum()):.4f}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_denoise_image(v) -> int:
    _need(v, "prior", "input")
    from .image import PatchPrior, read_pgm, write_pgm

    prior = PatchPrior.load(v["prior"])
    img = read_pgm(v["input"])
    sigma = float(v["sigma"]) / 255.0
    if sigma > 0:
        clean = img
        noisy = ex.add_image_noise(img, sigma, v["seed"])
    else:
        noisy = img
        clean = read_pgm(v["clean"]) if v.get("clean") else None
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ref = clean if clean is not None else noisy
    bench = ex.image_benchmark(ref, noisy, prior, float(v["lam"]), float(v["threshold"]),
                               int(v["stride"]), sigma)
    write_pgm(out / "noisy.pgm", noisy)
    write_pgm(out / "qmap.pgm", bench.qmap)
    write_pgm(out / "thresh.pgm", bench.thresh)
    if clean is None:
        log.warning("no clean reference: PSNR values are relative to the noisy input")
    sys.stdout.write(bench.table(ex.REFERENCE_CAMERA if v.get("reference") else None))
    return EXIT_OK


def cmd_make_corpus(v) -> int:
    from .image import corpus, write_pgm

    out = Path(v["out_dir"])
    n = corpus.write_corpus(out / "train", int(v["tile"]))
    write_pgm(out / "validation.pgm", corpus.validation_image())
    write_pgm(out / "cameraman.pgm", corpus.test_image())
    sys.stdout.write(f"wrote {n} training images to {out / 'train'}\n")
    return EXIT_OK


COMMANDS = {
    "sweep-iid": cmd_sweep_iid,
    "sweep-markov": cmd_sweep_markov,
    "id": cmd_id,
    "train": cmd_train,
    "denoise-image": cmd_denoise_image,
    "make-corpus": cmd_make_corpus,
}


def main(argv=None) -> int:
    from .image import PGMError, PriorError
    from .sources import ModelError

    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](_resolve(args))
    except (OSError, PGMError, PriorError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ex.NumericalFailure, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ConfigError, ModelError, InsufficientData, ValueError, KeyError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
