"""Command-line entry point: ``freqdet <subcommand> ...``.

Exit codes: 0 success, 1 contract violation (bad arguments, configs, shapes,
failed checks), 2 I/O failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import FreqDetError
from .gradcheck import finite_diff_check
from .tensor import Tensor

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2
GRADCHECK_MODULES = ("wave", "akat", "cpf", "mdfc", "model")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _gradcheck_case(name: str, rng: np.random.Generator):
    """(callable, inputs, threshold, max_checks) for one module on fresh parameters."""
    from .akat import AkatConfig, AkatKernel
    from .cpf import CPF
    from .hsg import HsgBlock, HsgConfig
    from .mdfc import MDFC, MdfcConfig
    from .model import ModelConfig, build_model
    from .wave import WaveConfig, WaveKernel

    if name == "wave":
        cfg = HsgConfig(8)
        mod = HsgBlock(cfg, WaveKernel(WaveConfig(cfg.stream_widths[2], depth=2), rng), rng)
        x = Tensor(rng.standard_normal((1, 8, 8, 8)))
        return (lambda x, *p: mod(x)), [x] + mod.parameters(), 1e-4, 600
    if name == "akat":
        mod = AkatKernel(AkatConfig(8), rng)
        x = Tensor(rng.standard_normal((1, 8, 4, 4)))
        return (lambda x, *p: mod(x)), [x] + mod.parameters(), 1e-4, 600
    if name == "cpf":
        mod = CPF(8, rng=rng)
        x = Tensor(rng.standard_normal((1, 8, 6, 6)))
        return (lambda x, *p: mod(x)), [x] + mod.parameters(), 1e-4, 600
    if name == "mdfc":
        mod = MDFC(MdfcConfig(8, 8, (16, 16)), rng)
        low = Tensor(rng.standard_normal((1, 8, 16, 16)))
        adj = Tensor(rng.standard_normal((1, 8, 8, 8)))
        return (lambda a, b, *p: mod(a, b)), [low, adj] + mod.parameters(), 1e-4, 600
    if name == "model":
        mod = build_model(tiny_model_config())
        x = Tensor(rng.standard_normal((1, 3, 32, 32)))

        def f(x, *p):
            out = mod(x)
            total = None
            for c, b in out.values():
                t = c.sum() + b.sum()
                total = t if total is None else total + t
            return total
        return f, [x] + mod.parameters(), 1e-3, 40
    raise ValueError(name)


def tiny_model_config():
    from .model import ModelConfig
    return ModelConfig(widths=(8, 8, 8), depths=(1, 1, 1), include_s5=False, detect=(2, 4),
                       num_classes=2, input_size=(32, 32), seed=0)


def cmd_gradcheck(args) -> int:
    names = GRADCHECK_MODULES if args.module == "all" else (args.module,)
    ok = True
    for name in names:
        rng = np.random.default_rng(args.seed)
        f, inputs, thr, max_checks = _gradcheck_case(name, rng)
        rep = finite_diff_check(f, inputs, threshold=thr, max_checks=max_checks, seed=args.seed)
        verdict = "PASS" if rep.passed else "FAIL"
        print(f"module={name} max_rel_error={rep.max_rel_error:.3e} threshold={thr:.0e} "
              f"checked={rep.n_checked} {verdict}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_CONTRACT


# ---------------------------------------------------------------------------
# decompose / export-features
# ---------------------------------------------------------------------------

def _as_nchw(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr[None, None]
    if arr.ndim == 3:
        return arr[None]
    if arr.ndim == 4:
        return arr
    raise FreqDetError(f"expected a 2-, 3- or 4-d tensor, got rank {arr.ndim}")


def cmd_decompose(args) -> int:
    from .frequency import fft2d, wavelet_decompose
    from .io import load_tensor, save_tensor
    x = Tensor(_as_nchw(load_tensor(args.input)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.mode == "hwt":
        pyr = wavelet_decompose(x, args.depth)
        for level, bands in enumerate(pyr.levels, 1):
            for band in ("lh", "hl", "hh"):
                path = out / f"level{level}_{band.upper()}.fmct"
                save_tensor(path, getattr(bands, band).data)
                written.append(path)
        path = out / f"level{len(pyr.levels)}_LL.fmct"
        save_tensor(path, pyr.levels[-1].ll.data)
        written.append(path)
    else:
        spec = fft2d(x)
        for part, t in (("re", spec.re), ("im", spec.im)):
            path = out / f"fft_{part}.fmct"
            save_tensor(path, t.data)
            written.append(path)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_export_features(args) -> int:
    from .io import load_tensor, save_tensor
    from .train import load_model
    model = load_model(args.ckpt)
    x = _as_nchw(load_tensor(args.input))
    feats = model.features(Tensor(x))
    if args.layer not in feats:
        print(f"unknown layer {args.layer!r}; available: {', '.join(feats)}", file=sys.stderr)
        return EXIT_CONTRACT
    out = Path(args.out) if args.out else Path(args.input).with_suffix(f".{args.layer}.fmct")
    save_tensor(out, feats[args.layer].data)
    print(f"layer={args.layer} shape={'x'.join(map(str, feats[args.layer].shape))} out={out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# data / training / evaluation
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .config import load_config
    from .data import SceneSpec, generate_dataset
    spec = load_config(args.spec, {"scene": SceneSpec})["scene"]
    ann = generate_dataset(spec, args.out)
    print(f"images={len(ann)} boxes={sum(len(a) for a in ann.values())} out={args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import run_training
    res = run_training(args.config, args.data, args.out, log=print)
    print(f"done iterations={res.iterations} seconds={res.seconds:.1f} checkpoint={Path(args.out) / 'model.fmcw'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import load_dataset
    from .train import evaluate, load_model
    model = load_model(args.ckpt)
    data = load_dataset(args.data, model.cfg.required_multiple)
    res = evaluate(model, data, args.conf, args.iou)
    print(" ".join(f"{k}={v:.6f}" for k, v in res.as_dict().items()))
    return EXIT_OK


def cmd_merge_reparam(args) -> int:
    from .train import load_model, save_model
    model = load_model(args.ckpt)
    if not model.cfg.cpf:
        print("model has no re-parameterizable blocks; checkpoint unchanged")
        return EXIT_OK
    model.reparameterize()
    save_model(args.ckpt, model)
    print(f"merged checkpoint={args.ckpt} parameters={model.num_parameters()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freqdet", description="Frequency-aware tiny-object detection toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gradcheck", help="finite-difference gradient check on fresh parameters")
    g.add_argument("--module", default="all", choices=("all",) + GRADCHECK_MODULES)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gradcheck)

    d = sub.add_parser("decompose", help="dump wavelet or Fourier components of a raw tensor")
    d.add_argument("--input", required=True)
    d.add_argument("--mode", choices=("hwt", "fft"), required=True)
    d.add_argument("--depth", type=int, default=1)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_decompose)

    m = sub.add_parser("merge-reparam", help="fold re-parameterizable branches in a checkpoint, in place")
    m.add_argument("--ckpt", required=True)
    m.set_defaults(fn=cmd_merge_reparam)

    gd = sub.add_parser("gen-data", help="render a synthetic dataset")
    gd.add_argument("--spec", required=True)
    gd.add_argument("--out", required=True)
    gd.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a detector")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="COCO-style AP of a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--conf", type=float, default=0.05)
    e.add_argument("--iou", type=float, default=0.5)
    e.set_defaults(fn=cmd_eval)

    x = sub.add_parser("export-features", help="dump one named feature map")
    x.add_argument("--ckpt", required=True)
    x.add_argument("--input", required=True)
    x.add_argument("--layer", required=True)
    x.add_argument("--out")
    x.set_defaults(fn=cmd_export_features)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_CONTRACT
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONTRACT
    try:
        return args.fn(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FreqDetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
