"""Command-line front end: ``qtag <subcommand> ...``.

Exit codes: 0 detected or success, 1 not detected, 2 usage error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .attacks import KINDS, AttackSpec, apply_attack
from .circuit import load_circuit, save_circuit
from .codec import save_latent
from .diffusion import DiffusionSchedule, make_backend
from .errors import ConfigInvalid, ConfigMismatch, QTagError
from .harness import (
    KEY_MODES,
    ExperimentConfig,
    read_csv,
    rows_to_csv,
    run_calibration,
    run_capacity_sweep,
    run_false_accept,
    run_robustness_bench,
    run_srm_ablation,
    run_steps_sweep,
)
from .pipeline import embed
from .srm import DIRECTIONS, detect_watermark
from .watermark import WatermarkKey

EXIT_OK, EXIT_NOT_DETECTED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
SUITES = ("robustness", "capacity", "steps", "ablation", "false_accept")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config(args) -> ExperimentConfig:
    """Config file first, then any flag the user actually gave."""
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    for name in ("trials", "backend", "steps", "guidance", "capacity", "tau", "alpha0", "master_seed",
                 "output", "n_jobs", "inversion_refine", "key_mode"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if getattr(args, "no_erasures", False):
        over["erasures"] = False
    srm = {}
    if getattr(args, "w_max", None) is not None:
        srm["w_max"] = args.w_max
    if getattr(args, "directions", None) is not None:
        srm["directions"] = args.directions
    if getattr(args, "no_srm", False):
        srm["enabled"] = False
    if getattr(args, "no_early_stop", False):
        srm["early_stop"] = False
    if srm:
        over["srm"] = replace(cfg.srm, **srm)
    return replace(cfg, **over).validate()


def _add_config_flags(p, output=False):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--backend", help="'zero' or 'linear:<seed>'")
    p.add_argument("--steps", type=int, help="DDIM steps T")
    p.add_argument("--guidance", type=float)
    p.add_argument("--capacity", type=int, help="message bits k")
    p.add_argument("--tau", type=float, help="similarity threshold")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--master-seed", type=int)
    p.add_argument("--w-max", type=int)
    p.add_argument("--directions", choices=DIRECTIONS)
    p.add_argument("--no-srm", action="store_true", help="standard extraction only")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--inversion-refine", type=int, help="fixed-point corrections per inversion step")
    p.add_argument("--no-erasures", action="store_true", help="let IDENT and zero cells vote")
    p.add_argument("--key-mode", choices=KEY_MODES, help="fresh key per trial or one owner key")
    if output:
        p.add_argument("--output", help="CSV path")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qtag", description="Watermarking for generated quantum circuits")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="create a watermark key")
    p.add_argument("--capacity", type=int, default=24)
    p.add_argument("--seed", type=int, help="reproducible key (default: OS randomness)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", help="generate a watermarked circuit")
    _add_config_flags(p)
    p.add_argument("--key", required=True)
    p.add_argument("--gauss-seed", type=int, help="override the key's Gaussian seed")
    p.add_argument("--circuit", required=True, help="output circuit (.json grid or .qasm)")
    p.add_argument("--latent", help="output final latent file")

    p = sub.add_parser("attack", help="apply a structural attack")
    p.add_argument("--circuit", required=True)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("strict", "aggressive"), default="strict")
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="detect a watermark; exit 0 if detected, 1 if not")
    _add_config_flags(p)
    p.add_argument("--circuit", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out", help="report JSON path (default stdout)")

    p = sub.add_parser("calibrate", help="fit H0/H1 and set the Neyman-Pearson threshold")
    _add_config_flags(p)
    p.add_argument("--samples-w", type=int, default=2000)
    p.add_argument("--samples-u", type=int, default=2000)
    p.add_argument("--mu0", type=float, help="skip the H0 fit (needs --sigma0)")
    p.add_argument("--sigma0", type=float)
    p.add_argument("--histogram", help="histogram CSV path")
    p.add_argument("--out", help="result JSON path (default stdout)")

    p = sub.add_parser("bench", help="run an experiment suite and write CSV")
    _add_config_flags(p, output=True)
    p.add_argument("--suite", choices=SUITES, default="robustness")
    p.add_argument("--trials", type=int)
    p.add_argument("--attack", action="append", default=[], metavar="KIND:COUNT",
                   help="attack cell, repeatable (default: full grid)")

    p = sub.add_parser("plot", help="static SVG chart of a bench or histogram CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    return ap


def _emit_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_attack(text: str) -> AttackSpec:
    kind, _, count = text.partition(":")
    return AttackSpec(kind, int(count or 1))


def cmd_keygen(args):
    WatermarkKey.generate(args.capacity, seed=args.seed).save(args.out)
    return EXIT_OK


def cmd_embed(args):
    cfg = _config(args)
    key = WatermarkKey.load(args.key)
    if args.gauss_seed is not None:
        key = key.with_gauss_seed(args.gauss_seed)
    gen = embed(key, make_backend(cfg.backend, cfg.shape), DiffusionSchedule(cfg.steps), cfg.shape, cfg.guidance)
    save_circuit(args.circuit, gen.circuit)
    if args.latent:
        save_latent(args.latent, gen.z_0)
    return EXIT_OK


def cmd_attack(args):
    spec = AttackSpec(args.kind, args.count, args.seed, args.mode)
    save_circuit(args.out, apply_attack(load_circuit(args.circuit), spec))
    return EXIT_OK


def cmd_verify(args):
    key = WatermarkKey.load(args.key)
    if args.capacity is None:
        args.capacity = key.k
    cfg = _config(args)
    rep = detect_watermark(load_circuit(args.circuit), key, cfg.policy(), make_backend(cfg.backend, cfg.shape),
                           DiffusionSchedule(cfg.steps), cfg.srm, cfg.shape, cfg.guidance,
                           cfg.inversion_refine, cfg.erasures)
    _emit_json(rep.to_dict(), args.out)
    return EXIT_OK if rep.detected else EXIT_NOT_DETECTED


def cmd_calibrate(args):
    cfg = _config(args)
    rep = run_calibration(args.samples_w, args.samples_u, cfg.alpha0, cfg, args.mu0, args.sigma0,
                          args.histogram)
    _emit_json(rep.to_dict(), args.out)
    return EXIT_OK


def cmd_bench(args):
    cfg = _config(args)
    if args.attack:
        cfg = replace(cfg, attacks=[_parse_attack(a) for a in args.attack])
    if args.suite == "false_accept":
        rows = [run_false_accept(cfg)]
    else:
        run = {"robustness": run_robustness_bench, "capacity": run_capacity_sweep,
               "steps": run_steps_sweep, "ablation": run_srm_ablation}[args.suite]
        rows = run(cfg)
    if not cfg.output:
        sys.stdout.write(rows_to_csv(rows, cfg))
    return EXIT_OK


def cmd_plot(args):
    from .plot import plot_csv

    plot_csv(read_csv(args.input), args.out)
    return EXIT_OK


COMMANDS = {"keygen": cmd_keygen, "embed": cmd_embed, "attack": cmd_attack, "verify": cmd_verify,
            "calibrate": cmd_calibrate, "bench": cmd_bench, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigInvalid, ConfigMismatch) as exc:
        print(f"qtag {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QTagError, ValueError, KeyError, OSError) as exc:
        print(f"qtag {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
