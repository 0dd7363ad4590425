"""Command-line interface: ``biopsyfusion {phantom,register,session,validate,report}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .biopsy_map import Box, build_target_grid, evaluate_session
from .exceptions import BiopsyFusionError
from .io import (
    read_json,
    read_volume,
    result_from_dict,
    result_to_dict,
    transform_from_list,
    write_json,
    write_volume,
)
from .phantom import PhantomConfig, generate, semi_axes_for_volume
from .registration import RegistrationConfig, register_iconic
from .session import (
    SessionOutcome,
    emit_report,
    load_results,
    load_session,
    run_session,
    save_results,
    simulate_session,
)
from .similarity import METRICS, SimilarityKind
from .validation import FiducialPair, fiducial_error, trajectory_angle

def _bbox(text: str) -> Box:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bbox must be six comma-separated numbers, got {text!r}")
    if len(values) != 6:
        raise argparse.ArgumentTypeError(f"bbox must be x0,x1,y0,y1,z0,z1, got {text!r}")
    return Box.from_extents(values)


def _add_registration_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--metric", choices=METRICS, default=d("ncc"))
    p.add_argument("--bins", type=int, default=d(32), help="histogram bins for nmi")
    p.add_argument("--levels", type=int, default=d(3), help="pyramid levels")


def _phantom_config(args) -> PhantomConfig:
    cfg = PhantomConfig(seed=args.seed)
    if args.dims:
        cfg = replace(cfg, dims=(args.dims,) * 3)
    if args.spacing:
        cfg = replace(cfg, spacing=(args.spacing,) * 3)
    if args.volume_cc:
        cfg = replace(cfg, semi_axes=semi_axes_for_volume(args.volume_cc))
    if args.speckle is not None:
        cfg = replace(cfg, speckle_sigma=args.speckle)
    return cfg


def cmd_phantom_generate(args) -> int:
    vol, truth = generate(_phantom_config(args))
    out = Path(args.out)
    write_volume(vol, out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".json")
    write_json(truth.to_dict(), truth_path)
    print(f"wrote {out} and {truth_path}")
    return 0


def cmd_phantom_session(args) -> int:
    path = simulate_session(
        args.out, n_biopsies=args.n, seed=args.seed, max_rotation=args.max_rotation,
        max_translation=args.max_translation, phantom=_phantom_config(args),
    )
    print(f"wrote session {path}")
    return 0


def cmd_register(args) -> int:
    cfg = RegistrationConfig(
        metric=SimilarityKind(args.metric, args.bins),
        pyramid_levels=args.levels,
        left_lobe_mode=args.left_lobe,
    )
    res = register_iconic(read_volume(args.fixed), read_volume(args.moving), cfg)
    d = result_to_dict(res)
    if args.out:
        write_json(d, args.out)
    print(f"succeeded={res.succeeded} converged={res.converged} score={res.final_score:.4f} "
          f"ncc={res.final_ncc:.4f} elapsed={res.elapsed:.2f}s")
    return 0 if res.succeeded else 1


def _write_outcome(outcome: SessionOutcome, report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary = emit_report(report, out / "report.csv", outcome, out / "summary.txt")
    save_results(outcome, out / "results.json")
    sys.stdout.write(summary)
    print(f"wrote {out / 'report.csv'}")


def cmd_session_run(args) -> int:
    overrides = {k: v for k, v in (("metric", args.metric), ("bins", args.bins), ("levels", args.levels))
                 if v is not None}
    session = load_session(args.session, overrides)
    if args.bbox is not None:
        session.bbox = args.bbox
    outcome = run_session(session, jobs=args.jobs)
    _write_outcome(outcome, outcome.report, Path(args.out))
    return outcome.exit_status


def cmd_report(args) -> int:
    outcome = load_results(args.results)
    report = outcome.report
    if args.bbox is not None:
        outcome.session.bbox = args.bbox
        report = evaluate_session(outcome.session, build_target_grid(args.bbox))
    out = Path(args.out)
    summary = emit_report(report, out, outcome, args.summary)
    sys.stdout.write(summary)
    return 0


def cmd_validate(args) -> int:
    if not args.fiducials and not args.trajectories:
        print("nothing to validate: pass --fiducials and/or --trajectories", file=sys.stderr)
        return 2
    if args.fiducials:
        d = read_json(args.fiducials)
        pairs = [FiducialPair(p["fixed"], p["moving"], str(p.get("id", i)))
                 for i, p in enumerate(d["pairs"])]
        if args.transform:
            t = result_from_dict(read_json(args.transform)).transform
        elif "matrix" in d:
            t = transform_from_list(d["matrix"])
        else:
            print("--fiducials needs a transform (--transform or a 'matrix' key)", file=sys.stderr)
            return 2
        fe = fiducial_error(pairs, t)
        print(f"fiducial error: mean {fe.mean:.3f} mm, max {fe.max:.3f} mm ({len(pairs)} pairs)")
    if args.trajectories:
        d = read_json(args.trajectories)
        angles = []
        for p in d["pairs"]:
            a, b = p["a"], p["b"]
            angles.append(trajectory_angle((a["entry"], a["tip"]), (b["entry"], b["tip"])))
        print(f"trajectory angle: mean {np.mean(angles):.2f} deg, max {np.max(angles):.2f} deg"
              f" ({len(angles)} pairs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biopsyfusion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="synthetic TRUS phantoms")
    phs = ph.add_subparsers(dest="phantom_command", required=True)
    for name, fn, help_ in (("generate", cmd_phantom_generate, "one volume + ground truth"),
                            ("session", cmd_phantom_session, "R0 + perturbed biopsy volumes")):
        p = phs.add_parser(name, help=help_)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dims", type=int)
        p.add_argument("--spacing", type=float)
        p.add_argument("--volume-cc", type=float)
        p.add_argument("--speckle", type=float)
        p.set_defaults(func=fn)
        if name == "generate":
            p.add_argument("--truth", help="ground-truth JSON path (default: OUT with .json)")
        else:
            p.add_argument("--n", type=int, default=12, help="number of biopsies")
            p.add_argument("--max-rotation", type=float, default=10.0, help="degrees")
            p.add_argument("--max-translation", type=float, default=8.0, help="mm")

    reg = sub.add_parser("register", help="iconic fusion of two BVOL1 volumes")
    reg.add_argument("--fixed", required=True)
    reg.add_argument("--moving", required=True)
    _add_registration_flags(reg)
    reg.add_argument("--left-lobe", action="store_true", help="start from the 180 degree probe turn")
    reg.add_argument("--out")
    reg.set_defaults(func=cmd_register)

    ses = sub.add_parser("session", help="fusion sessions")
    sess = ses.add_subparsers(dest="session_command", required=True)
    run = sess.add_parser("run", help="fuse all biopsies into R0 and score them")
    run.add_argument("session")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=None)
    run.add_argument("--bbox", type=_bbox)
    _add_registration_flags(run, defaults=False)
    run.set_defaults(func=cmd_session_run)

    val = sub.add_parser("validate", help="fiducial and trajectory-angle errors")
    val.add_argument("--fiducials", help="JSON {'pairs': [{'fixed', 'moving'}], 'matrix'?}")
    val.add_argument("--transform", help="registration result JSON (fixed -> moving)")
    val.add_argument("--trajectories", help="JSON {'pairs': [{'a': {entry, tip}, 'b': {...}}]}")
    val.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="re-score saved session results")
    rep.add_argument("results", help="results.json written by 'session run'")
    rep.add_argument("--out", required=True, help="CSV path")
    rep.add_argument("--summary", help="optional summary text path")
    rep.add_argument("--bbox", type=_bbox)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BiopsyFusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
