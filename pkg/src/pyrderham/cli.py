"""Command-line entry point.

Exit status is 0 when everything passes, 1 when a check fails or an input
is rejected, and 2 for usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import harness
from .mesh import STRATEGIES, InvalidMeshError, distortion, load_mesh, refine, save_mesh, validate
from .refbasis import Space

log = logging.getLogger("pyrderham")


def _load_valid(path):
    mesh = load_mesh(path)
    rep = validate(mesh)
    if not rep.ok:
        raise InvalidMeshError(f"{path}: {rep.summary()}", rep)
    return mesh


def cmd_check_element(args):
    rows = harness.element_suite(args.fields, args.elements, args.seed)
    print(f"{'space':<6} {'kind':<4} {'duality':>10} {'exactness':>10} {'commuting':>10}  result")
    for r in rows:
        print(f"{r.space.value:<6} {r.kind:<4} {r.duality:10.2e} {r.exactness:10.2e} {r.commuting:10.2e}  {'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} passed")
    return 0 if ok else 1


def cmd_demo_mesh(args):
    mesh = harness.build_demo_thp(args.perturb, args.seed)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh}")
    return 0


def cmd_refine(args):
    mesh = _load_valid(args.mesh)
    for _ in range(args.levels):
        mesh = refine(mesh, args.strategy, check=False)
    rep = validate(mesh)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh} ({len(mesh)} elements)")
    if not rep.ok:
        print(rep.summary(), file=sys.stderr)
        return 1
    return 0


def cmd_distortion(args):
    mesh = _load_valid(args.mesh) if args.mesh else harness.build_demo_thp(args.perturb, args.seed)
    print("level,h,max_pyr_vp,max_hex_vp,max_F,min_F,max_J,min_J,ratio_pyr_vp,ratio_F,ratio_J")
    prev = None
    for level in range(args.levels + 1):
        if level:
            mesh = refine(mesh, args.strategy, check=False)
        d = distortion(mesh)

        def ratio(a, b):
            return "nan" if prev is None or a == 0 else "%.12g" % (b / a)

        print(",".join(
            [str(level)] + ["%.12g" % v for v in (d.h, d.max_pyr_vp, d.max_hex_vp, d.max_F, d.min_F, d.max_J, d.min_J)]
            + [ratio(prev.max_pyr_vp, d.max_pyr_vp) if prev else "nan",
               ratio(prev.max_F, d.max_F) if prev else "nan",
               ratio(prev.max_J, d.max_J) if prev else "nan"]
        ))
        prev = d
    return 0


def cmd_convergence(args):
    cfg = harness.StudyConfig(
        args.space, args.field, args.levels, args.mesh, args.degree, args.perturb, args.seed, args.strategy,
    )
    report = harness.run_convergence(cfg)
    text = report.to_csv()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pyrderham", description="Lowest-order de Rham elements on tet/hex/pyramid meshes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-element", help="duality, exactness and commuting checks per element kind")
    c.add_argument("--fields", type=int, default=5, help="random fields per element")
    c.add_argument("--elements", type=int, default=3, help="random elements per kind")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_element)

    c = sub.add_parser("demo-mesh", help="write the demo hex/pyramid/tet mesh")
    c.add_argument("--perturb", type=float, default=0.0)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_demo_mesh)

    c = sub.add_parser("refine", help="uniformly refine a mesh file")
    c.add_argument("--mesh", required=True)
    c.add_argument("--levels", type=int, default=1)
    c.add_argument("--strategy", choices=STRATEGIES, default="fixed")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_refine)

    c = sub.add_parser("distortion", help="base defects and Jacobian bounds across refinement levels")
    c.add_argument("--mesh", default=None, help="mesh file (default: perturbed demo mesh)")
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--perturb", type=float, default=0.1)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--strategy", choices=STRATEGIES, default="shortest")
    c.set_defaults(func=cmd_distortion)

    c = sub.add_parser("convergence", help="interpolation error study")
    c.add_argument("--space", choices=[s.value for s in Space], required=True)
    c.add_argument("--field", choices=harness.FIELD_NAMES, default="trig")
    c.add_argument("--levels", type=int, default=4)
    c.add_argument("--perturb", type=float, default=0.1)
    c.add_argument("--mesh", default=None)
    c.add_argument("--degree", type=int, default=harness.NORM_DEGREE)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--strategy", choices=STRATEGIES, default="shortest")
    c.add_argument("--out", default=None, help="CSV path (default: stdout)")
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (InvalidMeshError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
