"""Command-line surface: propagate, craf, pipeline, fit, gradcheck.

Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 numerical
failure. Diagnostics go to stderr; output depends only on the declared
inputs.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from .craf import CrafParams, apply_craf
from .formats import (
    FormatError,
    RunConfig,
    parse_config,
    read_labels,
    read_mask,
    read_raster,
    write_labels,
    write_raster,
)
from .learning import DivergenceError, FitConfig, finite_diff_check, fit_guidance
from .pipeline import FrameBundle, PipelineParams, process_sequence
from .propagation import AffinityField, project_stable, refine
from .raster import ScoreMap, SequenceState

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4

_FRAME_RE = re.compile(r"^frame(\d{5})\.fg\.pgm$")
_OBJECT_RE = re.compile(r"^obj(\d{2})\.f32r$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; the contract reserves 2
    # for format errors, so usage problems are rerouted through UsageError.
    def error(self, message):
        raise UsageError(message)


def _craf_params(cfg: RunConfig) -> CrafParams:
    return CrafParams(
        alpha=cfg.alpha,
        beta=cfg.beta,
        gamma=cfg.gamma,
        delta=cfg.delta,
        connectivity=cfg.connectivity,
    )


def _load_config(path: str | None) -> RunConfig:
    return parse_config(path) if path else RunConfig()


def _read_score_map(path) -> ScoreMap:
    raster = read_raster(path)
    if not isinstance(raster, ScoreMap):
        raise FormatError(f"{path}: expected a 1-channel score raster")
    return raster


def _read_affinity(path) -> AffinityField:
    raster = read_raster(path)
    if not isinstance(raster, AffinityField):
        raise FormatError(f"{path}: expected a 12-channel affinity raster")
    return raster


def _contiguous_ids(found: list[int], what: str, start: int) -> None:
    expected = list(range(start, start + len(found)))
    if not found or found != expected:
        raise FormatError(f"{what} must be contiguous from {start}, found {found}")


def cmd_propagate(args) -> int:
    scores = _read_score_map(args.input)
    field = _read_affinity(args.affinity)
    write_raster(args.output, refine(scores, field))
    return EXIT_OK


def cmd_craf(args) -> int:
    cfg = _load_config(args.config)
    scores_dir = Path(args.scores)
    object_ids = sorted(
        int(m.group(1)) for p in scores_dir.iterdir() if (m := _OBJECT_RE.match(p.name))
    )
    _contiguous_ids(object_ids, f"{scores_dir}: object score rasters", 1)
    score_maps = [_read_score_map(scores_dir / f"obj{i:02d}.f32r") for i in object_ids]
    state = SequenceState(
        tuple(read_mask(Path(args.state) / f"obj{i:02d}.pgm") for i in object_ids)
    )
    masked = apply_craf(score_maps, state, _craf_params(cfg))
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, scores in zip(object_ids, masked):
        write_raster(out_dir / f"obj{i:02d}.f32r", scores)
    return EXIT_OK


def _load_sequence(seq_dir: Path, instance_count: int) -> list[FrameBundle]:
    indices = sorted(
        int(m.group(1)) for p in seq_dir.iterdir() if (m := _FRAME_RE.match(p.name))
    )
    _contiguous_ids(indices, f"{seq_dir}: frame indices", 0)
    shared_affinity = seq_dir / "affinity.f32r"
    bundles = []
    for t in indices:
        fg = read_mask(seq_dir / f"frame{t:05d}.fg.pgm")
        scores = []
        for k in range(1, instance_count + 1):
            score_path = seq_dir / f"frame{t:05d}.obj{k:02d}.f32r"
            if not score_path.exists():
                raise FormatError(f"missing score raster {score_path}")
            scores.append(_read_score_map(score_path))
        frame_affinity = seq_dir / f"frame{t:05d}.aff.f32r"
        if frame_affinity.exists():
            affinity = _read_affinity(frame_affinity)
        elif shared_affinity.exists():
            affinity = _read_affinity(shared_affinity)
        else:
            raise FormatError(
                f"no affinity raster for frame {t}: need {frame_affinity.name} or affinity.f32r"
            )
        bundles.append(
            FrameBundle(index=t, foreground=fg, scores=tuple(scores), affinity=affinity)
        )
    return bundles


def cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    annotation = read_labels(args.annotation)
    instance_count = annotation.max_label
    bundles = _load_sequence(Path(args.sequence), instance_count)
    params = PipelineParams(
        craf=_craf_params(cfg),
        bg_threshold=cfg.bg_threshold,
        use_spn=cfg.spn,
        use_craf=cfg.craf,
    )
    labels = process_sequence(bundles, annotation, params)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for bundle, frame_labels in zip(bundles, labels):
        write_labels(out_dir / f"frame{bundle.index:05d}.labels.pgm", frame_labels)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    coarse = _read_score_map(args.coarse)
    target = read_mask(args.target)
    fit_cfg = FitConfig(
        learning_rate=cfg.learning_rate,
        iterations=cfg.iterations,
        loss_clamp_epsilon=cfg.eps,
    )
    field, losses = fit_guidance(coarse, target, fit_cfg)
    write_raster(args.output, field)
    print(f"fit: initial loss {losses[0]:.6g}, final loss {losses[-1]:.6g}, "
          f"{cfg.iterations} iterations")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.size < 2 or args.size > 16:
        raise UsageError("--size must lie in [2, 16]")
    rng = np.random.default_rng(args.seed)
    x = ScoreMap(rng.uniform(0.0, 1.0, size=(args.size, args.size)))
    field = project_stable(
        AffinityField(rng.uniform(-1.0, 1.0, size=(args.size, args.size, 4, 3)))
    )
    report = finite_diff_check(x, field, seed=args.seed)
    print(
        f"gradcheck: max relative error {report.max_rel_error:.6e} "
        f"at {report.worst_coordinate} ({report.coordinates_checked} coordinates)"
    )
    if report.max_rel_error > args.tol:
        print(f"gradcheck: exceeds tolerance {args.tol:.1e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="propseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("propagate",
                       help="refine one score raster under an affinity raster")
    p.add_argument("--input", required=True, help="input score raster (.f32r, 1 channel)")
    p.add_argument("--affinity", required=True, help="affinity raster (.f32r, 12 channels)")
    p.add_argument("--output", required=True, help="output score raster")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("craf",
                       help="filter one frame's per-object score rasters")
    p.add_argument("--scores", required=True, help="directory of objNN.f32r score rasters")
    p.add_argument("--state", required=True,
                   help="directory of objNN.pgm previous-frame region masks")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--output", required=True, help="directory for the masked objNN.f32r rasters")
    p.set_defaults(func=cmd_craf)

    p = sub.add_parser("pipeline",
                       help="process a frame sequence into label maps")
    p.add_argument("--sequence", required=True, help="sequence directory (see README layout)")
    p.add_argument("--annotation", required=True, help="frame 0 instance annotation (.pgm)")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--output", required=True, help="directory for frameNNNNN.labels.pgm outputs")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("fit",
                       help="fit per-pixel affinities for a coarse mask / target pair")
    p.add_argument("--coarse", required=True, help="coarse score raster (.f32r)")
    p.add_argument("--target", required=True, help="target mask (.pgm)")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--output", required=True, help="output affinity raster (.f32r)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients against finite differences")
    p.add_argument("--size", type=int, default=8, help="grid side length (default 8)")
    p.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    p.add_argument("--tol", type=float, default=GRADCHECK_TOLERANCE,
                   help="max relative error accepted (default 1e-4)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"propseg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"propseg: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError, ValueError) as exc:
        print(f"propseg: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def entry() -> None:
    raise SystemExit(main())
