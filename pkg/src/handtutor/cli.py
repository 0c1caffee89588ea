"""Command-line front door: fit styles, generate guides, run experiments, serve sessions.

Exit codes: 0 success, 1 runtime error, 2 usage or validation error. Progress
goes to stderr; data goes to files or stdout only.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
from pathlib import Path

import numpy as np

MODEL_FILE_VERSION = 1
TRAJECTORY_FILE_VERSION = 1


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _log(message: str):
    print(message, file=sys.stderr)


def _load_trajectory_file(path: Path):
    from .corpus import WaypointSeq

    raw = json.loads(path.read_text(encoding="utf-8"))
    return WaypointSeq(np.asarray(raw["timestamps"], dtype=float), np.asarray(raw["points"], dtype=float))


def _model_to_dict(model) -> dict:
    return {
        "version": MODEL_FILE_VERSION,
        "weights": list(map(float, model.weights)),
        "means": [list(map(float, row)) for row in model.means],
        "covariances": [[float(v) for v in cov.reshape(-1)] for cov in model.covariances],
        "metadata": {
            "seed": model.metadata.get("seed"),
            "requested_components": model.metadata.get("requested_components"),
            "pruned_components": model.metadata.get("pruned_components"),
        },
    }


def _model_from_dict(raw: dict):
    from .style import GmmModel

    if raw.get("version") != MODEL_FILE_VERSION:
        raise ValueError(f"unsupported model file version {raw.get('version')!r}")
    covs = np.array([np.asarray(c, dtype=float).reshape(3, 3) for c in raw["covariances"]])
    return GmmModel(
        np.asarray(raw["weights"], dtype=float),
        np.asarray(raw["means"], dtype=float),
        covs,
        metadata=raw.get("metadata", {}),
    )


def cmd_fit_style(args) -> int:
    from .style import StyleDataset, fit_gmm

    writings = []
    for path in args.input:
        p = Path(path)
        if not p.exists():
            return _fail(f"input file not found: {p}", 2)
        writings.append(_load_trajectory_file(p))
    data = StyleDataset.from_writings(writings)
    model = fit_gmm(data, args.z, args.seed)
    out = Path(args.out)
    out.write_text(json.dumps(_model_to_dict(model), sort_keys=True, indent=1), encoding="utf-8")
    _log(f"fitted {model.n_components}-component style model on {len(data)} samples -> {out}")
    return 0


def cmd_generate(args) -> int:
    from .corpus import load_character_set
    from .gmrgp import generate_training_waypoints
    from .style import StyleDataset, style_mean_curve
    from .viapoints import extract_via_points

    if args.h < 1:
        return _fail("--h must be >= 1", 2)
    model = _model_from_dict(json.loads(Path(args.style_model).read_text(encoding="utf-8")))
    charset = load_character_set(args.characters or default_character_path())
    if args.character not in charset.by_id:
        return _fail(f"unknown character id {args.character!r}", 2)

    from .corpus import resample_character, normalize_character

    char = normalize_character(charset[args.character], (args.workspace, args.workspace))
    duration = args.duration if args.duration else float(char.stroke_count)
    strokes = resample_character(char, args.n, duration)

    results = []
    for seq in strokes:
        h_eff = max(1, min(args.h, len(seq) // 4))
        via = extract_via_points(seq, h_eff)
        curve = style_mean_curve(model, seq.timestamps)
        data = StyleDataset(np.tile(seq.timestamps, 3), np.tile(curve.points, (3, 1)), 3)
        teaching, posterior = generate_training_waypoints(
            model, via, data, seq.timestamps, seed=args.seed
        )
        results.append({
            "timestamps": list(map(float, teaching.timestamps)),
            "points": [list(map(float, p)) for p in teaching.points],
            "band": [[float(c[0, 0]), float(c[0, 1]), float(c[1, 1])] for c in posterior.covariances],
            "via_points": {
                "count_interior": int(via.h),
                "times": list(map(float, via.times)),
                "points": [list(map(float, p)) for p in via.points],
            },
        })
    payload = {"version": TRAJECTORY_FILE_VERSION, "character": args.character, "strokes": results}
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
    _log(f"generated teaching trajectory for {args.character!r} -> {args.out}")
    return 0


def cmd_experiment(args) -> int:
    from .corpus import load_character_set
    from .metrics import emit_report
    from .teaching import ExperimentConfig, run_experiment

    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = ExperimentConfig.from_dict(raw)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        raw = cfg.to_dict()
        raw["master_seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
    charset = load_character_set(args.characters or default_character_path())
    _log(f"running experiment: seed={cfg.master_seed} learners={len(cfg.levels)} parallel={args.parallel}")
    report = run_experiment(cfg, charset, parallel=args.parallel)
    files = emit_report(report, args.out)
    for f in files:
        _log(f"wrote {f}")
    means = report.method_means("improvement_m2")
    _log("mean improvement (stroke metric): " + ", ".join(f"{k}={v:.1f}%" for k, v in means.items()))
    return 0


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    from .service import create_app

    app = create_app(
        store_path=args.store,
        character_path=args.characters or default_character_path(),
        ui_dir=args.ui,
    )
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((args.host, args.port))
    except OSError as exc:
        return _fail(f"cannot bind {args.host}:{args.port}: {exc}")
    bound_port = sock.getsockname()[1]
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)

    def _graceful(signum, frame):
        server.should_exit = True

    signal.signal(signal.SIGTERM, _graceful)
    print(f"listening on {args.host}:{bound_port}", file=sys.stderr, flush=True)
    server.run(sockets=[sock])
    return 0


def default_character_path() -> str:
    from importlib import resources

    return str(resources.files("handtutor").joinpath("data/characters.json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handtutor",
        description="Adaptive handwriting-teaching engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit-style", help="fit a writing-style model from trajectory files")
    fit.add_argument("--input", nargs="+", required=True, help="trajectory JSON files")
    fit.add_argument("--z", type=int, default=8, help="mixture components")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="output model file")
    fit.set_defaults(func=cmd_fit_style)

    gen = sub.add_parser("generate", help="generate a teaching trajectory from a style model")
    gen.add_argument("--style-model", required=True)
    gen.add_argument("--characters", default=None, help="character-set file (default: built-in)")
    gen.add_argument("--character", required=True, help="character id")
    gen.add_argument("--h", type=int, default=5, help="via-points per stroke")
    gen.add_argument("--n", type=int, default=200, help="waypoints per character")
    gen.add_argument("--duration", type=float, default=None, help="writing duration (s); default 1 s per stroke")
    gen.add_argument("--workspace", type=float, default=0.35)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    exp = sub.add_parser("experiment", help="run the full simulated-learner experiment")
    exp.add_argument("--config", default=os.environ.get("HANDTUTOR_CONFIG"))
    exp.add_argument("--characters", default=None)
    exp.add_argument("--out", required=True, help="report output directory")
    exp.add_argument("--seed", type=int, default=None, help="override master seed")
    exp.add_argument("--parallel", type=int, default=1)
    exp.set_defaults(func=cmd_experiment)

    srv = sub.add_parser("serve", help="start the live session service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000, help="0 binds an ephemeral port")
    srv.add_argument("--characters", default=None)
    srv.add_argument("--store", default="sessions.jsonl", help="session event-log file")
    srv.add_argument("--ui", default=None, help="frontend directory to serve at /app")
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        return _fail(str(exc), 2)
    except Exception as exc:  # runtime failures
        return _fail(f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
