"""Command-line entry points.

Subcommands: finetune, train-policy, eval, export-curves, replay, serve.
Exit codes: 0 success, 2 configuration error, 3 runtime error. Errors print
as single-line JSON on stderr for machine parsing.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from ..errors import ConfigError, GraspTuneError, InsufficientEpisodesError
from ..finetune import (
    EpisodeRecord,
    OracleRewardChannel,
    SessionLog,
    append_episode,
    episode_rng,
    init_distribution,
    load_session,
    rank_elites,
    refit_distribution,
    run_session,
    sample_residual,
    session_paths,
    write_session_header,
)
from ..policy import (
    PolicyConfig,
    load_policy,
    save_policy,
    train_direct_vae,
    train_mlp_head,
    train_policy,
)
from ..simenv import BiasedOraclePrior, EmbeddingRewardChannel, GraspEnvironment, load_task, load_task_file
from .api import HumanRewardChannel, ServerHandle, SessionBridge, serve_api
from .config import load_run_config
from .curves import DEFAULT_WINDOW, curve_rows, write_curves_csv
from .evaluation import METHODS, run_eval


def _emit(doc: dict) -> None:
    print(json.dumps(doc), flush=True)


def _task_from_arg(value: str):
    if value.endswith(".json"):
        return load_task_file(value)
    return load_task(value)


def _default_ui_dir() -> Path | None:
    candidate = Path.cwd() / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


# --------------------------------------------------------------------------
# finetune
# --------------------------------------------------------------------------


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    env = GraspEnvironment(cfg.task, seed=cfg.seed, feature_dim=cfg.feature_dim)
    prior = BiasedOraclePrior(cfg.task)

    resume = None
    header_path, episodes_path = session_paths(cfg.output_dir)
    if args.resume:
        if not header_path.exists():
            raise ConfigError(f"cannot resume: no session at {cfg.output_dir}")
        resume = load_session(cfg.output_dir)
    else:
        if episodes_path.exists():
            raise ConfigError(
                f"{episodes_path} already exists; use --resume or a fresh output_dir"
            )
        write_session_header(
            cfg.output_dir,
            cfg.session,
            {
                "task_id": cfg.task.task_id,
                "reward_mode": cfg.reward_mode,
                "feature_dim": cfg.feature_dim,
                "started_at": time.time(),
            },
        )

    bridge = SessionBridge(
        session_config=cfg.session,
        task_id=cfg.task.task_id,
        display_name=cfg.task.display_name,
        reward_mode=cfg.reward_mode,
    )
    if resume is not None:
        for record in resume.episodes:
            bridge.add_record(record)

    server = None
    if cfg.reward_mode == "human" or args.serve:
        ui_dir = Path(args.ui) if args.ui else _default_ui_dir()
        server, address = serve_api(bridge, cfg.bind_parts(), ui_dir)
        _emit({"event": "serving", "address": address})

    if cfg.reward_mode == "oracle":
        channel = OracleRewardChannel()
    elif cfg.reward_mode == "embedding":
        channel = EmbeddingRewardChannel(env.goal_features(), cfg.embedding_scale)
    else:
        channel = HumanRewardChannel(
            bridge, timeout_s=cfg.reward_timeout_s, on_timeout=cfg.on_timeout
        )

    def on_episode(record: EpisodeRecord) -> None:
        append_episode(cfg.output_dir, record)
        bridge.add_record(record)

    try:
        log = run_session(env, prior, channel, cfg.session,
                          on_episode=on_episode, resume=resume)
    finally:
        if server is not None and not args.hold:
            bridge.finish("finished")
            server.stop()

    aborted = "aborted" in log.meta
    bridge.finish("aborted" if aborted else "finished")
    _emit(
        {
            "event": "finished" if not aborted else "aborted",
            "output_dir": str(cfg.output_dir),
            "episodes": len(log.episodes),
            "mean_reward": float(np.mean([r.reward for r in log.episodes]))
            if log.episodes
            else None,
        }
    )
    if server is not None and args.hold:
        _hold(server)
    return 3 if aborted else 0


def _hold(server: ServerHandle) -> None:
    try:
        while True:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


# --------------------------------------------------------------------------
# train-policy
# --------------------------------------------------------------------------


def _elite_pairs(log: SessionLog, top: int, absolute: bool):
    positions = rank_elites(log, top)
    pairs = []
    for pos in positions:
        rec = log.episodes[pos]
        context = np.concatenate([rec.features, rec.prior.as_vector()])
        target = rec.executed.as_vector() if absolute else rec.residual
        pairs.append((target, context))
    return pairs


def cmd_train_policy(args: argparse.Namespace) -> int:
    log = load_session(args.log)
    if len(log.episodes) < args.top:
        raise InsufficientEpisodesError(
            f"policy training needs >= {args.top} episodes, log has {len(log.episodes)}"
        )
    cfg = PolicyConfig(
        latent_dim=args.latent,
        hidden=args.hidden,
        beta=args.beta,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        head_type=args.head,
    )
    pairs = _elite_pairs(log, args.top, absolute=args.head == "direct-vae")
    if args.head == "cvae":
        head = train_policy(pairs, cfg)
    elif args.head == "mlp":
        head = train_mlp_head(pairs, cfg)
    else:
        head = train_direct_vae(pairs, cfg)
    save_policy(head, args.out)
    _emit(
        {
            "event": "trained",
            "head": args.head,
            "elites": args.top,
            "out": str(args.out),
            "final_loss": head.loss_curve[-1] if head.loss_curve else None,
        }
    )
    return 0


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    spec = _task_from_arg(args.task)
    policy = None
    if args.method == "deft":
        if not args.policy:
            raise ConfigError("method 'deft' requires --policy weights")
        policy = load_policy(args.policy)
    prior = BiasedOraclePrior(spec)
    reports = [
        run_eval(
            spec,
            args.method,
            prior,
            trials=args.trials,
            seed=seed,
            policy=policy,
            feature_dim=args.feature_dim,
        )
        for seed in range(args.seed_base, args.seed_base + args.seeds)
    ]
    summary = {
        "event": "eval",
        "task_id": spec.task_id,
        "method": args.method,
        "seeds": args.seeds,
        "trials_per_seed": args.trials,
        "total_successes": sum(r.successes for r in reports),
        "total_trials": sum(r.trials for r in reports),
    }
    if args.out:
        Path(args.out).write_text(
            json.dumps({**summary, "reports": [r.to_dict() for r in reports]}, indent=2)
            + "\n"
        )
    _emit(summary)
    return 0


# --------------------------------------------------------------------------
# export-curves / replay / serve
# --------------------------------------------------------------------------


def cmd_export_curves(args: argparse.Namespace) -> int:
    logs = [(Path(d).name, load_session(d)) for d in args.log]
    rows = curve_rows(logs, window=args.window)
    write_curves_csv(rows, args.out)
    _emit({"event": "curves", "rows": len(rows), "out": str(args.out)})
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    log = load_session(args.log)
    cfg = log.config
    dist = init_distribution(cfg)
    replay = SessionLog(config=cfg)
    residuals_ok = snapshots_ok = elites_ok = True
    for record in log.episodes:
        k = record.index
        expected_eps = sample_residual(dist, episode_rng(cfg.seed, k))
        residuals_ok &= bool(np.allclose(expected_eps, record.residual, atol=0.0))
        replay.episodes.append(record)
        positions = rank_elites(replay, min(cfg.elites, len(replay.episodes)))
        if k > cfg.warmup:
            dist = refit_distribution(replay, min(cfg.elites, len(replay.episodes)))
        snapshots_ok &= bool(
            np.allclose(dist.mean, record.dist_mean, atol=0.0)
            and np.allclose(dist.std, record.dist_std, atol=0.0)
        )
        elites_ok &= tuple(replay.episodes[i].index for i in positions) == record.elites
    ok = residuals_ok and snapshots_ok and elites_ok
    _emit(
        {
            "event": "replay",
            "episodes": len(log.episodes),
            "residuals_ok": residuals_ok,
            "snapshots_ok": snapshots_ok,
            "elites_ok": elites_ok,
        }
    )
    return 0 if ok else 3


def cmd_serve(args: argparse.Namespace) -> int:
    log = load_session(args.log)
    header = json.loads((Path(args.log) / "session.json").read_text())
    meta = header.get("meta", {})
    bridge = SessionBridge(
        session_config=log.config,
        task_id=str(meta.get("task_id", "unknown")),
        display_name=str(meta.get("task_id", "session")),
        reward_mode=str(meta.get("reward_mode", "oracle")),
        state="finished",
    )
    for record in log.episodes:
        bridge.add_record(record)
    host, _, port = args.bind.rpartition(":")
    ui_dir = Path(args.ui) if args.ui else _default_ui_dir()
    server, address = serve_api(bridge, (host, int(port)), ui_dir)
    _emit({"event": "serving", "address": address, "episodes": len(log.episodes)})
    _hold(server)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grasptune",
        description="Grasp-prior fine-tuning: residual CEM, policy distillation, "
        "evaluation, and the operator reward API.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("finetune", help="run a fine-tuning session from a config file")
    p.add_argument("--config", required=True, help="run-config JSON path")
    p.add_argument("--resume", action="store_true", help="continue a partial session")
    p.add_argument("--serve", action="store_true",
                   help="serve the API even in oracle/embedding mode")
    p.add_argument("--hold", action="store_true",
                   help="keep serving after the session finishes")
    p.add_argument("--ui", default=None, help="static UI directory to serve at /")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("train-policy", help="distill a session log into a policy")
    p.add_argument("--log", required=True, help="session output directory")
    p.add_argument("--out", required=True, help="weights JSON path")
    p.add_argument("--head", default="cvae", choices=("cvae", "mlp", "direct-vae"))
    p.add_argument("--top", type=int, default=10, help="elite episodes to train on")
    p.add_argument("--latent", type=int, default=4)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("eval", help="score a grasping method over fresh instances")
    p.add_argument("--task", required=True, help="task id or task JSON path")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seeds", type=int, default=10, help="number of evaluation seeds")
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--policy", default=None, help="weights JSON (required for deft)")
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--out", default=None, help="write the full report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-curves", help="episode rewards and moving averages as CSV")
    p.add_argument("--log", nargs="+", required=True, help="session directories")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.set_defaults(func=cmd_export_curves)

    p = sub.add_parser("replay", help="verify a session log reproduces deterministically")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve a finished session (and the UI) read-only")
    p.add_argument("--log", required=True)
    p.add_argument("--bind", default="127.0.0.1:8700")
    p.add_argument("--ui", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except GraspTuneError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 3


if __name__ == "__main__":
    sys.exit(main())
