"""Command-line front end.

Every command takes either ``--example NAME`` or ``--config PATH`` (a JSON
scenario), writes its outputs to ``--out`` and exits with 0 on success,
2 when the checked property fails and 1 on operational errors.
"""
import argparse
import hashlib
import importlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import bss, nn
from .dynamics import DynamicsConfig, nash_check, simulate
from .errors import ConfigError, TypedGamesError
from .game import (
    Ball,
    BlackBox,
    Bilinear,
    BlockBall,
    BlockSimplex,
    Box,
    Multilinear,
    Quadratic,
    Unconstrained,
    block_game,
    open_game,
)
from .linalg import simultaneous_diagonalize_symmetric
from .safety import (
    BlockWitness,
    SamplerConfig,
    Verdict,
    certify_bilinear,
    certify_multilinear,
    certify_quadratic_block,
    certify_quadratic_open,
    certify_strong_typing,
    empirical_safety,
)
from .scenarios import Scenario, get_example, newton_direction
from .tensor import hosvd, matricize, recover_symmetric_tensor_svd

EXIT_OK, EXIT_ERROR, EXIT_REFUTED = 0, 1, 2

TOP_KEYS = {"example", "game", "feasible", "start", "dynamics", "sampler", "certificate", "bss", "fa",
            "direction", "seed"}
GAME_KEYS = {"family", "structure", "sizes", "dim", "losses"}
LOSS_KEYS = {"A", "b", "tensor", "fn"}
FEASIBLE_KEYS = {"kind", "center", "radius", "lo", "hi", "sizes"}
DYNAMICS_KEYS = {"step", "eta", "max_rounds", "tol", "weights", "update"}
SAMPLER_KEYS = {"count", "region"}
CERT_KEYS = {"P", "R", "diagonals", "b", "factors"}
BSS_KEYS = {"mode", "D", "L", "T", "batches", "sizes", "dist", "noise"}
FA_KEYS = {"inputs", "outputs", "rank", "alpha", "samples"}


# -- config parsing ---------------------------------------------------------

def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _array(value, where, base_dir):
    """Nested list, or a path (relative to the config file) to a CSV matrix."""
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        try:
            return np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read {path}: {exc}") from None
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a numeric array") from None
    return arr


def _feasible(spec, where, base_dir):
    if spec is None:
        return Unconstrained()
    _check_keys(spec, FEASIBLE_KEYS, where)
    kind = spec.get("kind", "unconstrained")
    try:
        if kind == "unconstrained":
            return Unconstrained()
        if kind == "ball":
            return Ball(_array(spec["center"], f"{where}.center", base_dir), float(spec.get("radius", 1.0)))
        if kind == "box":
            return Box(_array(spec["lo"], f"{where}.lo", base_dir), _array(spec["hi"], f"{where}.hi", base_dir))
        if kind == "block_simplex":
            return BlockSimplex(tuple(spec["sizes"]))
        if kind == "block_ball":
            return BlockBall(tuple(spec["sizes"]), float(spec.get("radius", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]}") from None
    raise ConfigError(f"{where}.kind: unknown feasible set {kind!r}")


def _import_fn(path, where):
    module, _, attr = path.partition(":")
    try:
        return getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"{where}.fn: cannot import {path!r}: {exc}") from None


def _loss(spec, family, where, base_dir):
    _check_keys(spec, LOSS_KEYS, where)
    try:
        if family == "quadratic":
            b = spec.get("b")
            return Quadratic(_array(spec["A"], f"{where}.A", base_dir),
                             None if b is None else _array(b, f"{where}.b", base_dir))
        if family == "bilinear":
            return Bilinear(_array(spec["A"], f"{where}.A", base_dir))
        if family == "multilinear":
            return Multilinear(_array(spec["tensor"], f"{where}.tensor", base_dir))
        if family == "black_box":
            return BlackBox(_import_fn(spec["fn"], where))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]}") from None
    raise ConfigError(f"game.family: unknown loss family {family!r}")


def _game(spec, feasible, base_dir):
    _check_keys(spec, GAME_KEYS, "game")
    family = spec.get("family", "quadratic")
    losses = [_loss(l, family, f"game.losses[{i}]", base_dir) for i, l in enumerate(spec.get("losses", []))]
    if not losses:
        raise ConfigError("game.losses: need at least one loss")
    structure = spec.get("structure", "block")
    if structure == "block":
        if "sizes" not in spec:
            raise ConfigError("game.sizes: required for block games")
        return block_game(losses, tuple(spec["sizes"]), feasible), family
    if structure == "open":
        if "dim" not in spec:
            raise ConfigError("game.dim: required for open games")
        return open_game(losses, int(spec["dim"]), feasible), family
    raise ConfigError(f"game.structure: unknown structure {structure!r}")


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _check_keys(cfg, TOP_KEYS, "config")
    return cfg


def build_scenario(cfg, base_dir="."):
    """Turn a parsed config into a :class:`Scenario` (named examples first, then overrides)."""
    if "example" in cfg:
        try:
            sc = get_example(cfg["example"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        family = None
    else:
        sc = Scenario("config")
        family = None
    if "game" in cfg:
        feasible = _feasible(cfg.get("feasible"), "feasible", base_dir)
        game, family = _game(cfg["game"], feasible, base_dir)
        sc = replace(sc, game=game, kind="game", factorization=None)
    if "start" in cfg:
        sc = replace(sc, start=_array(cfg["start"], "start", base_dir).ravel())
    if "dynamics" in cfg:
        _check_keys(cfg["dynamics"], DYNAMICS_KEYS, "dynamics")
        sc = replace(sc, dynamics=replace(sc.dynamics, **cfg["dynamics"]))
    if "sampler" in cfg:
        _check_keys(cfg["sampler"], SAMPLER_KEYS, "sampler")
        if "region" in cfg["sampler"]:
            sc = replace(sc, region=_feasible(cfg["sampler"]["region"], "sampler.region", base_dir))
    if cfg.get("direction") == "newton":
        sc = replace(sc, direction=newton_direction)
    elif cfg.get("direction") not in (None, "gradient"):
        raise ConfigError(f"direction: unknown direction {cfg['direction']!r}")
    for key, allowed in (("bss", BSS_KEYS), ("fa", FA_KEYS)):
        if key in cfg:
            _check_keys(cfg[key], allowed, key)
            sc = replace(sc, kind=key, params={**sc.params, **cfg[key]})
    if "certificate" in cfg:
        _check_keys(cfg["certificate"], CERT_KEYS, "certificate")
    if sc.kind == "game" and sc.game is None:
        raise ConfigError("config: needs a game or an example")
    return sc, family


# -- reporting --------------------------------------------------------------

class Report:
    def __init__(self, title, config_hash, seed):
        self.lines = [title, f"config_sha256: {config_hash}", f"seed: {seed}"]
        self.summary = {"command": title, "config_sha256": config_hash, "seed": seed}

    def add(self, key, value):
        self.lines.append(f"{key}: {_fmt(value)}")
        self.summary[key] = _jsonable(value)

    def write(self, out_dir, stem):
        os.makedirs(out_dir, exist_ok=True)
        text = "\n".join(self.lines) + "\n"
        with open(os.path.join(out_dir, f"{stem}.txt"), "w") as fh:
            fh.write(text)
        with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        sys.stdout.write(text)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Verdict):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _fmt(value):
    if isinstance(value, Verdict):
        return value.value
    if isinstance(value, (np.ndarray, list, tuple)):
        return json.dumps(_jsonable(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_matrix_csv(path, M):
    M = np.atleast_2d(M)
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


# -- commands ---------------------------------------------------------------

def _sampler(args, sc):
    return SamplerConfig(args.samples, args.seed, sc.region)


def cmd_check_safety(sc, args, report):
    if sc.kind == "fa":
        return _fa_sweep(sc, args, report)
    if sc.kind != "game":
        raise ConfigError(f"check-safety does not apply to {sc.kind} scenarios")
    res = empirical_safety(sc.game, _sampler(args, sc), direction=sc.direction, tol=args.tol)
    report.add("verdict", res.verdict)
    report.add("samples", res.n_samples)
    report.add("worst_value", res.worst_value)
    report.add("worst_pair", res.worst_pair)
    report.add("worst_point", res.worst_point)
    report.add("pair_min", res.pair_min)
    return EXIT_OK if res.is_safe else EXIT_REFUTED


def _fa_sweep(sc, args, report):
    p = sc.params
    rng = np.random.default_rng(args.seed)
    worst = np.inf
    for _ in range(int(p.get("samples", args.samples))):
        W = rng.standard_normal((p["outputs"], p["rank"])) @ rng.standard_normal((p["rank"], p["inputs"]))
        pair = nn.LayerPair.aligned(W, p["alpha"])
        worst = min(worst, nn.fa_safety(pair, rng.standard_normal(p["outputs"])))
    ok = worst >= -args.tol
    report.add("verdict", Verdict.SAFE if ok else Verdict.VIOLATION)
    report.add("min_fa_safety", float(worst))
    return EXIT_OK if ok else EXIT_REFUTED


def cmd_simulate(sc, args, report, out_dir):
    if sc.kind != "game":
        raise ConfigError(f"simulate does not apply to {sc.kind} scenarios")
    if sc.start is None:
        raise ConfigError("start: a starting point is required for simulation")
    config = replace(sc.dynamics, seed=args.seed)
    if args.rounds is not None:
        config = replace(config, max_rounds=args.rounds)
    traj = simulate(sc.game, sc.start, config)
    os.makedirs(out_dir, exist_ok=True)
    traj.to_csv(os.path.join(out_dir, "trajectory.csv"))
    verdicts = nash_check(sc.game, traj.final, tol=1e-3)
    report.add("rounds", traj.rounds)
    report.add("termination", traj.reason)
    report.add("final_point", traj.final)
    report.add("final_losses", traj.losses[-1])
    for v in verdicts:
        report.add(f"nash_player_{v.player}", "pass" if v.is_nash else f"fail (gain {v.best_gain!r})")
    return EXIT_OK if all(v.is_nash for v in verdicts) else EXIT_REFUTED


def _certificate(sc, family, cert_cfg, base_dir):
    game = sc.game
    if sc.factorization is not None:
        return certify_strong_typing(game, sc.factorization)
    losses = game.losses
    if all(isinstance(l, BlackBox) for l in losses) or family == "black_box":
        raise ConfigError("certification is unsupported for black-box losses; use check-safety instead")
    if all(isinstance(l, Quadratic) for l in losses):
        mats, vecs = [l.A for l in losses], [l.b for l in losses]
        if game.types.rank == 1:
            return certify_quadratic_open(mats, vecs)
        if not game.is_block:
            raise ConfigError("quadratic certificates need an open or a block game")
        sizes = tuple(game.player_projection(n).rank for n in range(game.n_players))
        witness = None
        if cert_cfg and "P" in cert_cfg:
            witness = BlockWitness(*(_array(cert_cfg[k], f"certificate.{k}", base_dir)
                                     for k in ("P", "R", "diagonals", "b")))
        return certify_quadratic_block(mats, vecs, sizes, witness)
    if all(isinstance(l, Bilinear) for l in losses) and len(losses) == 2:
        return certify_bilinear(losses[0].A, losses[1].A)
    if all(isinstance(l, Multilinear) for l in losses):
        if not cert_cfg or "factors" not in cert_cfg:
            raise ConfigError("multilinear certificates need certificate.factors and certificate.diagonals")
        factors = [_array(U, f"certificate.factors[{i}]", base_dir) for i, U in enumerate(cert_cfg["factors"])]
        return certify_multilinear([l.tensor for l in losses], factors,
                                   _array(cert_cfg["diagonals"], "certificate.diagonals", base_dir))
    raise ConfigError("no certificate applies to this mix of loss families")


def cmd_certify(sc, args, report, family, cfg, base_dir):
    if sc.kind != "game":
        raise ConfigError(f"certification is unsupported for {sc.kind} scenarios")
    res = _certificate(sc, family, cfg.get("certificate"), base_dir)
    report.add("verdict", res.verdict)
    report.add("reason", res.reason)
    if res.violation is not None:
        report.add("violation", res.violation)
    report.add("empirical", res.empirical)
    for key in sorted(res.witness):
        report.add(f"witness.{key}", res.witness[key])
    return EXIT_OK if res.certified else EXIT_REFUTED


def cmd_decompose(args, report, out_dir):
    if args.input is None:
        raise ConfigError("decompose needs --input")
    try:
        with open(args.input) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {args.input}: {exc}") from None
    os.makedirs(out_dir, exist_ok=True)
    if args.mode == "joint-diag":
        mats = [np.asarray(A, dtype=float) for A in data["matrices"]]
        P, diags = simultaneous_diagonalize_symmetric(mats)
        write_matrix_csv(os.path.join(out_dir, "P.csv"), P)
        write_matrix_csv(os.path.join(out_dir, "diagonals.csv"), diags)
        res = max(np.linalg.norm(A - P @ np.diag(d) @ P.T) for A, d in zip(mats, diags))
        report.add("reconstruction_residual", float(res))
        return EXIT_OK
    T = np.asarray(data["tensor"], dtype=float)
    if args.mode == "hosvd":
        h = hosvd(T)
        write_matrix_csv(os.path.join(out_dir, "core_mode0.csv"), matricize(h.core, 0))
        for n, U in enumerate(h.factors):
            write_matrix_csv(os.path.join(out_dir, f"factor_{n}.csv"), U)
        report.add("reconstruction_residual", float(np.linalg.norm(T - h.reconstruct())))
        report.add("singular_values", h.singular_values)
        return EXIT_OK
    rank = int(data.get("rank", T.shape[0]))
    f = recover_symmetric_tensor_svd(T, rank)
    write_matrix_csv(os.path.join(out_dir, "factors.csv"), f.factors[0])
    write_matrix_csv(os.path.join(out_dir, "d.csv"), f.d[None, :])
    report.add("d", f.d)
    return EXIT_OK


def cmd_bss(sc, args, report, out_dir):
    if sc.kind != "bss":
        raise ConfigError("bss needs a bss scenario (bss-open, bss-block, ica or a bss config section)")
    p = sc.params
    mode, seed = p.get("mode", "open"), args.seed
    os.makedirs(out_dir, exist_ok=True)
    if mode == "open":
        model = bss.MixingModel.orthogonal(p["D"], seed, p.get("noise", 0.0))
        batches = bss.shared_mixing_batches(model, p.get("batches", 3), p["T"], p.get("dist", "uniform"), seed)
        cert = bss.certify_pca(batches)
        safety = empirical_safety(bss.pca_game(batches, normalized=True), SamplerConfig(args.samples, seed),
                                  tol=1e-6)
        report.add("certificate", cert.verdict)
        report.add("safety", safety.verdict)
        report.add("min_pairwise", safety.worst_value)
        ok = cert.certified and safety.is_safe
    elif mode == "block":
        model = bss.MixingModel.block_view(tuple(p["sizes"]), p["L"], seed, p.get("noise", 0.0))
        rep = bss.block_view_demo(model, T=p["T"], seed=seed, samples=args.samples)
        report.add("certificate", rep.certificate.verdict)
        report.add("safety", rep.safety.verdict)
        report.add("rounds", rep.trajectory_rounds)
        report.add("termination", rep.trajectory_reason)
        ok = rep.certificate.certified and rep.safety.is_safe
    elif mode == "ica":
        D = p["D"]
        model = bss.MixingModel.orthogonal(D, seed, p.get("noise", 0.0))
        S = bss.generate_sources(D, p["T"], p.get("dist", "uniform"), seed + 1)
        X = bss.mix(model, S, seed + 2)
        res = bss.recover_mixing(X, truth=model.M)
        write_matrix_csv(os.path.join(out_dir, "recovered_mixing.csv"), res.mixing)
        report.add("reliable", res.reliable)
        if res.reason:
            report.add("reason", res.reason)
        report.add("kurtosis", res.kurtosis)
        report.add("angles_deg", res.angles)
        ok = res.reliable and bool(np.all(res.angles <= 5.0))
    else:
        raise ConfigError(f"bss.mode: unknown mode {mode!r}")
    return EXIT_OK if ok else EXIT_REFUTED


# -- entry point ------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="typedgames", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check-safety", "simulate", "certify", "decompose", "bss"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON scenario file")
        p.add_argument("--example", help="named example scenario")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config seed or 0)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--samples", type=int, default=None, help="safety samples (default: config or 1000)")
        p.add_argument("--rounds", type=int, default=None)
        p.add_argument("--tol", type=float, default=1e-9)
        if name == "decompose":
            p.add_argument("--input", help="JSON file with 'tensor' or 'matrices'")
            p.add_argument("--mode", choices=("hosvd", "tensor-svd-recover", "joint-diag"), default="hosvd")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, TypedGamesError, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


def _run(args):
    base_dir = "."
    if args.config:
        cfg = load_config(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        if args.example:
            cfg = {**cfg, "example": args.example}
    else:
        cfg = {"example": args.example} if args.example else {}
    if args.seed is None:
        args.seed = int(cfg.get("seed", 0))
    if args.samples is None:
        args.samples = int(cfg.get("sampler", {}).get("count", 1000))
    hashed = {**cfg, "_cli": {"command": args.command, "samples": args.samples, "rounds": args.rounds,
                              "tol": args.tol}}
    report = Report(args.command, config_hash(hashed), args.seed)
    stem = args.command.replace("-", "_")
    if args.command == "decompose":
        report.add("mode", args.mode)
        code = cmd_decompose(args, report, args.out)
        report.write(args.out, stem)
        return code
    if not cfg:
        raise ConfigError("pass --config or --example")
    sc, family = build_scenario(cfg, base_dir)
    report.add("scenario", sc.name)
    if args.command == "check-safety":
        code = cmd_check_safety(sc, args, report)
    elif args.command == "simulate":
        code = cmd_simulate(sc, args, report, args.out)
    elif args.command == "certify":
        code = cmd_certify(sc, args, report, family, cfg, base_dir)
    else:
        code = cmd_bss(sc, args, report, args.out)
    report.add("exit_code", code)
    report.write(args.out, stem)
    return code


if __name__ == "__main__":
    sys.exit(main())
