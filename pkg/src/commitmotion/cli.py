"""Command-line pipeline: synth -> fit -> grid / passes -> cluster."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import gmm, ingest, kde, passing, spatial, synth
from .grid import GridSpec, Pitch

log = logging.getLogger("commitmotion")

GLOBAL_DEFAULTS = {
    "out": ".",
    "seed": 0,
    "pitch": "160x130",
    "ball_speed": spatial.BALL_SPEED,
    "cell_size": 2.0,
    "bandwidth_scale": 1.0,
}
FEATURES = ("dominance", "influence", "distance", "equity")


class CliError(Exception):
    pass


class UsageError(CliError):
    pass


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = {"default": argparse.SUPPRESS}
    p.add_argument("--out", metavar="DIR", **d, help="output directory (default: .)")
    p.add_argument("--seed", type=int, metavar="N", **d, help="random seed (default: 0)")
    p.add_argument("--pitch", metavar="LxW", **d, help="ellipse box in metres (default: 160x130)")
    p.add_argument("--ball-speed", type=_positive(float), metavar="S", **d, help="m/s (default: 20)")
    p.add_argument("--cell-size", type=_positive(float), metavar="C", **d, help="grid cell in metres (default: 2)")
    p.add_argument("--bandwidth-scale", type=_positive(float), metavar="B", **d, help="KDE bandwidth factor (default: 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="commitmotion", parents=[common],
                                     description="Commitment-based motion models and spatial pass analysis.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic match with known commitment rule")
    p.add_argument("--n-contests", type=int, default=100)
    p.add_argument("--n-marks", type=int, default=None)
    p.add_argument("--players-per-team", type=int, default=18)
    p.add_argument("--noise", type=float, default=0.2, help="positional noise sd in metres")
    p.add_argument("--kick-speed", type=_positive(float), default=20.0)

    p = sub.add_parser("fit", parents=[common], help="fit a commitment model from tracking + transactions")
    p.add_argument("--tracking", type=Path)
    p.add_argument("--transactions", type=Path)
    p.add_argument("--samples", type=Path, help="pre-built x,y,v,t,c sample CSV (skips ingest)")
    p.add_argument("--bandwidth-rule", choices=("scott", "manual"), default="scott")
    p.add_argument("--bandwidths", help="manual bandwidths hx,hy,hv,ht")
    p.add_argument("--smooth-window", type=int, default=1, help="odd moving-average window for kinematics")
    p.add_argument("--displacement-horizon", type=_positive(float), default=None,
                   help="also fit the displacement baseline at this horizon (s)")

    p = sub.add_parser("grid", parents=[common], help="influence/dominance grids for a snapshot")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--slice", action="append", default=[], metavar="V,T",
                   help="also write the (x, y) commitment slice at speed V and time-to-point T")
    p.add_argument("--slice-extent", type=_positive(float), default=30.0, help="half-width of slice window (m)")
    p.add_argument("--slice-resolution", type=_positive(float), default=1.0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("passes", parents=[common], help="pass features, correlations, smoothed maps")
    p.add_argument("--tracking", type=Path, required=True)
    p.add_argument("--transactions", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--equity", type=Path, help="equity surface JSON (default: synthetic placeholder)")
    p.add_argument("--away-team", action="append", default=[], metavar="TEAM",
                   help="team attacking -x (repeatable); others attack +x")
    p.add_argument("--smooth-radius", type=_positive(float), default=passing.SMOOTH_RADIUS)
    p.add_argument("--smooth-window", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("cluster", parents=[common], help="GMM clustering of pass features with an elbow curve")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--k", type=int, default=None, help="components (default: elbow pick)")
    p.add_argument("--k-range", default="1-6", metavar="LO-HI")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--feature-set", default=",".join(FEATURES))
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from None
    return out


def _require(path: Path | None, flag: str) -> Path:
    if path is None:
        raise CliError(f"{flag} is required")
    if not path.is_file():
        raise CliError(f"no such file: {path}")
    return path


def cmd_synth(args) -> int:
    if args.n_contests < 1:
        raise UsageError("--n-contests must be at least 1")
    cfg = synth.SynthConfig(seed=args.seed, n_contests=args.n_contests, n_marks=args.n_marks,
                            players_per_team=args.players_per_team, pitch=Pitch.parse(args.pitch),
                            kick_speed=args.kick_speed, noise=args.noise)
    res = synth.generate(cfg)
    out = _outdir(args)
    ingest.write_tracking(res.tracking, out / "tracking.csv")
    ingest.write_transactions(res.events, out / "transactions.csv")
    synth.write_truth_csv(res.truth, out / "ground_truth.csv")
    committed = sum(r.committed for r in res.truth)
    print(f"tracking rows: {len(res.tracking)}")
    print(f"transactions: {len(res.events)}")
    print(f"contests: {cfg.n_contests}  marks: {cfg.marks}")
    print(f"ground-truth rows: {len(res.truth)}  committed: {committed}  redraws: {res.retries}")
    return 0


def _load_events(tracking_path: Path, transactions_path: Path):
    tracking = ingest.load_tracking(tracking_path)
    events = ingest.align_transactions(ingest.load_transactions(transactions_path))
    return tracking, events


def cmd_fit(args) -> int:
    out = _outdir(args)
    if args.samples is not None:
        samples = ingest.read_samples_csv(_require(args.samples, "--samples"))
    else:
        tracking, events = _load_events(_require(args.tracking, "--tracking"),
                                        _require(args.transactions, "--transactions"))
        contests = ingest.extract_contests(events, tracking)
        stats = Counter()
        samples = ingest.build_commitment_samples(contests, tracking, smooth_window=args.smooth_window, stats=stats)
        ingest.write_samples_csv(samples, out / "samples.csv")
        print(f"contests: {len(contests)}")
    manual = None
    if args.bandwidth_rule == "manual":
        if not args.bandwidths:
            raise CliError("--bandwidth-rule manual needs --bandwidths")
        manual = [float(v) for v in args.bandwidths.split(",")]
    try:
        model = kde.fit_commitment_model(samples, args.bandwidth_rule, manual, args.bandwidth_scale)
    except kde.KdeError as exc:
        raise CliError(str(exc)) from None
    model.save(out / "model.json")
    n1, n0 = model.f1.sample_count, model.f0.sample_count
    summary = {"c1": n1, "c0": n0, "total": n1 + n0, "w": model.w,
               "bandwidths_c1": model.f1.bandwidths.tolist(), "bandwidths_c0": model.f0.bandwidths.tolist()}
    if args.displacement_horizon is not None and args.samples is None:
        disp = ingest.build_displacement_samples(tracking, args.displacement_horizon, args.smooth_window)
        if len(disp) >= 2:
            dm = kde.fit_displacement_model(disp, bandwidth_scale=args.bandwidth_scale)
            Path(out / "displacement_model.json").write_text(json.dumps(
                {"dim": dm.dim, "bandwidths": dm.bandwidths.tolist(), "samples": dm.samples.tolist(),
                 "horizon": args.displacement_horizon}))
            summary["displacement_samples"] = dm.sample_count
    (out / "fit_summary.json").write_text(json.dumps(summary, indent=1))
    print(f"samples: {n1 + n0}  c=1: {n1}  c=0: {n0}  w = {model.w:.4f} ({model.w:.2f})")
    return 0


def _parse_slice(text: str) -> tuple[float, float]:
    try:
        v, t = (float(x) for x in text.split(","))
    except ValueError:
        raise CliError(f"--slice expects V,T, got {text!r}") from None
    if v < 0 or t <= 0:
        raise CliError("--slice needs V >= 0 and T > 0")
    return v, t


def _write_grid(grid, base: Path, vmax: float = 1.0) -> None:
    grid.to_csv(base.with_suffix(".csv"))
    grid.to_ppm(base.with_suffix(".ppm"), 0.0, vmax)


def cmd_grid(args) -> int:
    model = kde.CommitmentModel.load(_require(args.model, "--model"))
    out = _outdir(args)
    slices = [_parse_slice(s) for s in args.slice]
    if args.snapshot is None and not slices:
        raise CliError("nothing to do: give --snapshot and/or --slice")
    if args.snapshot is not None:
        try:
            snap = spatial.Snapshot.load(_require(args.snapshot, "--snapshot"))
        except (KeyError, spatial.SnapshotError) as exc:
            raise CliError(f"bad snapshot: {exc}") from None
        pitch = Pitch.parse(args.pitch)
        spec = GridSpec.for_pitch(pitch, args.cell_size)
        team_a = snap.possession_team
        inf_a = spatial.team_influence(snap, team_a, model, spec, pitch, args.ball_speed, args.workers)
        try:
            team_o = snap.opponent_of(team_a)
            inf_o = spatial.team_influence(snap, team_o, model, spec, pitch, args.ball_speed, args.workers)
        except spatial.SnapshotError:
            inf_o = spatial.FieldGrid(spec, np.zeros((spec.nx, spec.ny)), inf_a.mask)
        dom = spatial.dominance(inf_a, inf_o)
        _write_grid(inf_a, out / "influence_a")
        _write_grid(inf_o, out / "influence_o")
        _write_grid(dom, out / "dominance")
        print(f"influence/dominance grids: {spec.nx}x{spec.ny} cells, {int(dom.mask.sum())} in bounds")
    for v, t in slices:
        e = args.slice_extent
        window = GridSpec.from_window(-e, e, -e, e, args.slice_resolution)
        g = kde.slice_grid(model, v, t, window, args.workers)
        _write_grid(g, out / f"slice_v{v:g}_t{t:g}")
        i, j = np.unravel_index(int(np.argmax(g.values)), g.values.shape)
        xs, ys = window.centers()
        print(f"slice v={v:g} t={t:g}: max p = {g.values.max():.4f} at ({xs[i]:.1f}, {ys[j]:.1f})")
    return 0


def correlation_report(features) -> dict:
    d2g = [f.dist_to_goal for f in features]
    report = {"n": len(features), "against": "dist_to_goal", "features": {}}
    for name in FEATURES:
        vals = [getattr(f, name) for f in features]
        entry = {"rho": None, "p": None}
        try:
            rho = passing.spearman(vals, d2g)
            entry["rho"] = rho
            entry["p"] = passing.spearman_significance(rho, len(vals))
        except passing.PassingError as exc:
            entry["note"] = str(exc)
        report["features"][name] = entry
    return report


def cmd_passes(args) -> int:
    tracking, events = _load_events(_require(args.tracking, "--tracking"),
                                    _require(args.transactions, "--transactions"))
    model = kde.CommitmentModel.load(_require(args.model, "--model"))
    pitch = Pitch.parse(args.pitch)
    if args.equity is not None:
        equity = passing.EquitySurface.load(_require(args.equity, "--equity"))
    else:
        log.warning("no --equity given; using the SYNTHETIC placeholder surface")
        equity = passing.EquitySurface.placeholder(pitch, args.cell_size)
    out = _outdir(args)
    passes = ingest.extract_passes(events, tracking)
    feats = []
    skipped = 0
    for ps in passes:
        states = tracking.snapshot_states(ps.match_id, ps.t_p, args.smooth_window)
        snap = spatial.Snapshot(ps.t_p, ps.origin_pos, tuple(states), ps.team_id)
        direction = -1 if ps.team_id in args.away_team else 1
        try:
            feats.append(passing.compute_pass_features(ps, snap, model, equity, pitch, args.ball_speed, direction))
        except passing.PassingError as exc:
            skipped += 1
            log.warning("pass %d skipped: %s", ps.pass_id, exc)
    passing.write_features_csv(feats, out / "pass_features.csv")
    report = correlation_report(feats)
    report["skipped"] = skipped
    if not feats:
        log.warning("no qualifying passes")
    else:
        spec = GridSpec.for_pitch(pitch, args.cell_size)
        for name in ("dominance", "influence"):
            g = passing.smooth_by_location(feats, name, spec, args.smooth_radius, pitch, args.workers)
            _write_grid(g, out / f"smoothed_{name}")
    (out / "correlation_report.json").write_text(json.dumps(report, indent=1))
    print(f"passes: {len(feats)} (skipped {skipped})")
    for name, e in report["features"].items():
        if e["rho"] is not None:
            print(f"  {name:>10} vs dist_to_goal: rho = {e['rho']:+.4f}  p = {e['p']:.4g}")
    return 0


def _k_range(text: str) -> list[int]:
    try:
        lo, hi = (int(x) for x in text.split("-"))
    except ValueError:
        raise CliError(f"--k-range expects LO-HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise CliError("--k-range must satisfy 1 <= LO <= HI")
    return list(range(lo, hi + 1))


def cmd_cluster(args) -> int:
    _, data = passing.read_features_csv(_require(args.features, "--features"))
    names = [n.strip() for n in args.feature_set.split(",") if n.strip()]
    bad = [n for n in names if n not in FEATURES]
    if bad or not names:
        raise CliError(f"unknown features {bad}; choose from {','.join(FEATURES)}")
    cols = [passing.FEATURE_HEADER.index(n) - 1 for n in names]
    x = data[:, cols]
    out = _outdir(args)
    standardize = not args.no_standardize
    try:
        curve = gmm.elbow_curve(x, _k_range(args.k_range), seed=args.seed, restarts=args.restarts,
                                workers=args.workers, standardize=standardize)
    except gmm.GmmError as exc:
        raise CliError(str(exc)) from None
    pick = gmm.pick_elbow(curve)
    k = args.k if args.k is not None else pick
    chosen = next((p.model for p in curve if p.k == k), None)
    if chosen is None:
        try:
            chosen = max((gmm.fit_em(x, k, seed=gmm.restart_seed(args.seed, k, r), standardize=standardize)
                          for r in range(args.restarts)), key=lambda m: m.log_likelihood)
        except gmm.GmmError as exc:
            raise CliError(str(exc)) from None
    doc = chosen.to_dict()
    doc["features"] = names
    (out / "gmm.json").write_text(json.dumps(doc, indent=1))
    with open(out / "elbow.csv", "w") as fh:
        fh.write("k,mean_nll,n_params,seed\n")
        for p in curve:
            fh.write(f"{p.k},{p.mean_nll:.17g},{p.n_params},{p.seed}\n")
    table = component_table(chosen, names)
    (out / "components.csv").write_text(table)
    print(f"elbow pick: k = {pick}; fitted k = {k}")
    print(table, end="")
    return 0


def component_table(model: gmm.GmmModel, names) -> str:
    """Weights and original-unit means, one column per component, ordered by weight."""
    order = np.argsort(-model.weights, kind="stable")
    means = model.original_means()
    head = ["variable"] + [f"component_{i + 1}" for i in range(model.k)]
    rows = [",".join(head), ",".join(["weight"] + [f"{model.weights[j]:.4f}" for j in order])]
    for c, name in enumerate(names):
        rows.append(",".join([name] + [f"{means[j, c]:.4f}" for j in order]))
    return "\n".join(rows) + "\n"


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "grid": cmd_grid, "passes": cmd_passes, "cluster": cmd_cluster}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, val in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, val)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        Pitch.parse(args.pitch)
        return COMMANDS[args.command](args)
    except (CliError, ValueError, OSError) as exc:
        print(f"commitmotion {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1


if __name__ == "__main__":
    sys.exit(main())
