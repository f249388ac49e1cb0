"""Command-line pipeline: simulate, train, build-map, evaluate, recognize, localize.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ManifestRow, load_config, manifest_text, read_manifest
from .errors import ConfigError, DataError, DivergenceError, NoOverlapError, RinglocError
from .icp_refine import icp, pose2_to_transform, transform_to_pose2
from .mcl import run_global_localization
from .place_recognition import (localization_probability_curve, nearest_neighbor_matches,
                                precision_recall, recognize, similarity_matrix,
                                trajectory_positions, ground_truth_matrix)
from .prior_map import build_map, fingerprint_scans, load_map, save_map, voxel_downsample
from .representation import build_representation, fast_histogram_baseline
from .scan_model import (SyntheticWorld, load_scan_file, simulate_trajectory, wrap_angle,
                         write_scan_kitti)
from .siamese_net import (NetworkParams, load_checkpoint, mine_pairs, save_checkpoint, train,
                          training_log_csv)

log = logging.getLogger("ringloc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(r[h] if isinstance(r, dict) else v)
                       for h, v in zip(header, r if not isinstance(r, dict) else header))
              for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_waypoints(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"waypoint file not found: {p}")
    pts = []
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            raise ConfigError(f"{p}:{lineno}: expected 'x y'") from None
    if len(pts) < 2:
        raise ConfigError(f"{p}: need at least two waypoints, found {len(pts)}")
    return pts


def read_world(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"world file not found: {p}")
    return SyntheticWorld.from_text(p.read_text())


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scans(rows, sensor):
    return [load_scan_file(r.scan_path, sensor) for r in rows]


def _load_params(path, cfg):
    params = load_checkpoint(path)
    want = (cfg.sensor.rings, cfg.histogram.bucket_count)
    if params.config.input_shape != want:
        raise ConfigError(f"checkpoint expects input {params.config.input_shape}, "
                          f"config gives {want}")
    return params


def _plots(args):
    if args.no_plots:
        return None
    from . import plotting
    return plotting


def cmd_simulate(args, cfg):
    world = read_world(args.world)
    waypoints = read_waypoints(args.waypoints)
    out = _outdir(args)
    scan_dir = out / "scans"
    scan_dir.mkdir(exist_ok=True)
    sim = cfg.simulate
    frames = simulate_trajectory(world, waypoints, sim.step,
                                 (sim.odom_sigma_trans, sim.odom_sigma_rot), cfg.seed,
                                 cfg.sensor.model())
    rows = []
    for k, (scan, pose, delta) in enumerate(frames):
        path = scan_dir / f"{args.prefix}{k:06d}.bin"
        write_scan_kitti(scan, path)
        rows.append(ManifestRow(path, pose, delta))
    (out / "manifest.txt").write_text(manifest_text(rows, out))
    plotting = _plots(args)
    if plotting:
        plotting.plot_trajectory(world, [r.pose for r in rows], out / "trajectory.png")
    log.info("wrote %d scans to %s", len(rows), scan_dir)
    return EXIT_OK


def _manifest_rows(paths):
    rows = []
    for m in paths:
        rows += read_manifest(m)
    return rows


def cmd_train(args, cfg):
    rows = _manifest_rows(args.manifest)
    scans = _load_scans(rows, cfg.sensor.model())
    reps = [build_representation(s, cfg.histogram) for s in scans]
    t = cfg.training
    pairs = mine_pairs([r.pose for r in rows], reps, t.p_pos, t.p_neg, t.negative_ratio, cfg.seed)
    log.info("training on %d pairs (%d positive)", len(pairs), sum(p.label for p in pairs))
    params, history = train(pairs, cfg.network, cfg.sgd())
    out = _outdir(args)
    save_checkpoint(params, out / "checkpoint.llnet")
    (out / "training_log.csv").write_text(training_log_csv(history))
    plotting = _plots(args)
    if plotting and history:
        plotting.plot_training(history, out / "training_loss.png")
    return EXIT_OK


def cmd_build_map(args, cfg):
    rows = _manifest_rows(args.manifest)
    scans = _load_scans(rows, cfg.sensor.model())
    params = _load_params(args.checkpoint, cfg)
    prior = build_map(scans, [r.pose for r in rows], params, cfg.histogram,
                      sources=[r.scan_path.name for r in rows], voxel=cfg.map.voxel)
    out = _outdir(args)
    save_map(prior, out / "map.llmap")
    write_csv(out / "map_frames.csv", ["index", "x", "y", "yaw", "source"],
              [(f.index, f.pose.x, f.pose.y, f.pose.yaw, f.source) for f in prior.frames])
    plotting = _plots(args)
    if plotting:
        plotting.plot_trajectory(SyntheticWorld((), True), prior.poses(), out / "map.png",
                                 title=f"map: {len(prior)} keyframes")
    return EXIT_OK


def _loc_records(fps, poses, p, tau, exclusion, prior=None):
    """(path position, success) per frame against a map, or against earlier frames."""
    positions = trajectory_positions(poses)
    records = []
    if prior is not None:
        for f, pose, s in zip(fps, poses, positions):
            idx, dist = prior.tree.query(np.asarray(f, dtype=float))
            ok = dist <= tau and prior.frames[idx].pose.distance_to(pose) < p
            records.append((float(s), bool(ok)))
        return records
    nn, dist = nearest_neighbor_matches(fps, exclusion, past_only=True)
    for k, s in enumerate(positions):
        ok = nn[k] >= 0 and dist[k] <= tau and poses[nn[k]].distance_to(poses[k]) < p
        records.append((float(s), bool(ok)))
    return records


def cmd_evaluate(args, cfg):
    rows = _manifest_rows(args.manifest)
    scans = _load_scans(rows, cfg.sensor.model())
    params = _load_params(args.checkpoint, cfg)
    poses = [r.pose for r in rows]
    e = cfg.evaluate
    descriptors = {
        "learned": fingerprint_scans(scans, params, cfg.histogram),
        "fast_histogram": np.stack([fast_histogram_baseline(s, cfg.histogram) for s in scans]),
        "raw_histogram": np.stack([build_representation(s, cfg.histogram).values.ravel()
                                   for s in scans]),
    }
    gt = ground_truth_matrix(poses, e.p, e.exclusion)
    out = _outdir(args)
    plotting = _plots(args)
    curves, pr_rows, summary = {}, [], []
    for name, desc in descriptors.items():
        sim = similarity_matrix(desc, name)
        curve = precision_recall(sim, gt, e.exclusion)
        curves[name] = curve
        (out / f"similarity_{name}.csv").write_text(sim.to_csv())
        pr_rows += [(name, t, p, r, f) for t, p, r, f in
                    zip(curve.thresholds, curve.precision, curve.recall, curve.f1)]
        for p in sorted(set(e.p_values) | {e.p}):
            try:
                c = curve if p == e.p else precision_recall(
                    sim, ground_truth_matrix(poses, p, e.exclusion), e.exclusion)
            except DataError:
                log.warning("%s: no true matches within p = %g m, skipped", name, p)
                continue
            summary.append((name, p, c.f1_max, c.best_threshold, len(c.thresholds)))
        if plotting:
            plotting.plot_similarity(sim.values, out / f"similarity_{name}.png", name)
    write_csv(out / "pr.csv", ["descriptor", "tau", "precision", "recall", "f1"], pr_rows)
    write_csv(out / "summary.csv", ["descriptor", "p", "f1_max", "tau_star", "thresholds"],
              summary)
    prior = load_map(args.map) if args.map else None
    if prior is not None and prior.dim != descriptors["learned"].shape[1]:
        raise DataError(f"map dimension {prior.dim} does not match the checkpoint output")
    records = _loc_records(descriptors["learned"], poses, e.p, cfg.tau, e.exclusion, prior)
    try:
        gaps_curve = localization_probability_curve(records, [0.0])
    except DataError:
        gaps_curve = None
    if gaps_curve is not None:
        travelled = trajectory_positions(poses)[-1] if len(poses) else 0.0
        grid = np.arange(0.0, travelled + e.loc_step, e.loc_step)
        curve = localization_probability_curve(records, grid)
    else:
        curve = []
    write_csv(out / "loc_probability.csv", ["distance", "probability"], curve)
    write_csv(out / "loc_records.csv", ["position", "success"], records)
    if plotting:
        plotting.plot_pr(curves, out / "pr.png")
        if curve:
            plotting.plot_loc_probability(curve, out / "loc_probability.png")
    for name, curve in curves.items():
        print(f"{name}: f1_max={curve.f1_max:.4f} tau*={curve.best_threshold:.6g} at p={e.p:g} m")
    return EXIT_OK


def cmd_recognize(args, cfg):
    prior = load_map(args.map)
    params = _load_params(args.checkpoint, cfg)
    sensor = cfg.sensor.model()
    rows = []
    for path in args.scan:
        m = recognize(prior, load_scan_file(path, sensor), params, prior.hist_config(), cfg.tau)
        rows.append((path, m.frame, m.distance, m.observation.x, m.observation.y,
                     m.observation.yaw, m.accepted))
    header = ["scan", "frame", "distance", "x", "y", "yaw", "accepted"]
    if args.out:
        write_csv(_outdir(args) / "matches.csv", header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(_fmt(v) for v in r))
    return EXIT_OK


def _histogram(values, width):
    values = np.asarray(values, dtype=float)
    top = max(width, math.ceil(values.max() / width) * width) if len(values) else width
    edges = np.arange(0.0, top + width / 2, width)
    if len(edges) < 2:
        edges = np.array([0.0, width])
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


def cmd_localize(args, cfg):
    prior = load_map(args.map)
    params = _load_params(args.checkpoint, cfg)
    rows = _manifest_rows(args.manifest)
    scans = _load_scans(rows, cfg.sensor.model())
    stream = []
    for k, (r, s) in enumerate(zip(rows, scans)):
        if r.odom is not None:
            delta = r.odom
        else:
            delta = rows[k - 1].pose.between(r.pose) if k else r.pose.between(r.pose)
        stream.append((s, delta))
    hist = prior.hist_config()
    run = run_global_localization(prior, stream, params, hist, cfg.mcl, cfg.tau)
    use_icp = cfg.icp_stage.enabled and len(prior.cloud) > 0
    tree = None
    if use_icp:
        from scipy.spatial import cKDTree
        tree = cKDTree(prior.cloud)
    out_rows = []
    for step, scan, r in zip(run.steps, scans, rows):
        est = step.estimate
        obs = prior.frames[step.frame].pose
        row = {"step": step.step, "est_x": est.pose.x, "est_y": est.pose.y,
               "est_yaw": est.pose.yaw, "spread": est.spread, "converged": est.converged,
               "obs_accepted": step.accepted, "obs_frame": step.frame,
               "obs_distance": step.distance,
               "obs_x": obs.x if step.accepted else None,
               "obs_y": obs.y if step.accepted else None,
               "true_x": r.pose.x, "true_y": r.pose.y, "true_yaw": r.pose.yaw,
               "loc_error": est.pose.distance_to(r.pose),
               "heading_error_deg": abs(math.degrees(wrap_angle(est.pose.yaw - r.pose.yaw))),
               "icp_x": None, "icp_y": None, "icp_yaw": None, "icp_rmse": None,
               "icp_error": None}
        if use_icp and est.converged:
            src = voxel_downsample(scan.points(), cfg.icp_stage.source_voxel)
            try:
                res = icp(src, tree, pose2_to_transform(est.pose), cfg.icp)
                refined = transform_to_pose2(res.transform)
                row.update(icp_x=refined.x, icp_y=refined.y, icp_yaw=refined.yaw,
                           icp_rmse=res.rmse, icp_error=refined.distance_to(r.pose))
            except NoOverlapError as exc:
                log.info("step %d: ICP skipped (%s)", step.step, exc)
        out_rows.append(row)
    out = _outdir(args)
    header = ["step", "est_x", "est_y", "est_yaw", "spread", "converged", "obs_accepted",
              "obs_frame", "obs_distance", "obs_x", "obs_y", "true_x", "true_y", "true_yaw",
              "loc_error", "heading_error_deg", "icp_x", "icp_y", "icp_yaw", "icp_rmse",
              "icp_error"]
    write_csv(out / "localization.csv", header, out_rows)
    start = run.first_converged()
    tracked = out_rows[start:] if start is not None else []
    hist_rows = []
    plotting = _plots(args)
    for metric, width, label in (("loc_error", 0.1, "location error [m]"),
                                 ("heading_error_deg", 0.5, "heading error [deg]"),
                                 ("icp_error", 0.05, "ICP location error [m]")):
        vals = [r[metric] for r in tracked if r[metric] is not None]
        if not vals:
            continue
        edges, counts = _histogram(vals, width)
        hist_rows += [(metric, lo, hi, c) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        if plotting:
            plotting.plot_histogram(edges, counts, out / f"hist_{metric}.png", label)
    write_csv(out / "error_histogram.csv", ["metric", "bin_lo", "bin_hi", "count"], hist_rows)
    if plotting:
        plotting.plot_localization(out_rows, out / "localization.png")
    last = out_rows[-1]
    print(f"converged at step {start}; final location error {last['loc_error']:.3f} m, "
          f"heading error {last['heading_error_deg']:.2f} deg")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ringloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="render a scan sequence from a world file")
    p.add_argument("--world", required=True)
    p.add_argument("--waypoints", required=True)
    p.add_argument("--prefix", default="", help="scan file name prefix")
    p.set_defaults(func=cmd_simulate, needs_out=True)

    p = sub.add_parser("train", parents=[common], help="train the embedding network")
    p.add_argument("--manifest", required=True, nargs="+")
    p.set_defaults(func=cmd_train, needs_out=True)

    p = sub.add_parser("build-map", parents=[common], help="fingerprint keyframes into a map")
    p.add_argument("--manifest", required=True, nargs="+")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_build_map, needs_out=True)

    p = sub.add_parser("evaluate", parents=[common], help="precision/recall and localization probability")
    p.add_argument("--manifest", required=True, nargs="+")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--map", help="query this map for the localization-probability curve")
    p.set_defaults(func=cmd_evaluate, needs_out=True)

    p = sub.add_parser("recognize", parents=[common], help="match scans against a map")
    p.add_argument("--map", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scan", required=True, nargs="+")
    p.set_defaults(func=cmd_recognize, needs_out=False)

    p = sub.add_parser("localize", parents=[common], help="global localization over a scan stream")
    p.add_argument("--map", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, nargs="+")
    p.set_defaults(func=cmd_localize, needs_out=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.needs_out and not args.out:
            raise ConfigError(f"{args.command} needs --out")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except RinglocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
