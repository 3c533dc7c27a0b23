"""Command line: ``puzzlelab {scramble,solve,eval,bench}``.

Exit status is 0 on success, 1 when the pipeline rejects its input and 2 on
usage errors. ``PUZZLELAB_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .congraph import build_type2_graph, build_type3_graph
from .core import GridSpec, PuzzleError, assemble, scramble, slice_image, tile
from .evaluation import aggregate, evaluate, write_csv
from .io import IoError, read_image, read_sidecar, write_image, write_sidecar
from .metrics import PairwiseTable, build_pairwise_table
from .placement import solve_type1 as place_type1
from .solver import solve_type1, solve_type2, solve_type3
from .spectral import assemble_gcl, recover_orientations, top_eigenvectors
from .synthetic import smooth_image

log = logging.getLogger("puzzlelab")

IMAGE_SUFFIXES = (".png", ".ppm")


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".scrambled.png", ".scrambled.ppm", ".png", ".ppm"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _table(patches: np.ndarray, args) -> PairwiseTable:
    if args.cache and Path(args.cache).exists():
        table = PairwiseTable.load(args.cache)
        if table.n == len(patches) and table.s == patches.shape[1]:
            log.info("loaded MGC table from %s", args.cache)
            return table
        log.warning("cache %s does not match this puzzle, rebuilding", args.cache)
    table = build_pairwise_table(patches, threads=args.threads)
    if args.cache:
        table.dump(args.cache)
    return table


def run_pipeline(patches, grid: GridSpec, puzzle_type: int, args, stem: str | None = None, out: Path | None = None):
    """Solve one scrambled puzzle; optional debug dumps go to ``out``."""
    table = _table(patches, args)
    trace = [] if getattr(args, "trace", False) else None
    if puzzle_type == 1:
        sol = solve_type1(patches, grid, table, seed=args.seed)
    elif puzzle_type == 3:
        sol = solve_type3(patches, grid, table, seed=args.seed)
    else:
        variant = "top34_init" if args.top34 else "standard"
        sol = solve_type2(patches, grid, table, iterations=args.iterations, variant=variant,
                          seed=args.seed, vdd=args.vdd, trace=trace)
    if out is not None and stem is not None and puzzle_type in (2, 3) and grid.n > 1:
        if getattr(args, "dump_graph", False) or getattr(args, "dump_spectrum", False):
            g = (build_type3_graph(patches, grid, table) if puzzle_type == 3
                 else build_type2_graph(patches, table, args.seed))
            if args.dump_graph:
                (out / f"{stem}.graph.json").write_text(g.to_json() + "\n", encoding="utf-8")
            if args.dump_spectrum:
                gcl = assemble_gcl(g)
                res = top_eigenvectors(gcl.C_sym, min(6, 2 * grid.n), seed=args.seed)
                _dump(out / f"{stem}.spectrum.json",
                      {"eigenvalues": res.eigenvalues.tolist(), "iterations": res.iterations,
                       "residual": res.residual})
    return sol, trace


def cmd_scramble(args) -> int:
    src = Path(args.image)
    image = read_image(src)
    patches, grid, truth = slice_image(image, args.size)
    mixed, new_truth = scramble(patches, truth, args.type, args.seed)
    out = _out_dir(args)
    stem = _stem(src)
    write_image(out / f"{stem}.scrambled.png", tile(mixed, grid))
    write_sidecar(out / f"{stem}.truth.json", new_truth, args.size, args.type, args.seed)
    print(out / f"{stem}.scrambled.png")
    return 0


def _puzzle_meta(src: Path, args) -> dict:
    meta = {}
    sidecar = Path(args.sidecar) if args.sidecar else src.with_name(f"{_stem(src)}.truth.json")
    if sidecar.exists():
        _, meta = read_sidecar(sidecar)
    size = args.size or meta.get("s")
    ptype = args.type or meta.get("type")
    if not size or not ptype:
        raise PuzzleError("patch size and puzzle type must come from --size/--type or a sidecar")
    return {"s": int(size), "type": int(ptype)}


def cmd_solve(args) -> int:
    src = Path(args.image)
    meta = _puzzle_meta(src, args)
    image = read_image(src)
    patches, grid, _ = slice_image(image, meta["s"])
    out = _out_dir(args)
    stem = _stem(src)
    sol, trace = run_pipeline(patches, grid, meta["type"], args, stem, out)
    extra = {"degenerate": list(sol.degenerate)}
    write_sidecar(out / f"{stem}.solution.json", sol, meta["s"], meta["type"], args.seed, extra)
    write_image(out / f"{stem}.reconstructed.png", assemble(patches, sol))
    if trace is not None:
        _dump(out / f"{stem}.trace.json", [rec.summary() for rec in trace])
    print(out / f"{stem}.solution.json")
    return 0


def _eval_pair(sol_path: Path, truth_path: Path) -> dict:
    sol, _ = read_sidecar(sol_path)
    truth, _ = read_sidecar(truth_path)
    return evaluate(sol, truth).to_dict()


def _dataset_images(root: Path) -> list[Path]:
    return sorted(
        p for p in root.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES and ".scrambled." not in p.name and ".reconstructed." not in p.name
    )


def cmd_eval(args) -> int:
    out = _out_dir(args)
    if args.dataset:
        return _eval_dataset(Path(args.dataset), args, out)
    if not args.solution or not args.truth:
        raise PuzzleError("eval needs SOLUTION and TRUTH sidecars, or --dataset DIR")
    report = _eval_pair(Path(args.solution), Path(args.truth))
    name = Path(args.solution).name
    stem = name[: -len(".solution.json")] if name.endswith(".solution.json") else Path(name).stem
    _dump(out / f"{stem}.eval.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def _eval_dataset(root: Path, args, out: Path) -> int:
    """Scramble, solve and score every image ``--repeats`` times (seeds ``seed .. seed+R-1``)."""
    if not root.is_dir():
        raise IoError(f"{root}: not a directory")
    pairs = sorted(root.glob("*.solution.json"))
    rows, all_reports = [], []
    if pairs:
        for sol_path in pairs:
            name = sol_path.name[: -len(".solution.json")]
            report = evaluate(read_sidecar(sol_path)[0], read_sidecar(root / f"{name}.truth.json")[0])
            rows.append((name, aggregate([report])))
            all_reports.append(report)
    else:
        if not args.size or not args.type:
            raise PuzzleError("dataset mode needs --size and --type")
        for path in _dataset_images(root):
            patches, grid, truth = slice_image(read_image(path), args.size)
            reports = []
            for r in range(args.repeats):
                seed = args.seed + r
                mixed, new_truth = scramble(patches, truth, args.type, seed)
                run_args = argparse.Namespace(**{**vars(args), "seed": seed, "cache": None})
                sol, _ = run_pipeline(mixed, grid, args.type, run_args)
                reports.append(evaluate(sol, new_truth))
            agg = aggregate(reports)
            rows.append((path.stem, agg))
            all_reports.extend(reports)
            log.info("%s: direct %.1f neighbor %.1f", path.stem, agg["direct_mean"], agg["neighbor_mean"])
    if not rows:
        raise IoError(f"{root}: no images or solution sidecars found")
    # dataset summary: statistics of the per-image means, perfect counted over every run
    per_image = {key: np.array([agg[f"{key}_mean"] for _, agg in rows])
                 for key in ("direct", "neighbor", "largest_component")}
    summary = {"count": len(rows), "perfect": int(sum(r.perfect for r in all_reports))}
    for key, vals in per_image.items():
        summary[f"{key}_mean"] = float(vals.mean())
        summary[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    write_csv(out / "eval.csv", rows, summary)
    _dump(out / "eval_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _bench_once(patches, grid, threads: int, seed: int) -> dict:
    times = {}
    t0 = time.perf_counter()
    table = build_pairwise_table(patches, threads=threads)
    times["table"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    g = build_type2_graph(patches, table, seed)
    times["graph"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    rec = recover_orientations(g, "top12", seed=seed)
    times["spectral"] = time.perf_counter() - t2
    t3 = time.perf_counter()
    place_type1(grid, table, rec.orientation, seed=seed, allow_transpose=True)
    times["placement"] = time.perf_counter() - t3
    times["total"] = time.perf_counter() - t0
    times["table_fraction"] = times["table"] / times["total"]
    return times


def cmd_bench(args) -> int:
    s = args.size or 28
    if args.image:
        image = read_image(args.image)
    else:
        rows, cols = args.rows, args.cols
        image = smooth_image(rows * s, cols * s, seed=args.seed)
    patches, grid, truth = slice_image(image, s)
    mixed, _ = scramble(patches, truth, 2, args.seed)
    report = {"n": grid.n, "s": s, "threads": args.threads}
    report["stages"] = _bench_once(mixed, grid, args.threads, args.seed)
    report["table_dominant"] = report["stages"]["table_fraction"] > 0.5
    if args.threads > 1:
        t0 = time.perf_counter()
        build_pairwise_table(mixed, threads=1)
        single = time.perf_counter() - t0
        report["table_single_thread"] = single
        report["thread_speedup"] = single / report["stages"]["table"]
    if args.scaling:
        scale = {}
        for frac in (4, 2, 1):
            sub = mixed[: grid.n // frac]
            t0 = time.perf_counter()
            build_pairwise_table(sub, threads=args.threads)
            scale[str(len(sub))] = time.perf_counter() - t0
        report["table_scaling"] = scale
    out = _out_dir(args)
    _dump(out / "bench.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puzzlelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_type: bool = False):
        p.add_argument("--size", "-s", type=int, help="patch side in pixels")
        p.add_argument("--type", type=int, choices=(1, 2, 3), required=need_type, help="puzzle type")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", help="output directory (default: current directory)")

    def solving(p):
        p.add_argument("--iterations", type=int, default=5)
        p.add_argument("--vdd", action="store_true", help="penalize far pairs by diffusion distance")
        p.add_argument("--top34", action="store_true", help="also try the third/fourth eigenvectors first")
        p.add_argument("--trace", action="store_true", help="write per-iteration Err records")
        p.add_argument("--cache", help="MGC table cache file")
        p.add_argument("--dump-graph", action="store_true")
        p.add_argument("--dump-spectrum", action="store_true")

    p = sub.add_parser("scramble", help="cut an image into patches and shuffle/rotate them")
    p.add_argument("image")
    common(p, need_type=True)
    p.set_defaults(func=cmd_scramble)

    p = sub.add_parser("solve", help="reassemble a scrambled image")
    p.add_argument("image")
    p.add_argument("--sidecar", help="truth sidecar with rows/cols/s/type (default: <name>.truth.json)")
    common(p)
    solving(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="score a solution, or run the dataset harness")
    p.add_argument("solution", nargs="?")
    p.add_argument("truth", nargs="?")
    p.add_argument("--dataset", help="directory of images (harness) or of solution/truth sidecars")
    p.add_argument("--repeats", type=int, default=1)
    common(p)
    solving(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the pipeline stages")
    p.add_argument("image", nargs="?")
    p.add_argument("--rows", type=int, default=18)
    p.add_argument("--cols", type=int, default=24)
    p.add_argument("--scaling", action="store_true", help="also time the table at n/4, n/2 and n")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("PUZZLELAB_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    if getattr(args, "size", None) is not None and args.size < 2:
        print("puzzlelab: --size must be at least 2", file=sys.stderr)
        return 2
    if getattr(args, "iterations", 0) < 0 or getattr(args, "repeats", 1) < 1 or args.threads < 1:
        print("puzzlelab: --iterations >= 0, --repeats >= 1 and --threads >= 1 are required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except PuzzleError as exc:
        print(f"puzzlelab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
