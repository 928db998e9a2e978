"""Command-line harness: synthetic instance generation, file IO (PGM images,
key=value configs), benchmark orchestration and spectral diagnostics."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, ippmm, metrics, precond
from .linops import BlurKernel, make_bccb_operator, make_tv_operator
from .problems import (FusedLassoLsInstance, LogisticInstance,
                       PoissonTvInstance, PortfolioInstance,
                       build_fused_lasso_ls, build_logistic_l1,
                       build_poisson_tv, build_portfolio_qp, naive_portfolio)


@dataclass
class RunConfig:
    """Resolved run description: where the instance comes from, which solver
    runs on it, and where results go."""

    subcommand: str
    seed: int = 0
    solver: str = "ippmm"
    options: dict = field(default_factory=dict)
    out_dir: str = "."


# ---------------------------------------------------------------------------
# Instance generators


def gen_portfolio(s: int, m: int, seed: int, tau1: float = 1e-2,
                  tau2: float = 1e-2) -> PortfolioInstance:
    """Synthetic multi-period market: factor-model covariances and uniform
    per-period returns; the terminal wealth target is the naive strategy's."""
    if s < 2 or m < 2:
        raise ValueError("need s >= 2 assets and m >= 2 periods")
    rng = np.random.default_rng(seed)
    covs, rets = [], []
    for _ in range(m):
        B = rng.standard_normal((s, max(1, s // 4)))
        covs.append(B @ B.T + 0.1 * np.eye(s))
        rets.append(rng.uniform(-0.05, 0.10, size=s))
    inst = PortfolioInstance(covariances=covs, returns=rets, xi_init=1.0,
                             xi_term=1.0, tau1=tau1, tau2=tau2)
    _, terminal = naive_portfolio(inst)
    inst.xi_term = terminal
    return inst


def gen_fused_lasso(s: int, grid, seed: int, tau1: float = 1e-1,
                    tau2: float = 1e-1):
    """Random-design classification over a voxel grid with a planted
    contiguous active region; returns (instance, planted weights)."""
    grid = tuple(int(g) for g in grid)
    q = int(np.prod(grid))
    rng = np.random.default_rng(seed)
    wbar = np.zeros(grid)
    # a contiguous active block covering roughly the first half of each axis
    block = tuple(slice(0, max(1, g // 2)) for g in grid)
    wbar[block] = 1.0
    wbar = wbar.ravel()
    D = rng.standard_normal((s, q))
    labels = np.sign(D @ wbar + 0.5 * rng.standard_normal(s))
    labels[labels == 0] = 1.0
    inst = FusedLassoLsInstance(data=D, labels=labels, grid=grid,
                                tau1=tau1, tau2=tau2)
    return inst, wbar


def gen_blur_instance(image: np.ndarray, kernel: BlurKernel, peak_counts: float,
                      background: float, seed: int, lam: float = 1e-2,
                      noise: bool = True):
    """Blur a ground-truth image, add a flat background and draw Poisson
    counts; returns (instance, true intensity vector)."""
    if peak_counts <= 0:
        raise ValueError("peak_counts must be positive")
    if background <= 0:
        raise ValueError("background must be positive")
    image = np.asarray(image, dtype=float)
    if image.shape != kernel.grid:
        raise ValueError("image shape does not match the kernel grid")
    wbar = (image * peak_counts).ravel()
    op = make_bccb_operator(kernel)
    mean = op.apply(wbar) + background
    if noise:
        rng = np.random.default_rng(seed)
        observed = rng.poisson(mean).astype(float)
    else:
        observed = mean
    inst = PoissonTvInstance(blur=op, observed=observed,
                             background=np.full(wbar.size, background), lam=lam)
    return inst, wbar


def gen_classification(n: int, s: int, separation: float = 1.0,
                       sparsity: float = 0.1, seed: int = 0,
                       tau: float = None, test_fraction: float = 0.0):
    """Planted sparse linear model with Gaussian design; labels carry unit
    noise so finite separation keeps the classes overlapping.

    Returns (instance, planted weights, test set or None)."""
    if n < 1 or s < 1:
        raise ValueError("need n, s >= 1")
    if not 0 < sparsity <= 1:
        raise ValueError("sparsity must be in (0, 1]")
    rng = np.random.default_rng(seed)
    k = max(1, int(round(sparsity * s)))
    wbar = np.zeros(s)
    support = rng.choice(s, size=k, replace=False)
    wbar[support] = separation * rng.choice([-1.0, 1.0], size=k) \
        * rng.uniform(0.5, 1.5, size=k)

    def draw(count):
        D = rng.standard_normal((count, s))
        g = np.sign(D @ wbar + rng.standard_normal(count))
        g[g == 0] = 1.0
        return D, g

    D, g = draw(n)
    inst = LogisticInstance(data=D, labels=g, tau=(1.0 / n if tau is None else tau))
    test = draw(int(round(test_fraction * n))) if test_fraction > 0 else None
    return inst, wbar, test


def builtin_image(name: str, size: int) -> np.ndarray:
    """Piecewise-constant test patterns in [0, 1]."""
    if size < 8:
        raise ValueError("builtin images need size >= 8")
    img = np.full((size, size), 0.05)
    if name == "squares":
        q = size // 4
        img[q:2 * q, q:3 * q] = 0.5
        img[2 * q:3 * q, 2 * q:3 * q + q // 2] = 1.0
        img[q // 2:q, size - 2 * q:size - q] = 0.75
    elif name == "disk":
        ax = np.arange(size) - (size - 1) / 2.0
        dist = np.hypot(*np.meshgrid(ax, ax, indexing="ij"))
        img[dist <= size / 4.0] = 1.0
        img[dist <= size / 8.0] = 0.5
    else:
        raise ValueError(f"unknown builtin image {name!r}")
    return img


# ---------------------------------------------------------------------------
# File formats


class ParseError(ValueError):
    """Malformed input file, with location information."""


def parse_config(path) -> dict:
    """key=value configuration with '#' comments and blank lines."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            if not key.strip():
                raise ParseError(f"{path}:{lineno}: empty key")
            out[key.strip()] = value.strip()
    return out


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM image; returns (array, maxval)."""
    data = Path(path).read_bytes()
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            if data[pos:pos + 1].isspace():
                pos += 1
            elif data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos] not in (10, 13):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: unexpected end of file at byte {start}")
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: bad magic {magic!r}, expected P2 or P5")
    try:
        width, height, maxval = (int(next_token()) for _ in range(3))
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric header near byte {pos}") from exc
    if maxval <= 0 or maxval > 65535:
        raise ParseError(f"{path}: maxval {maxval} out of range")
    count = width * height
    if magic == b"P2":
        try:
            values = [int(next_token()) for _ in range(count)]
        except ParseError:
            raise ParseError(f"{path}: expected {count} pixel values")
        img = np.array(values, dtype=float)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(np.uint8 if maxval < 256 else ">u2")
        if len(data) - pos < count * dtype.itemsize:
            raise ParseError(f"{path}: truncated pixel data at byte {pos}")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        img = raw.astype(float)
    if np.any(img > maxval):
        raise ParseError(f"{path}: pixel value exceeds maxval {maxval}")
    return img.reshape(height, width), maxval


def write_pgm(path, img: np.ndarray, maxval: int = 255, binary: bool = True):
    """Write a 2-d array of integers in [0, maxval] as PGM (P5 or P2)."""
    img = np.asarray(img)
    arr = np.clip(np.rint(img), 0, maxval).astype(np.uint16 if maxval > 255
                                                  else np.uint8)
    h, w = arr.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(arr.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            body = "\n".join(" ".join(str(v) for v in row) for row in arr)
            fh.write((body + "\n").encode("ascii"))


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(f"{v:.6g}" if isinstance(v, float) else str(v)
                       for v in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers


def _exit_code(status: str) -> int:
    return 2 if status == "numerical-failure" else 0


def _solver_options(args, **overrides) -> ippmm.SolverOptions:
    opts = ippmm.SolverOptions()
    for name in ("tol", "max_iter", "eps_drop", "xi"):
        if getattr(args, name, None) is not None:
            setattr(opts, name, getattr(args, name))
    for key, val in overrides.items():
        setattr(opts, key, val)
    return opts


def _cmd_portfolio(args) -> int:
    inst = gen_portfolio(args.s, args.m, args.seed, args.tau1, args.tau2)
    w_naive, _ = naive_portfolio(inst)
    out = Path(args.out)
    eps_drop = args.eps_drop if args.eps_drop is not None else 1e-4
    if args.solver == "ippmm":
        prog = build_portfolio_qp(inst)
        opts = _solver_options(args, linear_solver="direct-augmented",
                               dropping=True, eps_drop=eps_drop)
        (x, _, _), report = ippmm.solve(prog, opts)
        w = prog.extract(x)
        status = report.status
        _write_text(out / "report_ippmm.json", report.to_json())
    elif args.solver == "asb":
        w, report = baselines.asb_chol_solve(inst, tol=args.tol or 1e-6)
        # match the interior point run: prune entries below the drop level
        w = np.where(np.abs(w) > eps_drop, w, 0.0)
        status = report.status
        _write_text(out / "report_asb.json", report.to_json())
    else:
        print(f"unknown portfolio solver {args.solver!r}", file=sys.stderr)
        return 1
    try:
        ratio, ratio_h, ratio_t = metrics.portfolio_ratios(
            w, w_naive, inst.block_covariance(), inst.num_periods,
            eps=args.trans_eps)
        _write_csv(out / "scores.csv", ["ratio", "ratio_h", "ratio_t"],
                   [[float(ratio), float(ratio_h), float(ratio_t)]])
    except metrics.UndefinedMetricError as exc:
        print(f"scores unavailable: {exc}", file=sys.stderr)
    return _exit_code(status)


def _cmd_fmri(args) -> int:
    grid = _parse_grid(args.grid)
    inst, _ = gen_fused_lasso(args.s, grid, args.seed, args.tau1, args.tau2)
    out = Path(args.out)
    if args.solver == "ippmm":
        prog = build_fused_lasso_ls(inst)
        opts = _solver_options(args, linear_solver="pcg-normal",
                               precond="fmri-block", dropping=True,
                               eps_drop=args.eps_drop if args.eps_drop is not None else 1e-6)
        (x, _, _), report = ippmm.solve(prog, opts)
        w = prog.extract(x)
        status = report.status
    elif args.solver == "fista":
        w, report = baselines.fista_solve(inst, time_budget=args.budget_seconds)
        status = report.status
    elif args.solver == "admm":
        w, report = baselines.admm_solve(inst, time_budget=args.budget_seconds)
        status = report.status
    else:
        print(f"unknown fmri solver {args.solver!r}", file=sys.stderr)
        return 1
    _write_text(out / f"report_{args.solver}.json", report.to_json())
    wt = metrics.threshold_solution(w) if np.any(w) else w
    q = int(np.prod(grid))
    density = 100.0 * np.count_nonzero(wt) / q
    _write_csv(out / "scores.csv", ["objective", "density_pct"],
               [[inst.original_objective(w), density]])
    return _exit_code(status)


def _cmd_restore(args) -> int:
    if args.image in ("squares", "disk"):
        img = builtin_image(args.image, args.size)
    else:
        pixels, maxval = read_pgm(args.image)
        img = pixels / maxval
    kernel = _make_kernel(args, img.shape)
    inst, wbar = gen_blur_instance(img, kernel, args.peak, args.background,
                                   args.seed, lam=getattr(args, "lam"),
                                   noise=not args.no_noise)
    prog = build_poisson_tv(inst)
    n = wbar.size
    # interior start: observed counts (floored away from zero) for w, slacks
    # bracketing the initial TV field
    w0 = np.maximum(inst.observed - inst.background, 1e-2 * max(1.0, inst.observed.mean()))
    Lw0 = make_tv_operator(inst.blur.grid).apply(w0)
    x0 = np.concatenate([w0, np.maximum(Lw0, 0) + 1.0, np.maximum(-Lw0, 0) + 1.0])
    opts = _solver_options(args, linear_solver="minres-augmented",
                           htilde_choice=args.htilde, dropping=True,
                           eps_drop=args.eps_drop if args.eps_drop is not None else 1e-6,
                           x0=x0)
    (x, _, _), report = ippmm.solve(prog, opts)
    w = prog.extract(x)
    out = Path(args.out)
    _write_text(out / "report_ippmm.json", report.to_json())
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "restored.pgm", 255.0 * w.reshape(img.shape) / args.peak)
    rmse, psnr, ms = metrics.image_scores(w, wbar, shape=img.shape)
    _write_csv(out / "scores.csv", ["rmse", "psnr_db", "mssim"],
               [[rmse, float(psnr), ms]])
    return _exit_code(report.status)


def _cmd_classify(args) -> int:
    inst, wbar, test = gen_classification(args.n, args.s, args.separation,
                                          args.sparsity, args.seed,
                                          test_fraction=args.test_fraction)
    out = Path(args.out)
    if args.solver == "ippmm":
        prog = build_logistic_l1(inst)
        opts = _solver_options(args, linear_solver="minres-augmented",
                               htilde_choice="diag-h", dropping=True,
                               eps_drop=args.eps_drop if args.eps_drop is not None else 1e-6)
        (x, _, _), report = ippmm.solve(prog, opts)
        w = prog.extract(x)
        status = report.status
    elif args.solver == "admm":
        w, report = baselines.admm_solve(inst, time_budget=args.budget_seconds)
        status = report.status
    else:
        print(f"unknown classify solver {args.solver!r}", file=sys.stderr)
        return 1
    _write_text(out / f"report_{args.solver}.json", report.to_json())
    wt = metrics.threshold_solution(w) if np.any(w) else w
    wt_feat = wt[:args.s]
    recovered = np.flatnonzero(wt_feat)
    planted = np.flatnonzero(wbar)
    recovery = (100.0 * len(set(recovered) & set(planted)) / max(1, len(planted)))
    rows = [["train", _accuracy(inst.design(), inst.labels, wt),
             100.0 * np.count_nonzero(wt_feat) / args.s, recovery]]
    if test is not None:
        Dte, gte = test
        Dte = np.hstack([Dte, np.ones((Dte.shape[0], 1))])
        rows.append(["test", _accuracy(Dte, gte, wt),
                     100.0 * np.count_nonzero(wt_feat) / args.s, recovery])
    _write_csv(out / "scores.csv",
               ["split", "accuracy_pct", "density_pct", "support_recovery_pct"],
               rows)
    return _exit_code(status)


def _accuracy(D, labels, w) -> float:
    pred = np.sign(D @ w)
    pred[pred == 0] = 1.0
    return 100.0 * float(np.mean(pred == labels))


def _cmd_bench(args) -> int:
    solvers = args.solvers.split(",")
    out = Path(args.out)
    rows = []
    worst = 0
    if args.family == "portfolio":
        inst = gen_portfolio(args.s, args.m, args.seed, args.tau1, args.tau2)
        prog = build_portfolio_qp(inst)
        for name in solvers:
            if name == "ippmm":
                opts = _solver_options(args, linear_solver="direct-augmented",
                                       dropping=True)
                (x, _, _), rep = ippmm.solve(prog, opts)
                obj = inst.original_objective(prog.extract(x))
                row = [name, rep.status, rep.iterations, rep.time_s, obj]
            elif name == "asb":
                w, rep = baselines.asb_chol_solve(
                    inst, tol=args.tol or 1e-6, time_budget=args.budget_seconds)
                row = [name, rep.status, rep.iterations, rep.time_s,
                       inst.original_objective(w)]
            else:
                print(f"unknown bench solver {name!r}", file=sys.stderr)
                return 1
            _write_text(out / f"report_{name}.json", rep.to_json())
            rows.append(row)
            worst = max(worst, _exit_code(row[1]))
    elif args.family == "fmri":
        inst, _ = gen_fused_lasso(args.s, _parse_grid(args.grid), args.seed,
                                  args.tau1, args.tau2)
        prog = build_fused_lasso_ls(inst)
        for name in solvers:
            if name == "ippmm":
                opts = _solver_options(args, linear_solver="pcg-normal",
                                       precond="fmri-block", dropping=True,
                                       eps_drop=1e-6)
                (x, _, _), rep = ippmm.solve(prog, opts)
                w = prog.extract(x)
            elif name == "fista":
                w, rep = baselines.fista_solve(inst, time_budget=args.budget_seconds)
            elif name == "admm":
                w, rep = baselines.admm_solve(inst, time_budget=args.budget_seconds)
            else:
                print(f"unknown bench solver {name!r}", file=sys.stderr)
                return 1
            _write_text(out / f"report_{name}.json", rep.to_json())
            rows.append([name, rep.status, rep.iterations, rep.time_s,
                         inst.original_objective(w)])
            worst = max(worst, _exit_code(rows[-1][1]))
    else:
        print(f"unknown bench family {args.family!r}", file=sys.stderr)
        return 1
    _write_csv(out / "bench.csv",
               ["solver", "status", "iters", "time_s", "objective"], rows)
    return worst


def _cmd_spectest(args) -> int:
    grid = _parse_grid(args.grid)
    rho = delta = 1e-2
    if args.family == "fmri":
        inst, _ = gen_fused_lasso(args.s, grid, args.seed)
        prog = build_fused_lasso_ls(inst)
        x = np.ones(prog.n)
        gdiag = prog.hess_diag(x) + 1.0 + rho  # unit point: z/x = 1
        rep = precond.fmri_spectral_report(gdiag, prog.A, prog.row_split,
                                           rho, delta)
        eigs = rep.eigenvalues
        doc = rep.to_dict()
        doc["interval_ok"] = bool(eigs.min() >= rep.chi - 1e-10
                                  and eigs.max() <= 2.0 + 1e-10)
    elif args.family == "poisson":
        img = builtin_image("squares", int(np.sqrt(np.prod(grid))) if len(grid) != 2
                            else grid[0])
        kernel = BlurKernel("gaussian", img.shape, {"sigma": 1.0})
        inst, _ = gen_blur_instance(img, kernel, 50.0, 1.0, args.seed,
                                    noise=False)
        prog = build_poisson_tv(inst)
        x = np.ones(prog.n)
        shift = 1.0 + rho
        H = np.column_stack([prog.hess_action(x, e)
                             for e in np.eye(prog.n)]) + shift * np.eye(prog.n)
        htilde = prog.hess_diag_cheap(x) + shift
        rep = precond.aug_spectral_report(H, prog.A, htilde, delta)
        eigs = rep.eigenvalues
        doc = rep.to_dict()
        neg = eigs[eigs < 0]
        pos = eigs[eigs > 0]
        tol = 1e-8
        doc["interval_ok"] = bool(
            np.all(neg >= -rep.beta_h - 1.0 - tol)
            and np.all(neg <= -rep.alpha_h + tol)
            and np.all(pos >= 1.0 / (1.0 + rep.beta_h) - tol)
            and np.all(pos <= 1.0 + tol))
    else:
        print(f"unknown spectest family {args.family!r}", file=sys.stderr)
        return 1
    _write_text(Path(args.out) / "spectral.json", json.dumps(doc, indent=2))
    return 0 if doc["interval_ok"] else 2


# ---------------------------------------------------------------------------
# Argument parsing


def _parse_grid(text) -> tuple:
    try:
        dims = tuple(int(part) for part in str(text).lower().split("x"))
    except ValueError:
        raise ParseError(f"bad grid spec {text!r}; expected like 4x4 or 2x2x2")
    if not dims or any(d < 2 for d in dims):
        raise ParseError(f"grid dimensions must all be >= 2, got {text!r}")
    return dims


def _make_kernel(args, shape) -> BlurKernel:
    if args.blur == "gaussian":
        params = {"sigma": args.sigma}
    elif args.blur == "motion":
        params = {"length": args.len, "angle": args.angle}
    elif args.blur == "out-of-focus":
        params = {"radius": args.radius}
    else:
        params = {}
    return BlurKernel(args.blur, tuple(shape), params)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--eps-drop", dest="eps_drop", type=float, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--out", default=".")
    p.add_argument("--config", default=None,
                   help="key=value file; values become flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseipm")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("portfolio", help="multi-period portfolio selection")
    _add_common(p)
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--tau1", type=float, default=1e-2)
    p.add_argument("--tau2", type=float, default=1e-2)
    p.add_argument("--trans-eps", dest="trans_eps", type=float, default=1e-4)
    p.add_argument("--solver", default="ippmm", choices=["ippmm", "asb"])

    p = sub.add_parser("fmri", help="fused-lasso least-squares classification")
    _add_common(p)
    p.add_argument("--s", type=int, default=30)
    p.add_argument("--grid", default="4x4x4")
    p.add_argument("--tau1", type=float, default=1e-1)
    p.add_argument("--tau2", type=float, default=1e-1)
    p.add_argument("--solver", default="ippmm",
                   choices=["ippmm", "fista", "admm"])
    p.add_argument("--budget-seconds", dest="budget_seconds", type=float,
                   default=None)

    p = sub.add_parser("restore", help="Poisson image restoration")
    _add_common(p)
    p.add_argument("--image", default="squares",
                   help="builtin pattern name or PGM path")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--blur", default="gaussian",
                   choices=["gaussian", "motion", "out-of-focus", "identity"])
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--len", type=float, default=5.0)
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--peak", type=float, default=100.0)
    p.add_argument("--background", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=5e-3)
    p.add_argument("--htilde", default="u-squared",
                   choices=["u-squared", "diag-h"])
    p.add_argument("--no-noise", action="store_true")

    p = sub.add_parser("classify", help="l1-regularized logistic regression")
    _add_common(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--s", type=int, default=50)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--sparsity", type=float, default=0.1)
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   default=0.25)
    p.add_argument("--solver", default="ippmm", choices=["ippmm", "admm"])
    p.add_argument("--budget-seconds", dest="budget_seconds", type=float,
                   default=None)

    p = sub.add_parser("bench", help="run several solvers on one instance")
    _add_common(p)
    p.add_argument("--family", default="portfolio",
                   choices=["portfolio", "fmri"])
    p.add_argument("--solvers", default="ippmm,asb")
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--tau1", type=float, default=1e-2)
    p.add_argument("--tau2", type=float, default=1e-2)
    p.add_argument("--budget-seconds", dest="budget_seconds", type=float,
                   default=None)

    p = sub.add_parser("spectest", help="preconditioner eigenvalue check")
    _add_common(p)
    p.add_argument("--family", default="fmri", choices=["fmri", "poisson"])
    p.add_argument("--s", type=int, default=6)
    p.add_argument("--grid", default="3x3")
    return parser


_HANDLERS = {
    "portfolio": _cmd_portfolio,
    "fmri": _cmd_fmri,
    "restore": _cmd_restore,
    "classify": _cmd_classify,
    "bench": _cmd_bench,
    "spectest": _cmd_spectest,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # a config file provides defaults; explicit flags still win
    if "--config" in argv:
        try:
            cfg = parse_config(argv[argv.index("--config") + 1])
        except (IndexError, OSError, ParseError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        extra = []
        for key, val in cfg.items():
            extra += [f"--{key.replace('_', '-')}", val]
        argv = argv[:1] + extra + argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _HANDLERS[args.subcommand](args)
    except (ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
