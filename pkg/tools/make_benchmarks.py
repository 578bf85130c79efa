#!/usr/bin/env python3
"""Generate the bundled synthetic benchmark suite under data/.

Five instances in the OR-Library "port" text format, sized like the public
suite (31, 85, 89, 98, 225 assets), each with a 100-point reference
frontier ("portef" format: one ``R V`` line per point).

Markets are sampled from a deterministic market+sector factor model, so
covariances are positive definite and realistically clustered.  Each
reference frontier is the exact solution of

    min x' S x   s.t.  sum x = 1,  r' x >= R,  0 <= x <= 1

computed per grid return by an interior-point solve (cvxopt) followed by an
active-set KKT polish to near machine precision.  The covariance scale of
every instance is calibrated so the mean reference variance matches the
published value for the same-size public instance, which keeps costs and
penalty dynamics in a realistic range.

Usage:  python3 tools/make_benchmarks.py [--out data]

Requires cvxopt (dev-only dependency); the shipped package never solves
QPs.  Regenerating with the same seeds reproduces the files byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from portsel.instance import parse_instance  # noqa: E402

# (file suffix, asset count, sampler seed, target mean reference variance)
SUITE = [
    ("1", 31, 20250801, 1.55936e-3),
    ("2", 85, 20250802, 0.412213e-3),
    ("3", 89, 20250803, 0.454259e-3),
    ("4", 98, 20250804, 0.502038e-3),
    ("5", 225, 20250805, 0.458285e-3),
]

N_POINTS = 100
N_SECTORS = 10


def sample_market(n: int, rng: np.random.Generator):
    """Heavy-tailed, cluster-heavy market with signed hedge exposures.

    Volatilities are lognormal with a fat tail, sector sizes are uneven,
    and a strong signed factor makes balanced books valuable: realistic
    mess that separates exhaustive search from single-move descent.
    """
    beta = rng.uniform(0.15, 0.75, n)
    sizes = np.maximum(1, (n * rng.dirichlet(np.full(N_SECTORS, 0.7)))).astype(int)
    sector = np.repeat(np.arange(N_SECTORS), sizes)[:n]
    if sector.size < n:
        sector = np.concatenate([sector, rng.integers(0, N_SECTORS, n - sector.size)])
    gamma = rng.uniform(0.2, 0.52, n)
    hedge = rng.choice([-1.0, 1.0], n) * rng.uniform(0.22, 0.55, n)
    nrm = beta**2 + gamma**2 + hedge**2
    shrink = np.sqrt(np.minimum(1.0, 0.88 / nrm))
    beta, gamma, hedge = beta * shrink, gamma * shrink, hedge * shrink
    corr = np.outer(beta, beta) + np.outer(hedge, hedge)
    same = sector[:, None] == sector[None, :]
    corr = corr + same * np.outer(gamma, gamma)
    np.fill_diagonal(corr, 1.0)

    sd = np.clip(np.exp(rng.normal(np.log(0.045), 0.5, n)), 0.02, 0.14)
    returns = 0.0004 + 0.05 * sd + rng.normal(0.0, 0.001, n)
    returns = np.clip(returns, -0.003, 0.012)
    # unique maximum so the top grid return has a unique optimal portfolio
    top = int(np.argmax(returns))
    returns[top] += 1e-5
    return returns, sd, corr


def write_port(path: Path, returns: np.ndarray, sd: np.ndarray, corr: np.ndarray) -> None:
    n = returns.size
    lines = [str(n)]
    for i in range(n):
        lines.append(f"{returns[i]:.17g} {sd[i]:.17g}")
    for i in range(n):
        for j in range(i, n):
            lines.append(f"{i + 1} {j + 1} {corr[i, j]:.17g}")
    path.write_text("\n".join(lines) + "\n")


def _solve_active_set(cov, returns, r_target, low, high, with_return):
    """Equality-constrained solve for a fixed active set.

    Returns (x, lam0, lam1) or None when the reduced system is singular.
    """
    n = cov.shape[0]
    f = np.flatnonzero(~(low | high))
    h_idx = np.flatnonzero(high)
    rows = [np.ones(f.size)]
    rhs_tail = [1.0 - float(h_idx.size)]
    if with_return:
        rows.append(returns[f])
        rhs_tail.append(r_target - float(np.sum(returns[h_idx])))
    m = len(rows)
    kkt = np.zeros((f.size + m, f.size + m))
    kkt[:f.size, :f.size] = 2.0 * cov[np.ix_(f, f)]
    for i, row in enumerate(rows):
        kkt[:f.size, f.size + i] = row
        kkt[f.size + i, :f.size] = row
    rhs = np.concatenate([
        -2.0 * cov[np.ix_(f, h_idx)].sum(axis=1) if h_idx.size else np.zeros(f.size),
        rhs_tail,
    ])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    x = np.zeros(n)
    x[h_idx] = 1.0
    x[f] = sol[:f.size]
    lam1 = float(sol[f.size + 1]) if with_return else 0.0
    return x, float(sol[f.size]), lam1


def _kkt_polish(cov, returns, r_target, x0):
    """Active-set refinement of an interior-point solution.

    Classifies assets as at-bound/free from the current iterate, solves the
    reduced KKT system exactly, and re-classifies until the KKT conditions
    hold; falls back to the unpolished point if that fails.
    """
    x = x0.copy()
    for _ in range(16):
        low = x < 1e-7
        high = x > 1.0 - 1e-7
        if not (~(low | high)).any():
            return x0
        solved = None
        for with_return in (True, False):
            out = _solve_active_set(cov, returns, r_target, low, high, with_return)
            if out is None:
                return x0
            cand, lam0, lam1 = out
            if with_return and lam1 > 1e-12:
                continue  # constraint should be slack at this active set
            if not with_return and float(returns @ cand) < r_target - 1e-14:
                solved = None
                break
            solved = (cand, lam0, lam1)
            break
        if solved is None:
            return x0
        cand, lam0, lam1 = solved
        free = ~(low | high)
        if np.any(cand[free] < -1e-12) or np.any(cand[free] > 1.0 + 1e-12):
            x = np.clip(cand, 0.0, 1.0)  # free variable hit a bound: reclassify
            continue
        grad = 2.0 * cov @ cand + lam0 + lam1 * returns
        entering_low = low & (grad < -1e-9)
        entering_high = high & (grad > 1e-9)
        if entering_low.any() or entering_high.any():
            x = np.clip(cand, 0.0, 1.0)
            x[entering_low] = 1e-6   # release from the bound and re-solve
            x[entering_high] = 1.0 - 1e-6
            continue
        return np.clip(cand, 0.0, 1.0)
    return x0


def solve_uef_point(cov, returns, r_target) -> float:
    import cvxopt

    n = cov.shape[0]
    if r_target >= float(np.max(returns)):
        return float(cov[np.argmax(returns), np.argmax(returns)])
    cvxopt.solvers.options.update(dict(show_progress=False, abstol=1e-10,
                                       reltol=1e-10, feastol=1e-10, maxiters=200))
    p_mat = cvxopt.matrix(2.0 * cov)
    q = cvxopt.matrix(np.zeros(n))
    g = cvxopt.matrix(np.vstack([-returns[None, :], -np.eye(n), np.eye(n)]))
    h = cvxopt.matrix(np.concatenate([[-r_target], np.zeros(n), np.ones(n)]))
    a = cvxopt.matrix(np.ones((1, n)))
    b = cvxopt.matrix(np.ones(1))
    sol = cvxopt.solvers.qp(p_mat, q, g, h, a, b)
    x = np.array(sol["x"]).ravel()
    x = _kkt_polish(cov, returns, r_target, x)
    return float(x @ cov @ x)


def gmv_return(cov, returns) -> float:
    """Return of the bounded minimum-variance portfolio."""
    import cvxopt

    n = cov.shape[0]
    cvxopt.solvers.options.update(dict(show_progress=False, abstol=1e-10,
                                       reltol=1e-10, feastol=1e-10, maxiters=200))
    sol = cvxopt.solvers.qp(
        cvxopt.matrix(2.0 * cov), cvxopt.matrix(np.zeros(n)),
        cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)])),
        cvxopt.matrix(np.concatenate([np.zeros(n), np.ones(n)])),
        cvxopt.matrix(np.ones((1, n))), cvxopt.matrix(np.ones(1)),
    )
    x = np.array(sol["x"]).ravel()
    return float(returns @ x)


def solve_frontier(cov, returns, grid) -> np.ndarray:
    return np.array([solve_uef_point(cov, returns, float(r)) for r in grid])


def build_one(out_dir: Path, suffix: str, n: int, seed: int, target_mean: float) -> None:
    rng = np.random.default_rng(seed)
    returns, sd, corr = sample_market(n, rng)
    port = out_dir / f"port{suffix}.txt"
    portef = out_dir / f"portef{suffix}.txt"

    for _ in range(4):
        write_port(port, returns, sd, corr)
        inst = parse_instance(port.read_text())
        grid = np.linspace(gmv_return(inst.cov, inst.returns),
                           float(np.max(inst.returns)), N_POINTS)
        variances = solve_frontier(inst.cov, inst.returns, grid)
        mean = float(np.mean(variances))
        if abs(mean - target_mean) < 1e-10:
            break
        sd = sd * np.sqrt(target_mean / mean)
    else:
        raise RuntimeError(f"instance {suffix}: calibration did not converge ({mean})")

    assert np.all(np.diff(grid) > 0)
    assert np.all(variances > 0)
    assert np.all(np.diff(variances) > -1e-15)
    assert abs(mean - target_mean) < 1e-9, (mean, target_mean)
    portef.write_text(
        "".join(f"{r:.17g} {v:.17g}\n" for r, v in zip(grid, variances)))
    print(f"port{suffix}: n={n} grid=[{grid[0]:.6g}, {grid[-1]:.6g}] "
          f"mean_uef={mean:.9e} (target {target_mean:.9e})")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--only", default=None, help="build just one suffix, e.g. 4")
    args = ap.parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for suffix, n, seed, target in SUITE:
        if args.only and suffix != args.only:
            continue
        build_one(out_dir, suffix, n, seed, target)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
