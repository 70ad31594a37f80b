#!/usr/bin/env python3
"""Solve covlmi .dat-s exports with an independent SDP solver.

Reads SDPA sparse files (dual form: sum_i F_i x_i - F_0 >= 0, minimize c'x),
solves them with cvxpy and prints one line per file:

    <path> <feasible|infeasible> <t>

where t is the optimal margin (the last variable). A file counts as feasible
when t exceeds the largest strictness shift found in its comments by more than
--tol. Exit status is 0 when every file was solved, 1 otherwise.
"""

import argparse
import re
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    eps = 0.0
    data = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line.startswith("*"):
                m = re.search(r"\beps\s+(\S+)", line)
                if m:
                    eps = max(eps, float(m.group(1)))
                continue
            if not line or line.startswith('"'):
                continue
            data.append(line.replace(",", " ").replace("{", " ").replace("}", " ").split())
    m = int(data[0][0])
    nblocks = int(data[1][0])
    sizes = [int(s) for s in data[2][:nblocks]]
    c = np.array([float(v) for v in data[3][:m]])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for row in data[4:]:
        k, b, i, j, v = int(row[0]), int(row[1]) - 1, int(row[2]) - 1, int(row[3]) - 1, float(row[4])
        mats[k][b][i, j] = v
        mats[k][b][j, i] = v
    return c, sizes, mats, eps


def solve(path, solver):
    c, sizes, mats, eps = read_sdpa(path)
    m = len(c)
    x = cp.Variable(m)
    cons = []
    for b, s in enumerate(sizes):
        expr = -mats[0][b] + sum(x[k - 1] * mats[k][b] for k in range(1, m + 1) if np.any(mats[k][b]))
        if s < 0:
            cons.append(cp.diag(expr) >= 0)
        else:
            cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"{path}: solver status {prob.status}")
    return float(x.value[-1]), eps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("files", nargs="+")
    ap.add_argument("--solver", default="CLARABEL")
    ap.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args()
    ok = True
    for path in args.files:
        try:
            t, eps = solve(path, args.solver)
        except Exception as e:  # report and keep going
            print(f"{path} error {e}", file=sys.stderr)
            ok = False
            continue
        verdict = "feasible" if t > eps + args.tol else "infeasible"
        print(f"{path} {verdict} {t!r}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
