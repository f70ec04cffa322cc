#!/usr/bin/env python3
"""Free-MPS MILP solver on SciPy's HiGHS interface.

Reads a free-format MPS file, solves it with scipy.optimize.milp, and
writes a CBC-style solution file:

    Optimal - objective value 3.25
          0 x            3.25           0

Usage:
    python3 solve_mps.py model.mps --out solution.txt \
        [--time-limit SECONDS] [--gap REL_GAP]

Supported MPS subset: NAME, ROWS (N/L/G/E), COLUMNS with INTORG/INTEND
markers, RHS (including an objective-row entry interpreted as the negated
objective constant), RANGES-free, BOUNDS (LO/UP/FX/BV/MI/PL/FR), ENDATA.
"""
import argparse
import sys

import numpy as np
from scipy.optimize import LinearConstraint, milp
from scipy.sparse import lil_matrix


def parse_mps(path):
    rows = {}          # name -> (sense, index); sense in "LGE"
    row_order = []
    obj_row = None
    cols = {}          # name -> index
    col_order = []
    integrality = {}
    entries = []       # (row_name, col_name, value)
    obj = {}           # col_name -> value
    rhs = {}
    obj_constant = 0.0
    bounds = {}        # col_name -> [lo, hi]

    section = None
    in_integer = False
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line[0].isspace():
                tok = line.split()
                section = tok[0].upper()
                continue
            tok = line.split()
            if section == "ROWS":
                sense, name = tok[0].upper(), tok[1]
                if sense == "N":
                    if obj_row is None:
                        obj_row = name
                    continue
                rows[name] = (sense, len(row_order))
                row_order.append(name)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1] == "'MARKER'":
                    in_integer = tok[2] == "'INTORG'"
                    continue
                name = tok[0]
                if name not in cols:
                    cols[name] = len(col_order)
                    col_order.append(name)
                    integrality[name] = 1 if in_integer else 0
                    bounds.setdefault(name, [0.0, np.inf])
                for rname, val in zip(tok[1::2], tok[2::2]):
                    v = float(val)
                    if rname == obj_row:
                        obj[name] = obj.get(name, 0.0) + v
                    else:
                        entries.append((rname, name, v))
            elif section == "RHS":
                for rname, val in zip(tok[1::2], tok[2::2]):
                    if rname == obj_row:
                        obj_constant = -float(val)
                    else:
                        rhs[rname] = float(val)
            elif section == "BOUNDS":
                kind = tok[0].upper()
                name = tok[2]
                b = bounds.setdefault(name, [0.0, np.inf])
                if kind == "LO":
                    b[0] = float(tok[3])
                elif kind == "UP":
                    b[1] = float(tok[3])
                elif kind == "FX":
                    b[0] = b[1] = float(tok[3])
                elif kind == "BV":
                    b[0], b[1] = 0.0, 1.0
                    integrality[name] = 1
                elif kind == "MI":
                    b[0] = -np.inf
                elif kind == "PL":
                    b[1] = np.inf
                elif kind == "FR":
                    b[0], b[1] = -np.inf, np.inf
    return {
        "rows": rows,
        "row_order": row_order,
        "cols": cols,
        "col_order": col_order,
        "integrality": integrality,
        "entries": entries,
        "obj": obj,
        "rhs": rhs,
        "obj_constant": obj_constant,
        "bounds": bounds,
    }


def solve(parsed, time_limit, gap):
    n = len(parsed["col_order"])
    m = len(parsed["row_order"])
    c = np.zeros(n)
    for name, v in parsed["obj"].items():
        c[parsed["cols"][name]] = v
    integrality = np.array(
        [parsed["integrality"][name] for name in parsed["col_order"]], dtype=int
    )
    lb = np.array([parsed["bounds"][name][0] for name in parsed["col_order"]])
    ub = np.array([parsed["bounds"][name][1] for name in parsed["col_order"]])

    a = lil_matrix((m, n))
    for rname, cname, v in parsed["entries"]:
        sense_idx = parsed["rows"].get(rname)
        if sense_idx is None:
            continue
        a[sense_idx[1], parsed["cols"][cname]] += v
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for rname, (sense, idx) in parsed["rows"].items():
        b = parsed["rhs"].get(rname, 0.0)
        if sense == "L":
            hi[idx] = b
        elif sense == "G":
            lo[idx] = b
        else:
            lo[idx] = hi[idx] = b

    constraints = LinearConstraint(a.tocsc(), lo, hi) if m else ()
    from scipy.optimize import Bounds

    res = milp(
        c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options={"time_limit": time_limit, "mip_rel_gap": gap, "disp": False},
    )
    return res


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("mps")
    ap.add_argument("--out", required=True)
    ap.add_argument("--time-limit", type=float, default=1e8)
    ap.add_argument("--gap", type=float, default=1e-9)
    args = ap.parse_args()

    parsed = parse_mps(args.mps)
    res = solve(parsed, args.time_limit, args.gap)

    lines = []
    if res.status == 0 and res.x is not None:
        obj = float(res.fun) + parsed["obj_constant"]
        lines.append(f"Optimal - objective value {obj:.12g}")
        for i, name in enumerate(parsed["col_order"]):
            lines.append(f"{i:7d} {name} {res.x[i]:.12g} 0")
        print(f"Integer solution of {obj:.12g} found (0.0 seconds)")
    elif res.status == 2:
        lines.append("Infeasible - no solution")
    elif res.status == 3:
        lines.append("Unbounded")
    elif res.status == 1 and res.x is not None:
        obj = float(res.fun) + parsed["obj_constant"]
        lines.append(f"Stopped on time limit - objective value {obj:.12g}")
        for i, name in enumerate(parsed["col_order"]):
            lines.append(f"{i:7d} {name} {res.x[i]:.12g} 0")
    else:
        lines.append("Stopped - no solution")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
