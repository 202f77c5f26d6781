"""Regenerates the bundled MATPOWER cases from PYPOWER's copies.

Usage: python3 scripts/make_cases.py crates/core/cases
"""
import sys
from pathlib import Path

import numpy as np
from pypower.case14 import case14
from pypower.case118 import case118

# case118_study: which lines get a thermal limit, as a multiple of the
# stock-dispatch DC flow.
STUDY_TOP_LINES = 20
STUDY_KAPPA = 1.0


def linear_costs(ppc, midpoint):
    """Replaces quadratic costs by their slope; returns rows 2 0 0 2 c 0."""
    g, cc = ppc["gen"], ppc["gencost"]
    rows = []
    for k in range(len(g)):
        c2, c1 = cc[k, 4], cc[k, 5]
        p = midpoint(g[k])
        rows.append([2, 0, 0, 2, c1 + 2 * c2 * p, 0])
    return np.array(rows)


def fmt(v):
    if float(v).is_integer():
        return str(int(v))
    return repr(float(round(v, 10)))


def write(path, name, ppc, header):
    out = [f"function mpc = {name}", *(f"% {h}" for h in header), "",
           "mpc.version = '2';", f"mpc.baseMVA = {fmt(ppc['baseMVA'])};", ""]
    cols = {"bus": 13, "gen": 10, "branch": 13, "gencost": None}
    for key, ncol in cols.items():
        out.append(f"mpc.{key} = [")
        for row in ppc[key]:
            vals = row if ncol is None else row[:ncol]
            out.append("\t" + "\t".join(fmt(v) for v in vals) + ";")
        out.append("];")
        out.append("")
    Path(path).write_text("\n".join(out))


def dc_flows(ppc):
    bus, br, g = ppc["bus"], ppc["branch"], ppc["gen"]
    n = len(bus)
    ids = {int(b[0]): k for k, b in enumerate(bus)}
    fi = np.array([ids[int(x)] for x in br[:, 0]])
    tj = np.array([ids[int(x)] for x in br[:, 1]])
    b = 1 / br[:, 3]
    bm = np.zeros((n, n))
    for l in range(len(br)):
        i, j = fi[l], tj[l]
        bm[i, i] += b[l]
        bm[j, j] += b[l]
        bm[i, j] -= b[l]
        bm[j, i] -= b[l]
    p = -bus[:, 2].copy()
    for k in range(len(g)):
        p[ids[int(g[k, 0])]] += g[k, 1]
    ref = [k for k, row in enumerate(bus) if row[1] == 3][0]
    p[ref] -= p.sum()
    keep = [k for k in range(n) if k != ref]
    th = np.zeros(n)
    th[keep] = np.linalg.solve(bm[np.ix_(keep, keep)], p[keep] / ppc["baseMVA"])
    return b * (th[fi] - th[tj]) * ppc["baseMVA"]


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    mid = lambda g: (g[8] + g[9]) / 2

    # The stock voltage setpoints at buses 6 and 8 exceed Vmax = 1.06.
    p = case14()
    p["gencost"] = linear_costs(p, mid)
    p["bus"][:, 11] = 1.1
    write(out / "case14.m", "case14", p, [
        "IEEE 14-bus system. Quadratic costs replaced by their slope at (Pmin+Pmax)/2.",
        "Vmax raised from 1.06 to 1.10 so the stock PV setpoints (up to 1.09) are within limits."])

    p = case14()
    p["gencost"] = linear_costs(p, mid)
    p["bus"][:, 11] = 1.1
    p["branch"][:, 5] = 0
    p["branch"][2, 5] = 100  # line 2-3
    p["branch"][5, 5] = 10   # line 3-4
    p["gen"][2, 8] = 20      # generator at bus 3
    write(out / "case14_mod.m", "case14_mod", p, [
        "IEEE 14-bus system modified for congestion: line 2-3 limited to 100 MW,",
        "line 3-4 to 10 MW, generator 3 Pmax 20 MW, all other lines unlimited.",
        "Costs are the slope of the stock quadratic costs at (Pmin+Pmax)/2.",
        "Vmax raised from 1.06 to 1.10 so the stock PV setpoints (up to 1.09) are within limits."])

    p = case118()
    p["gencost"] = linear_costs(p, mid)
    write(out / "case118.m", "case118", p, [
        "IEEE 118-bus system. Quadratic costs replaced by their slope at (Pmin+Pmax)/2."])

    p = case118()
    g = p["gen"]
    committed = g[:, 1] > 0
    g[~committed, 8] = 0
    g[~committed, 9] = 0
    # Slopes at (Pmin+Pmax)/2 before the condensers are zeroed would differ;
    # the committed units keep their own midpoint.
    p["gencost"] = linear_costs(p, mid)
    f = dc_flows(p)
    br = p["branch"]
    br[:, 5] = 0
    top = np.argsort(-np.abs(f), kind="stable")[:STUDY_TOP_LINES]
    for l in top:
        br[l, 5] = np.ceil(STUDY_KAPPA * abs(f[l]))
    write(out / "case118_study.m", "case118_study", p, [
        "Reconstructed 118-bus study case. NOT the published study data.",
        f"The {int(committed.sum())} units with positive stock dispatch are committed; the others",
        "are kept as synchronous condensers (Pmin = Pmax = 0).",
        "Costs are the slope of the stock quadratic costs at (Pmin+Pmax)/2.",
        f"The {STUDY_TOP_LINES} lines most loaded under the stock dispatch are limited to",
        f"{STUDY_KAPPA} times that DC flow (MW, rounded up); all other lines are unlimited."])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/cases")
