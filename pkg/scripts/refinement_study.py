"""Certificate residuals on the canonical 1D bump pair as the grid is refined.

    python3 scripts/refinement_study.py --alpha 0.8 --levels 32 64 128
"""
import argparse

from walpha.certify import certify
from walpha.fixtures import bump_pair
from walpha.grid import TorusGrid
from walpha.solver import SolveConfig, solve_geodesic

FIELDS = ("gap_rel", "flux_residual_rel", "hj_residual_rel", "transversality_residual",
          "speed_variation_rel", "homogeneity_residual", "esssup_variation", "linfty_excess")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.8)
    ap.add_argument("--pair", type=int, default=0)
    ap.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--tol-gap", type=float, default=1e-5)
    args = ap.parse_args()

    print("n,nt,W2,iterations," + ",".join(FIELDS))
    for n in args.levels:
        grid = TorusGrid(1, n, n // 2)
        rho0, rho1 = bump_pair(grid, args.pair)
        rho, w, phi, rep = solve_geodesic(rho0, rho1, args.alpha, grid, SolveConfig(tol_gap=args.tol_gap))
        c = certify(rho, w, phi, rho0, rho1, args.alpha, grid).to_dict()
        print(f"{n},{n // 2},{rep.W2:.10g},{rep.iterations}," + ",".join(f"{c[k]:.3e}" for k in FIELDS))


if __name__ == "__main__":
    main()
