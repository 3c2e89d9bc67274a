"""Uniform-in-eps moments and Galerkin refinement on the default linear model."""

import argparse

from msbl.coefficients import get_model
from msbl.experiments import galerkin_refinement_check, moment_check
from msbl.integrators import SimParams
from msbl.spectral import SineField


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m-ref", type=int, default=64)
    ap.add_argument("--paths", type=int, default=200)
    args = ap.parse_args()
    model = get_model("linear_gaussian_default")

    mom = moment_check(model, SineField.basis(1, 32), SineField.zeros(32), [2.0**-2, 2.0**-4, 2.0**-6],
                       SimParams(n_paths=args.paths))
    for e, sx, sy, syp in zip(mom.eps_grid, mom.sup_x, mom.sup_y_mean, mom.sup_y_path):
        print(f"eps={e:<9.5g} E sup|X|^2={sx:.5f}  sup E|Y|^2={sy:.5f}  E sup|Y|^2={syp:.5f}")
    print(f"ratios: X {mom.ratio_x:.4f}, Y {mom.ratio_y:.4f}  passed={mom.passed}")

    gal = galerkin_refinement_check(model, 2.0**-4, SimParams(n_paths=50), [8, 16, 32], m_ref=args.m_ref)
    for m, e, se in zip(gal.m_list, gal.errors, gal.std_errs):
        print(f"m={m:<3d} error vs m_ref={gal.m_ref}: {e:.4e} +- {se:.1e}")
    print(f"decreasing={gal.decreasing}")


if __name__ == "__main__":
    main()
